#include "dlab/ad/params.hpp"

#include <stdexcept>

namespace dlab::ad {

template <typename T>
ParameterStore<T>::ParameterStore(const ParameterStore& other) : index_(other.index_) {
  entries_.reserve(other.entries_.size());
  for (const auto& [name, t] : other.entries_) entries_.emplace_back(name, t.clone());
}

template <typename T>
ParameterStore<T>& ParameterStore<T>::operator=(const ParameterStore& other) {
  if (this != &other) {
    ParameterStore copy(other);
    *this = std::move(copy);
  }
  return *this;
}

template <typename T>
Tensor<T>& ParameterStore<T>::add(std::string name, Tensor<T> tensor) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  tensor.set_requires_grad(true);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(tensor));
  return entries_.back().second;
}

template <typename T>
bool ParameterStore<T>::contains(std::string_view name) const {
  return index_.count(std::string(name)) != 0;
}

template <typename T>
const Tensor<T>& ParameterStore<T>::get(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
  return entries_[it->second].second;
}

template <typename T>
Tensor<T>& ParameterStore<T>::get(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
  return entries_[it->second].second;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

template <typename T>
std::size_t ParameterStore<T>::parameter_count(std::string_view prefix) const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_)
    if (std::string_view(name).substr(0, prefix.size()) == prefix) n += t.numel();
  return n;
}

template class ParameterStore<float>;
template class ParameterStore<double>;

}  // namespace dlab::ad
