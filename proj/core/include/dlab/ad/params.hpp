#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dlab/ad/tensor.hpp"

namespace dlab::ad {

// Named trainable tensors in insertion order. Copying a store deep-copies
// every tensor, so two stores never alias.
template <typename T>
class ParameterStore {
 public:
  using Entry = std::pair<std::string, Tensor<T>>;

  ParameterStore() = default;
  ParameterStore(const ParameterStore& other);
  ParameterStore& operator=(const ParameterStore& other);
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  // Registers a parameter; throws std::invalid_argument on a duplicate name.
  Tensor<T>& add(std::string name, Tensor<T> tensor);

  bool contains(std::string_view name) const;
  const Tensor<T>& get(std::string_view name) const;
  Tensor<T>& get(std::string_view name);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

  // Allocates and zeroes every gradient buffer.
  void zero_grad();
  // Total scalar count, optionally restricted to names starting with `prefix`.
  std::size_t parameter_count(std::string_view prefix = {}) const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace dlab::ad
