#include "dlab/ad/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace dlab::ad {

namespace {

template <typename T>
void require_grads(const ParameterStore<T>& params) {
  for (const auto& [name, t] : params)
    if (!t.has_grad()) throw std::invalid_argument("missing gradient for parameter " + name);
}

}  // namespace

template <typename T>
void Adam<T>::step(ParameterStore<T>& params) {
  require_grads(params);
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const T b1 = static_cast<T>(config_.beta1), b2 = static_cast<T>(config_.beta2);
  const T lr = static_cast<T>(config_.lr), eps = static_cast<T>(config_.eps);
  const T inv_c1 = static_cast<T>(1.0 / c1), inv_c2 = static_cast<T>(1.0 / c2);
  for (auto& [name, p] : params) {
    auto& mom = moments_[name];
    auto values = p.values_mut();
    auto grad = p.grad();
    if (mom.m.size() != values.size()) {
      mom.m.assign(values.size(), T(0));
      mom.v.assign(values.size(), T(0));
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T g = grad[i];
      mom.m[i] = b1 * mom.m[i] + (T(1) - b1) * g;
      mom.v[i] = b2 * mom.v[i] + (T(1) - b2) * g * g;
      const T mhat = mom.m[i] * inv_c1;
      const T vhat = mom.v[i] * inv_c2;
      values[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template <typename T>
void Sgd<T>::step(ParameterStore<T>& params) {
  require_grads(params);
  const T lr = static_cast<T>(lr_);
  for (auto& [name, p] : params) {
    auto values = p.values_mut();
    auto grad = p.grad();
    for (std::size_t i = 0; i < values.size(); ++i) values[i] -= lr * grad[i];
  }
}

template class Adam<float>;
template class Adam<double>;
template class Sgd<float>;
template class Sgd<double>;

}  // namespace dlab::ad
