#include "dlab/models/objectives.hpp"

#include <stdexcept>

namespace dlab::objectives {

template <typename T>
Tensor<T> reconstruction_error(const Tensor<T>& x, const Tensor<T>& x_hat) {
  return ad::sum(ad::square(ad::sub(x, x_hat)));
}

template <typename T>
Tensor<T> dual_reconstruction_error(const Tensor<T>& x, const Tensor<T>& c, const Tensor<T>& u) {
  return reconstruction_error(x, ad::add(c, u));
}

template <typename T>
Tensor<T> transition_terms(const SelectivityBatch<T>& batch, T eps) {
  const std::size_t b = batch.batch(), k = batch.width();
  const std::size_t per_base = batch.actions * batch.samples;
  if (batch.next.rank() != 2 || batch.next.dim(0) != b * per_base || batch.next.dim(1) != k)
    throw ad::ShapeError("selectivity: next latents " + ad::shape_str(batch.next.shape()) +
                         " do not match " + std::to_string(b) + " samples x " +
                         std::to_string(per_base) + " transitions x width " + std::to_string(k));
  const auto diff = ad::abs(ad::sub(batch.next, ad::repeat_rows(batch.current, per_base)));
  const auto denom = ad::broadcast_cols(ad::add_scalar(ad::row_sum(diff), eps), k);
  return ad::log(ad::add_scalar(ad::div(diff, denom), T(1) / static_cast<T>(k)));
}

template <typename T>
Tensor<T> action_returns(const SelectivityBatch<T>& batch, T eps) {
  const auto terms = transition_terms(batch, eps);
  const std::size_t rows = batch.batch() * batch.actions, k = batch.width();
  return ad::sum_dim1(ad::reshape(terms, {rows, batch.samples, k}));
}

template <typename T>
Tensor<T> weighted_selectivity(const Tensor<T>& returns, const Tensor<T>& weights,
                               std::size_t batch, std::size_t actions) {
  const std::size_t k = returns.dim(1);
  if (weights.shape() != ad::Shape{batch * actions, k} || returns.dim(0) != batch * actions)
    throw ad::ShapeError("selectivity: weights " + ad::shape_str(weights.shape()) + " and returns " +
                         ad::shape_str(returns.shape()) + " expected " +
                         ad::shape_str({batch * actions, k}));
  const auto weighted = ad::mul(returns, weights.detach());
  return ad::sum_dim1(ad::reshape(weighted, {batch, actions, k}));
}

template <typename T>
Tensor<T> selectivity(const SelectivityBatch<T>& batch, T eps) {
  const std::size_t rows = batch.batch() * batch.actions, k = batch.width();
  if (batch.weights.shape() != ad::Shape{rows, k})
    throw ad::ShapeError("selectivity: weights " + ad::shape_str(batch.weights.shape()) +
                         " expected " + ad::shape_str({rows, k}));
  return weighted_selectivity(action_returns(batch, eps), batch.weights, batch.batch(),
                              batch.actions);
}

template <typename T>
Tensor<T> policy_weights(const std::vector<Tensor<T>>& head_probs) {
  if (head_probs.empty()) throw ad::ShapeError("policy_weights: no heads");
  const std::size_t k = head_probs.size();
  const std::size_t b = head_probs[0].dim(0), a = head_probs[0].dim(1);
  std::vector<T> w(b * a * k);
  for (std::size_t h = 0; h < k; ++h) {
    if (head_probs[h].shape() != head_probs[0].shape())
      throw ad::ShapeError("policy_weights: heads disagree in shape");
    auto p = head_probs[h].values();
    for (std::size_t i = 0; i < b * a; ++i) w[i * k + h] = p[i];
  }
  return Tensor<T>({b * a, k}, std::move(w));
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& recon, const Tensor<T>& selectivity_sum, T lambda) {
  if (lambda < T(0)) throw std::invalid_argument("lambda must be non-negative");
  return ad::sub(recon, ad::scale(selectivity_sum, lambda));
}

double total_loss(double recon, std::span<const double> selectivities, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("lambda must be non-negative");
  double s = 0.0;
  for (double v : selectivities) s += v;
  return recon - lambda * s;
}

ReinforceBaseline::ReinforceBaseline(std::size_t heads, double decay)
    : decay_(decay), values_(heads, 0.0), seen_(heads, false) {}

void ReinforceBaseline::update(std::size_t k, double reward) {
  if (!seen_.at(k)) {
    values_[k] = reward;
    seen_[k] = true;
    return;
  }
  values_[k] = decay_ * values_[k] + (1.0 - decay_) * reward;
}

template <typename T>
Tensor<T> reinforce_surrogate(const Tensor<T>& log_probs, std::span<const std::size_t> actions,
                              std::span<const double> advantages) {
  const std::size_t b = log_probs.dim(0), a = log_probs.dim(1);
  if (actions.size() != b || advantages.size() != b)
    throw ad::ShapeError("reinforce_surrogate: expected " + std::to_string(b) +
                         " actions and advantages");
  std::vector<T> coeff(b * a, T(0));
  for (std::size_t i = 0; i < b; ++i) {
    if (actions[i] >= a) throw std::out_of_range("reinforce_surrogate: action out of range");
    coeff[i * a + actions[i]] = static_cast<T>(-advantages[i] / static_cast<double>(b));
  }
  return ad::sum(ad::mul(log_probs, Tensor<T>({b, a}, std::move(coeff))));
}

#define DLAB_INSTANTIATE_OBJECTIVES(T)                                                        \
  template Tensor<T> reconstruction_error(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> dual_reconstruction_error(const Tensor<T>&, const Tensor<T>&,            \
                                               const Tensor<T>&);                             \
  template Tensor<T> transition_terms(const SelectivityBatch<T>&, T);                         \
  template Tensor<T> action_returns(const SelectivityBatch<T>&, T);                           \
  template Tensor<T> selectivity(const SelectivityBatch<T>&, T);                              \
  template Tensor<T> weighted_selectivity(const Tensor<T>&, const Tensor<T>&, std::size_t,    \
                                          std::size_t);                                       \
  template Tensor<T> policy_weights(const std::vector<Tensor<T>>&);                           \
  template Tensor<T> total_loss(const Tensor<T>&, const Tensor<T>&, T);                       \
  template Tensor<T> reinforce_surrogate(const Tensor<T>&, std::span<const std::size_t>,      \
                                         std::span<const double>);

DLAB_INSTANTIATE_OBJECTIVES(float)
DLAB_INSTANTIATE_OBJECTIVES(double)

}  // namespace dlab::objectives
