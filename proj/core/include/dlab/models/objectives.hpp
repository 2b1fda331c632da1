#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dlab/ad/ops.hpp"

namespace dlab::objectives {

using ad::Tensor;

inline constexpr double kSelectivityEps = 1e-8;
inline constexpr double kDefaultLambda = 0.05;
inline constexpr double kBaselineDecay = 0.99;

// Squared L2 distance summed over every element; for a single image this is
// ||x - x_hat||^2. Throws ad::ShapeError on mismatched shapes.
template <typename T>
Tensor<T> reconstruction_error(const Tensor<T>& x, const Tensor<T>& x_hat);

// ||x - (c + u)||^2 summed over every element.
template <typename T>
Tensor<T> dual_reconstruction_error(const Tensor<T>& x, const Tensor<T>& c, const Tensor<T>& u);

// Latents for B base states, each paired with A actions and N sampled next
// states per action.
template <typename T>
struct SelectivityBatch {
  Tensor<T> current;  // [B, K]
  Tensor<T> next;     // [B*A*N, K], ordered (sample, action, draw)
  // [B*A, K]; entry ((b, a), k) is the weight head k puts on action a for
  // base state b. Used as a constant: no gradient flows into it.
  Tensor<T> weights;
  std::size_t actions = 0;
  std::size_t samples = 0;

  std::size_t batch() const { return current.dim(0); }
  std::size_t width() const { return current.dim(1); }
};

// Per-transition terms log(1/K + |dz_k| / (sum_k' |dz_k'| + eps)), [B*A*N, K].
template <typename T>
Tensor<T> transition_terms(const SelectivityBatch<T>& batch, T eps = T(kSelectivityEps));

// Terms summed over the N draws of each (sample, action) pair, [B*A, K].
// Column k of row (b, a) is the selectivity reward of head k for action a.
template <typename T>
Tensor<T> action_returns(const SelectivityBatch<T>& batch, T eps = T(kSelectivityEps));

// Weighted selectivity per base state and head, [B, K]:
// S[b, k] = sum_a weights[(b, a), k] * returns[(b, a), k].
template <typename T>
Tensor<T> selectivity(const SelectivityBatch<T>& batch, T eps = T(kSelectivityEps));

// Same as `selectivity` given precomputed action_returns [B*A, K].
template <typename T>
Tensor<T> weighted_selectivity(const Tensor<T>& returns, const Tensor<T>& weights,
                               std::size_t batch, std::size_t actions);

// Builds SelectivityBatch::weights from per-head action distributions
// ([B, A] each, one per head). Values are copied; the result is a constant.
template <typename T>
Tensor<T> policy_weights(const std::vector<Tensor<T>>& head_probs);

// recon - lambda * sum_k S_k
template <typename T>
Tensor<T> total_loss(const Tensor<T>& recon, const Tensor<T>& selectivity_sum, T lambda);
double total_loss(double recon, std::span<const double> selectivities, double lambda);

struct LossReport {
  double recon = 0.0;
  std::vector<double> selectivity;  // per head, batch mean
  double total = 0.0;
  double lambda = 0.0;
};

// Exponential moving average of a head's reward. The first update sets the
// average to the observed value.
class ReinforceBaseline {
 public:
  explicit ReinforceBaseline(std::size_t heads, double decay = kBaselineDecay);
  double value(std::size_t k) const { return values_.at(k); }
  bool initialized(std::size_t k) const { return seen_.at(k); }
  void update(std::size_t k, double reward);
  std::size_t heads() const { return values_.size(); }

 private:
  double decay_;
  std::vector<double> values_;
  std::vector<bool> seen_;
};

// Score-function surrogate whose gradient is
//   -(1/B) sum_b advantage[b] * grad log pi(action[b]).
// `log_probs` is [B, A] (row-wise log-softmax of one head).
template <typename T>
Tensor<T> reinforce_surrogate(const Tensor<T>& log_probs, std::span<const std::size_t> actions,
                              std::span<const double> advantages);

}  // namespace dlab::objectives
