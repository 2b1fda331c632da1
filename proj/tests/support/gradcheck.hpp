#pragma once

// Central finite-difference oracle for the reverse-mode engine. Test-only:
// it evaluates the loss purely through forward values.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "dlab/ad/tensor.hpp"

namespace dlab::testing {

struct GradCheckResult {
  double worst_relative_error = 0.0;
  std::size_t worst_input = 0;
};

// ||a - n|| / max(||a|| + ||n||, floor), per input tensor; reports the worst.
inline GradCheckResult gradcheck(
    const std::function<ad::Tensor<double>(const std::vector<ad::Tensor<double>>&)>& loss_fn,
    std::vector<ad::Tensor<double>> inputs, double step = 1e-6) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  ad::backward(loss_fn(inputs));

  GradCheckResult result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto analytic = std::vector<double>(inputs[k].grad().begin(), inputs[k].grad().end());
    std::vector<double> numeric(analytic.size());
    auto values = inputs[k].values_mut();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      values[i] = orig + step;
      const double up = loss_fn(inputs).item();
      values[i] = orig - step;
      const double down = loss_fn(inputs).item();
      values[i] = orig;
      numeric[i] = (up - down) / (2 * step);
    }
    double diff = 0, na = 0, nn = 0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      na += analytic[i] * analytic[i];
      nn += numeric[i] * numeric[i];
    }
    const double rel = std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nn), 1e-10);
    if (rel > result.worst_relative_error) {
      result.worst_relative_error = rel;
      result.worst_input = k;
    }
  }
  return result;
}

inline ad::Tensor<double> random_tensor(ad::Shape shape, std::mt19937_64& rng, double lo = -1.0,
                                        double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(ad::shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return ad::Tensor<double>(std::move(shape), std::move(v));
}

}  // namespace dlab::testing
