#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "dlab/ad/params.hpp"

namespace dlab::ad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam. Moments are keyed by parameter name and created on
// first use.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // Throws std::invalid_argument if any parameter has no gradient buffer.
  void step(ParameterStore<T>& params);

  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  struct Moments {
    std::vector<T> m;
    std::vector<T> v;
  };
  AdamConfig config_;
  std::uint64_t t_ = 0;
  std::unordered_map<std::string, Moments> moments_;
};

// p <- p - lr * g
template <typename T>
class Sgd {
 public:
  explicit Sgd(double lr) : lr_(lr) {}
  void step(ParameterStore<T>& params);
  double lr() const { return lr_; }

 private:
  double lr_;
};

}  // namespace dlab::ad
