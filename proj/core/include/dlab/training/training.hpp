#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "dlab/ad/params.hpp"
#include "dlab/env/gridworld.hpp"
#include "dlab/models/objectives.hpp"
#include "dlab/training/config.hpp"

namespace dlab::training {

// Fixed training corpus: base states, each paired with every action and
// `samples` successors. Only anchors are stored; images are rendered on
// demand.
class Corpus {
 public:
  Corpus(const env::EnvConfig& config, std::size_t base_states, std::size_t samples, env::Rng& rng);

  std::size_t size() const { return bases_.size(); }
  std::size_t samples() const { return samples_; }
  // (x, a, x') tuples held.
  std::size_t tuples() const { return bases_.size() * env::kNumActions * samples_; }
  const std::vector<env::Point>& base(std::size_t i) const { return bases_.at(i); }
  const std::vector<env::Point>& next(std::size_t i, std::size_t a, std::size_t n) const;
  const env::Gridworld& env() const { return env_; }

  // Images for the chosen base states, [B, 576].
  ad::Tensor<float> render_bases(std::span<const std::size_t> idx) const;
  // Successor images ordered (base, action, draw), [B*K*N, 576].
  ad::Tensor<float> render_successors(std::span<const std::size_t> idx) const;

 private:
  env::Gridworld env_;
  std::size_t samples_;
  std::vector<std::vector<env::Point>> bases_;
  std::vector<std::vector<env::Point>> next_;
};

using StepObserver = std::function<void(std::size_t step, const objectives::LossReport& report,
                                        const ad::ParameterStore<float>& params)>;

struct TrainResult {
  ad::ParameterStore<float> params;
  std::vector<objectives::LossReport> log;
  std::size_t updates = 0;
  std::size_t consumed = 0;  // tuples drawn from the corpus over all epochs
  bool has_selectivity = false;
};

// Reconstruction only.
TrainResult train_autoencoder(const TrainConfig& config, const StepObserver& observe = {});
// Reconstruction minus weighted selectivity; policy heads by REINFORCE.
TrainResult train_thomas(const TrainConfig& config, const StepObserver& observe = {});
// Two branches summed for reconstruction; selectivity on the controllable
// branch. `pretrained`, when given, initialises the controllable branch.
TrainResult train_dual(const TrainConfig& config, const ad::ParameterStore<float>* pretrained,
                       const StepObserver& observe = {});

// Validates `config`, dispatches on its kind (loading `config.pretrain` for
// dual_pretrained) and writes the checkpoint and loss log when their paths are
// set. Throws dlab::ConfigError, dlab::IoError or dlab::FormatError.
TrainResult train(const TrainConfig& config, const StepObserver& observe = {});

// CSV: step,recon[,S_1..S_K],total
void write_loss_log(const std::filesystem::path& path, const TrainResult& result);

}  // namespace dlab::training
