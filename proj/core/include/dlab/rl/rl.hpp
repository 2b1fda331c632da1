#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dlab/env/gridworld.hpp"
#include "dlab/models/models.hpp"

namespace dlab::rl {

inline constexpr double kDiscount = 0.9;
inline constexpr double kLearningRate = 1e-3;

struct RLConfig {
  models::ModelKind kind = models::ModelKind::dual_pretrained;
  std::string checkpoint;  // encoder checkpoint of `kind`
  std::size_t episodes = 300;
  std::size_t trials = 10;
  double gamma = kDiscount;
  double lr = kLearningRate;
  double eps_start = 1.0;
  double eps_end = 0.1;
  double anneal_fraction = 0.5;  // share of episodes over which epsilon decays
  std::uint64_t seed = 0;

  // Throws dlab::ConfigError.
  void validate() const;
};

// Linear decay from eps_start to eps_end over the first anneal_fraction of
// the episodes, constant afterwards.
double epsilon_at(const RLConfig& config, std::size_t episode);

struct Features {
  std::vector<float> ctrl;
  std::vector<float> unc;  // empty for single-route encoders
};

// Encoder of a trained model with its weights frozen. Latents are cached by
// object anchors, since an image is a function of them.
class FrozenEncoder {
 public:
  // Throws dlab::FormatError when `params` does not hold an encoder of `kind`.
  FrozenEncoder(models::ModelKind kind, const ad::ParameterStore<float>& params);

  bool dual_route() const { return dual_; }
  std::size_t ctrl_width() const { return ctrl_width_; }
  std::size_t unc_width() const { return unc_width_; }
  const ad::ParameterStore<float>& params() const { return params_; }

  const Features& encode(const env::Gridworld& env, const std::vector<env::Point>& anchors);
  std::size_t cache_size() const { return cache_.size(); }

 private:
  bool dual_;
  std::size_t ctrl_width_ = 0;
  std::size_t unc_width_ = 0;
  ad::ParameterStore<float> params_;
  models::Branch ctrl_;
  models::Branch unc_;
  std::unordered_map<std::string, Features> cache_;
};

// Recurrent Q-network shaped for `encoder`: dual route for two-branch
// encoders, single route otherwise.
models::Drqn<float> build_agent(const FrozenEncoder& encoder, std::uint64_t seed);

struct EpisodeRecord {
  std::vector<env::Action> actions;
  std::vector<float> rewards;
  std::size_t steps = 0;
  std::size_t collisions = 0;
  bool reached = false;
  double qloss = 0.0;  // TD loss of the episode before its update
};

// Uniform action with probability `eps`, otherwise the greedy one (lowest
// index on ties).
std::size_t select_action(const std::vector<float>& q, double eps, env::Rng& rng);

// One-step targets for the transitions of an episode. `next_q` row t holds
// Q(s_{t+1}, .); the last transition bootstraps unless `terminal`.
std::vector<double> td_targets(const std::vector<std::vector<float>>& next_q,
                               const std::vector<float>& rewards, bool terminal, double gamma);

// Runs one episode from `start`, then takes one gradient-descent step on
// the squared TD error summed over the unrolled sequence.
EpisodeRecord run_episode(models::Drqn<float>& agent, FrozenEncoder& encoder,
                          const env::Gridworld& env, env::EnvState start, double eps,
                          double gamma, double lr, env::Rng& rng);

struct EpisodeSummary {
  double qloss = 0.0;
  std::size_t collisions = 0;
  std::size_t steps = 0;
  bool reached = false;
};

struct SeriesStats {
  std::vector<double> mean;
  std::vector<double> variance;  // population variance across trials
};

struct Aggregate {
  SeriesStats qloss;
  SeriesStats collisions;
  SeriesStats steps;
};

// Per-episode mean and population variance across trials of equal length.
Aggregate aggregate(const std::vector<std::vector<EpisodeSummary>>& trials);

struct RLResult {
  std::vector<std::vector<EpisodeSummary>> trials;
  Aggregate stats;
};

using EpisodeObserver =
    std::function<void(std::size_t trial, std::size_t episode, const EpisodeSummary&)>;

// Trains `trials` independent agents on the reward scenario over the frozen
// encoder in `encoder_params`.
RLResult train_rl(const RLConfig& config, const ad::ParameterStore<float>& encoder_params,
                  const EpisodeObserver& observe = {});
// Loads `config.checkpoint` first; throws dlab::IoError or dlab::FormatError.
RLResult train_rl(const RLConfig& config, const EpisodeObserver& observe = {});

// Median steps over the last `fraction` of episodes, pooled across trials.
double final_median_steps(const RLResult& result, double fraction = 0.2);

// CSV: trial,episode,qloss,collisions,steps,reached
void write_episode_log(const std::filesystem::path& path, const RLResult& result);
// CSV: episode,qloss_mean,qloss_var,collisions_mean,collisions_var,steps_mean,steps_var
void write_aggregate(const std::filesystem::path& path, const Aggregate& stats);

}  // namespace dlab::rl
