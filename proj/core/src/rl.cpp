#include "dlab/rl/rl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "dlab/ad/checkpoint.hpp"
#include "dlab/ad/layers.hpp"
#include "dlab/ad/ops.hpp"
#include "dlab/ad/optim.hpp"
#include "dlab/errors.hpp"

namespace dlab::rl {

using ad::Tensor;

namespace {

env::Rng trial_stream(std::uint64_t seed, std::uint64_t trial, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(trial), tag};
  return env::Rng(seq);
}

std::size_t latent_width(const ad::ParameterStore<float>& p, const std::string& prefix) {
  const std::string name = prefix + "enc.fc2.b";
  if (!p.contains(name)) throw FormatError("encoder checkpoint lacks " + name);
  return p.get(name).numel();
}

std::string anchor_key(const std::vector<env::Point>& anchors) {
  std::string key;
  key.reserve(anchors.size() * 2);
  for (const auto& a : anchors) {
    key.push_back(static_cast<char>(a.x));
    key.push_back(static_cast<char>(a.y));
  }
  return key;
}

Tensor<float> row(const std::vector<float>& v) { return Tensor<float>({1, v.size()}, v); }

Tensor<float> stack(const std::vector<const Features*>& feats, bool unc) {
  const std::size_t w = unc ? feats.front()->unc.size() : feats.front()->ctrl.size();
  std::vector<float> v;
  v.reserve(feats.size() * w);
  for (const auto* f : feats) {
    const auto& src = unc ? f->unc : f->ctrl;
    v.insert(v.end(), src.begin(), src.end());
  }
  return Tensor<float>({feats.size(), w}, std::move(v));
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

SeriesStats series(const std::vector<std::vector<EpisodeSummary>>& trials,
                   double (*get)(const EpisodeSummary&)) {
  SeriesStats s;
  const std::size_t n = trials.front().size();
  const double t = static_cast<double>(trials.size());
  s.mean.assign(n, 0.0);
  s.variance.assign(n, 0.0);
  for (std::size_t e = 0; e < n; ++e) {
    for (const auto& tr : trials) s.mean[e] += get(tr[e]) / t;
    for (const auto& tr : trials) s.variance[e] += (get(tr[e]) - s.mean[e]) * (get(tr[e]) - s.mean[e]) / t;
  }
  return s;
}

}  // namespace

void RLConfig::validate() const {
  if (trials == 0) throw ConfigError("trials must be at least 1");
  if (episodes == 0) throw ConfigError("episodes must be at least 1");
  if (gamma < 0.0 || gamma > 1.0) throw ConfigError("gamma must lie in [0, 1]");
  if (lr <= 0.0) throw ConfigError("lr must be positive");
  if (eps_start < 0.0 || eps_start > 1.0 || eps_end < 0.0 || eps_end > 1.0)
    throw ConfigError("epsilon must lie in [0, 1]");
  if (anneal_fraction < 0.0 || anneal_fraction > 1.0)
    throw ConfigError("anneal_fraction must lie in [0, 1]");
}

double epsilon_at(const RLConfig& config, std::size_t episode) {
  const double span = config.anneal_fraction * static_cast<double>(config.episodes);
  if (span <= 0.0) return config.eps_end;
  const double t = std::min(1.0, static_cast<double>(episode) / span);
  return config.eps_start + (config.eps_end - config.eps_start) * t;
}

FrozenEncoder::FrozenEncoder(models::ModelKind kind, const ad::ParameterStore<float>& params)
    : dual_(models::is_dual(kind)) {
  if (dual_) {
    ctrl_width_ = latent_width(params, "ctrl.");
    unc_width_ = latent_width(params, "unc.");
    ctrl_ = models::Branch::make("ctrl.", ctrl_width_);
    unc_ = models::Branch::make("unc.", unc_width_);
  } else {
    ctrl_width_ = latent_width(params, "");
    ctrl_ = models::Branch::make("", ctrl_width_);
  }
  // Keep only the encoder tensors, checked against the expected shapes.
  ad::Rng rng(0);
  ad::ParameterStore<float> full;
  ctrl_.init(full, rng);
  if (dual_) unc_.init(full, rng);
  for (const auto& [name, t] : full) {
    if (name.find("enc.") == std::string::npos) continue;
    if (!params.contains(name)) throw FormatError("encoder checkpoint lacks " + name);
    const auto& src = params.get(name);
    if (src.shape() != t.shape())
      throw FormatError("encoder checkpoint tensor " + name + " has shape " +
                        ad::shape_str(src.shape()) + ", expected " + ad::shape_str(t.shape()));
    params_.add(name, src.clone());
  }
}

const Features& FrozenEncoder::encode(const env::Gridworld& env,
                                      const std::vector<env::Point>& anchors) {
  const auto key = anchor_key(anchors);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  ad::NoGradGuard guard;
  std::vector<float> image(env::kImagePixels);
  env.render_anchors(anchors, image.data());
  const Tensor<float> x({1, env::kImagePixels}, std::move(image));
  Features f;
  const auto zc = ctrl_.encode(params_, x);
  f.ctrl.assign(zc.values().begin(), zc.values().end());
  if (dual_) {
    const auto zu = unc_.encode(params_, x);
    f.unc.assign(zu.values().begin(), zu.values().end());
  }
  return cache_.emplace(key, std::move(f)).first->second;
}

models::Drqn<float> build_agent(const FrozenEncoder& encoder, std::uint64_t seed) {
  models::DrqnSpec spec;
  spec.dual_route = encoder.dual_route();
  spec.ctrl_in = encoder.ctrl_width();
  spec.unc_in = encoder.dual_route() ? encoder.unc_width() : 0;
  return models::build_drqn<float>(spec, seed);
}

std::size_t select_action(const std::vector<float>& q, double eps, env::Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) < eps) return std::uniform_int_distribution<std::size_t>(0, q.size() - 1)(rng);
  return static_cast<std::size_t>(std::max_element(q.begin(), q.end()) - q.begin());
}

std::vector<double> td_targets(const std::vector<std::vector<float>>& next_q,
                               const std::vector<float>& rewards, bool terminal, double gamma) {
  std::vector<double> y(rewards.size());
  for (std::size_t t = 0; t < rewards.size(); ++t) {
    y[t] = rewards[t];
    if (t + 1 < rewards.size() || !terminal)
      y[t] += gamma * *std::max_element(next_q.at(t).begin(), next_q.at(t).end());
  }
  return y;
}

EpisodeRecord run_episode(models::Drqn<float>& agent, FrozenEncoder& encoder,
                          const env::Gridworld& env, env::EnvState start, double eps,
                          double gamma, double lr, env::Rng& rng) {
  EpisodeRecord rec;
  std::vector<const Features*> feats{&encoder.encode(env, start.anchors)};
  env::EnvState s = std::move(start);
  bool done = false;
  {
    ad::NoGradGuard guard;
    auto h = agent.zero_state();
    while (!done) {
      const Features& f = *feats.back();
      const auto q = agent.step(row(f.ctrl), f.unc.empty() ? Tensor<float>{} : row(f.unc), h);
      const std::vector<float> qv(q.values().begin(), q.values().end());
      const auto a = env::action_from_index(select_action(qv, eps, rng));
      auto r = env.reward_step(s, a);
      rec.actions.push_back(a);
      rec.rewards.push_back(r.reward);
      rec.collisions += r.collided;
      rec.reached = rec.reached || r.reward > 0.0f;
      done = r.done;
      s = std::move(r.state);
      feats.push_back(&encoder.encode(env, s.anchors));
    }
  }
  rec.steps = rec.actions.size();

  // Q over s_0..s_T from a fresh state; rows 1..T feed the targets.
  const auto q = agent.forward_sequence(stack(feats, false),
                                        encoder.dual_route() ? stack(feats, true) : Tensor<float>{});
  const std::size_t K = q.dim(1), T = rec.steps;
  std::vector<std::vector<float>> next_q(T);
  for (std::size_t t = 0; t < T; ++t)
    next_q[t].assign(q.values().begin() + static_cast<std::ptrdiff_t>((t + 1) * K),
                     q.values().begin() + static_cast<std::ptrdiff_t>((t + 2) * K));
  const auto y = td_targets(next_q, rec.rewards, rec.reached, gamma);
  std::vector<float> mask((T + 1) * K, 0.0f), target((T + 1) * K, 0.0f);
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t i = t * K + static_cast<std::size_t>(rec.actions[t]);
    mask[i] = 1.0f;
    target[i] = static_cast<float>(y[t]);
  }
  const auto chosen = ad::mul(q, Tensor<float>(q.shape(), std::move(mask)));
  const auto loss = ad::sum(ad::square(ad::sub(chosen, Tensor<float>(q.shape(), std::move(target)))));
  rec.qloss = loss.item();
  agent.params.zero_grad();
  ad::backward(loss);
  ad::Sgd<float>(lr).step(agent.params);
  return rec;
}

Aggregate aggregate(const std::vector<std::vector<EpisodeSummary>>& trials) {
  if (trials.empty()) throw std::invalid_argument("aggregate: no trials");
  for (const auto& t : trials)
    if (t.size() != trials.front().size())
      throw std::invalid_argument("aggregate: trials differ in length");
  Aggregate a;
  a.qloss = series(trials, [](const EpisodeSummary& e) { return e.qloss; });
  a.collisions = series(trials, [](const EpisodeSummary& e) { return static_cast<double>(e.collisions); });
  a.steps = series(trials, [](const EpisodeSummary& e) { return static_cast<double>(e.steps); });
  return a;
}

RLResult train_rl(const RLConfig& config, const ad::ParameterStore<float>& encoder_params,
                  const EpisodeObserver& observe) {
  config.validate();
  const env::Gridworld env(env::EnvConfig::for_scenario(env::Scenario::reward));
  FrozenEncoder encoder(config.kind, encoder_params);
  RLResult result;
  for (std::size_t trial = 0; trial < config.trials; ++trial) {
    auto init_rng = trial_stream(config.seed, trial, 1);
    auto agent = build_agent(encoder, init_rng());
    auto env_rng = trial_stream(config.seed, trial, 2);
    auto act_rng = trial_stream(config.seed, trial, 3);
    std::vector<EpisodeSummary> episodes;
    for (std::size_t e = 0; e < config.episodes; ++e) {
      const auto rec = run_episode(agent, encoder, env, env.reset(env_rng()),
                                   epsilon_at(config, e), config.gamma, config.lr, act_rng);
      episodes.push_back({rec.qloss, rec.collisions, rec.steps, rec.reached});
      if (observe) observe(trial, e, episodes.back());
    }
    result.trials.push_back(std::move(episodes));
  }
  result.stats = aggregate(result.trials);
  return result;
}

RLResult train_rl(const RLConfig& config, const EpisodeObserver& observe) {
  config.validate();
  return train_rl(config, ad::load_checkpoint(config.checkpoint), observe);
}

double final_median_steps(const RLResult& result, double fraction) {
  std::vector<double> steps;
  for (const auto& t : result.trials) {
    const auto n = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(t.size())));
    for (std::size_t e = t.size() - std::min(n, t.size()); e < t.size(); ++e)
      steps.push_back(static_cast<double>(t[e].steps));
  }
  return median(std::move(steps));
}

void write_episode_log(const std::filesystem::path& path, const RLResult& result) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os.precision(9);
  os << "trial,episode,qloss,collisions,steps,reached\n";
  for (std::size_t t = 0; t < result.trials.size(); ++t)
    for (std::size_t e = 0; e < result.trials[t].size(); ++e) {
      const auto& r = result.trials[t][e];
      os << t << ',' << e << ',' << r.qloss << ',' << r.collisions << ',' << r.steps << ','
         << (r.reached ? 1 : 0) << '\n';
    }
  if (!os) throw IoError("failed writing " + path.string());
}

void write_aggregate(const std::filesystem::path& path, const Aggregate& s) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os.precision(9);
  os << "episode,qloss_mean,qloss_var,collisions_mean,collisions_var,steps_mean,steps_var\n";
  for (std::size_t e = 0; e < s.qloss.mean.size(); ++e)
    os << e << ',' << s.qloss.mean[e] << ',' << s.qloss.variance[e] << ',' << s.collisions.mean[e]
       << ',' << s.collisions.variance[e] << ',' << s.steps.mean[e] << ',' << s.steps.variance[e]
       << '\n';
  if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace dlab::rl
