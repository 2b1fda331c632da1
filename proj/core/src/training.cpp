#include "dlab/training/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "dlab/ad/checkpoint.hpp"
#include "dlab/ad/optim.hpp"
#include "dlab/errors.hpp"
#include "dlab/models/models.hpp"

namespace dlab::training {

using ad::Tensor;
using objectives::LossReport;

namespace {

constexpr std::size_t K = env::kNumActions;

env::Rng stream(std::uint64_t seed, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag)};
  return env::Rng(seq);
}

ad::AdamConfig adam_config(const TrainConfig& c) { return {c.lr, c.beta1, c.beta2, c.adam_eps}; }

// Samples one action index from a probability row.
std::size_t sample_action(std::span<const float> p, env::Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (std::size_t a = 0; a + 1 < p.size(); ++a) {
    acc += p[a];
    if (u < acc) return a;
  }
  return p.size() - 1;
}

struct SelectivityParts {
  Tensor<float> mean_sum;   // (1/B) sum_b sum_k S[b, k]
  Tensor<float> surrogate;  // REINFORCE surrogate summed over heads
  std::vector<double> per_head;
};

// Selectivity of latents `z` against successor latents `zn`, plus the policy
// surrogate. Policy heads read a detached copy of `z`.
SelectivityParts selectivity_parts(const ad::ParameterStore<float>& params,
                                   const models::PolicyHeads& policy, const Tensor<float>& z,
                                   const Tensor<float>& zn, std::size_t samples,
                                   objectives::ReinforceBaseline& baseline, env::Rng& rng) {
  const std::size_t B = z.dim(0);
  const Tensor<float> zd = z.detach();
  std::vector<Tensor<float>> log_probs, probs;
  for (std::size_t k = 0; k < policy.size(); ++k) {
    log_probs.push_back(ad::log_softmax_rows(policy.logits(params, zd, k)));
    std::vector<float> p(log_probs.back().values().begin(), log_probs.back().values().end());
    for (auto& v : p) v = std::exp(v);
    probs.emplace_back(ad::Shape{B, K}, std::move(p));
  }
  const auto weights = objectives::policy_weights(probs);
  const objectives::SelectivityBatch<float> batch{z, zn, weights, K, samples};
  const auto returns = objectives::action_returns(batch);
  const auto S = objectives::weighted_selectivity(returns, weights, B, K);

  SelectivityParts out;
  out.mean_sum = ad::scale(ad::sum(S), 1.0f / static_cast<float>(B));
  out.per_head.assign(policy.size(), 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t k = 0; k < policy.size(); ++k)
      out.per_head[k] += S.at(b * policy.size() + k) / static_cast<double>(B);

  const auto r = returns.values();
  for (std::size_t k = 0; k < policy.size(); ++k) {
    std::vector<std::size_t> actions(B);
    std::vector<double> rewards(B), adv(B);
    double mean = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      actions[b] = sample_action(probs[k].values().subspan(b * K, K), rng);
      rewards[b] = r[(b * K + actions[b]) * policy.size() + k];
      mean += rewards[b] / static_cast<double>(B);
    }
    if (!baseline.initialized(k)) baseline.update(k, mean);
    for (std::size_t b = 0; b < B; ++b) adv[b] = rewards[b] - baseline.value(k);
    auto s = objectives::reinforce_surrogate(log_probs[k], std::span<const std::size_t>(actions),
                                             std::span<const double>(adv));
    out.surrogate = out.surrogate.defined() ? ad::add(out.surrogate, s) : s;
    baseline.update(k, mean);
  }
  return out;
}

// Shared epoch/batch loop. `step_fn(bases, idx)` performs one update and
// returns its report.
template <typename StepFn>
TrainResult run_loop(const TrainConfig& config, ad::ParameterStore<float>& params,
                     const StepObserver& observe, StepFn&& step_fn, const Corpus& corpus,
                     env::Rng& data_rng) {
  TrainResult result;
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t e = 0; e < config.epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), data_rng);
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch) {
      const std::size_t end = std::min(order.size(), begin + config.batch);
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      LossReport report = step_fn(idx);
      report.lambda = config.lambda;
      result.consumed += idx.size() * K * corpus.samples();
      if (observe) observe(result.updates, report, params);
      result.log.push_back(std::move(report));
      ++result.updates;
    }
  }
  return result;
}

}  // namespace

Corpus::Corpus(const env::EnvConfig& config, std::size_t base_states, std::size_t samples,
               env::Rng& rng)
    : env_(config), samples_(samples) {
  bases_.reserve(base_states);
  next_.reserve(base_states * K * samples);
  for (std::size_t i = 0; i < base_states; ++i) {
    const auto s = env_.random_state(rng);
    bases_.push_back(s.anchors);
    for (env::Action a : env::kAllActions)
      for (auto& n : env_.sample_successors(s, a, samples)) next_.push_back(std::move(n.anchors));
  }
}

const std::vector<env::Point>& Corpus::next(std::size_t i, std::size_t a, std::size_t n) const {
  return next_.at((i * K + a) * samples_ + n);
}

Tensor<float> Corpus::render_bases(std::span<const std::size_t> idx) const {
  std::vector<float> v(idx.size() * env::kImagePixels);
  for (std::size_t b = 0; b < idx.size(); ++b)
    env_.render_anchors(bases_.at(idx[b]), v.data() + b * env::kImagePixels);
  return Tensor<float>({idx.size(), env::kImagePixels}, std::move(v));
}

Tensor<float> Corpus::render_successors(std::span<const std::size_t> idx) const {
  const std::size_t per = K * samples_;
  std::vector<float> v(idx.size() * per * env::kImagePixels);
  for (std::size_t b = 0; b < idx.size(); ++b)
    for (std::size_t j = 0; j < per; ++j)
      env_.render_anchors(next_.at(idx[b] * per + j), v.data() + (b * per + j) * env::kImagePixels);
  return Tensor<float>({idx.size() * per, env::kImagePixels}, std::move(v));
}

TrainResult train_autoencoder(const TrainConfig& config, const StepObserver& observe) {
  auto model = models::build_autoencoder<float>(K, config.seed);
  auto data_rng = stream(config.seed, 1);
  const Corpus corpus(env::EnvConfig::for_scenario(config.scenario), config.base_states(),
                      config.samples, data_rng);
  ad::Adam<float> adam(adam_config(config));
  auto step = [&](std::span<const std::size_t> idx) {
    const auto x = corpus.render_bases(idx);
    const float inv_b = 1.0f / static_cast<float>(idx.size());
    const auto z = model.net.encode(model.params, x);
    const auto recon =
        ad::scale(objectives::reconstruction_error(x, model.net.decode(model.params, z)), inv_b);
    model.params.zero_grad();
    ad::backward(recon);
    adam.step(model.params);
    LossReport r;
    r.recon = recon.item();
    r.total = r.recon;
    return r;
  };
  auto result = run_loop(config, model.params, observe, step, corpus, data_rng);
  result.params = std::move(model.params);
  return result;
}

TrainResult train_thomas(const TrainConfig& config, const StepObserver& observe) {
  auto model = models::build_thomas<float>(K, config.seed);
  auto data_rng = stream(config.seed, 1);
  auto policy_rng = stream(config.seed, 2);
  const Corpus corpus(env::EnvConfig::for_scenario(config.scenario), config.base_states(),
                      config.samples, data_rng);
  ad::Adam<float> adam(adam_config(config));
  objectives::ReinforceBaseline baseline(K);
  const float lambda = static_cast<float>(config.lambda);
  auto step = [&](std::span<const std::size_t> idx) {
    const auto x = corpus.render_bases(idx);
    const float inv_b = 1.0f / static_cast<float>(idx.size());
    const auto z = model.net.encode(model.params, x);
    const auto recon =
        ad::scale(objectives::reconstruction_error(x, model.net.decode(model.params, z)), inv_b);
    const auto zn = model.net.encode(model.params, corpus.render_successors(idx));
    auto parts = selectivity_parts(model.params, model.policy, z, zn, config.samples, baseline,
                                   policy_rng);
    const auto loss = objectives::total_loss(recon, parts.mean_sum, lambda);
    model.params.zero_grad();
    ad::backward(ad::add(loss, parts.surrogate));
    adam.step(model.params);
    LossReport r;
    r.recon = recon.item();
    r.selectivity = std::move(parts.per_head);
    r.total = objectives::total_loss(r.recon, r.selectivity, config.lambda);
    return r;
  };
  auto result = run_loop(config, model.params, observe, step, corpus, data_rng);
  result.params = std::move(model.params);
  result.has_selectivity = true;
  return result;
}

TrainResult train_dual(const TrainConfig& config, const ad::ParameterStore<float>* pretrained,
                       const StepObserver& observe) {
  auto model = models::build_dual<float>(K, models::uncontrollable_width(config.scenario),
                                         config.seed);
  if (pretrained) models::init_dual_from_pretrained(model, *pretrained);
  auto data_rng = stream(config.seed, 1);
  auto policy_rng = stream(config.seed, 2);
  const Corpus corpus(env::EnvConfig::for_scenario(config.scenario), config.base_states(),
                      config.samples, data_rng);
  ad::Adam<float> adam(adam_config(config));
  objectives::ReinforceBaseline baseline(K);
  const float lambda = static_cast<float>(config.lambda);
  auto step = [&](std::span<const std::size_t> idx) {
    const auto x = corpus.render_bases(idx);
    const float inv_b = 1.0f / static_cast<float>(idx.size());
    const auto zc = model.ctrl.encode(model.params, x);
    const auto c = model.ctrl.decode(model.params, zc);
    const auto u = model.unc.decode(model.params, model.unc.encode(model.params, x));
    const auto recon = ad::scale(objectives::dual_reconstruction_error(x, c, u), inv_b);
    const auto zn = model.ctrl.encode(model.params, corpus.render_successors(idx));
    auto parts = selectivity_parts(model.params, model.policy, zc, zn, config.samples, baseline,
                                   policy_rng);
    const auto loss = objectives::total_loss(recon, parts.mean_sum, lambda);
    model.params.zero_grad();
    ad::backward(ad::add(loss, parts.surrogate));
    adam.step(model.params);
    LossReport r;
    r.recon = recon.item();
    r.selectivity = std::move(parts.per_head);
    r.total = objectives::total_loss(r.recon, r.selectivity, config.lambda);
    return r;
  };
  auto result = run_loop(config, model.params, observe, step, corpus, data_rng);
  result.params = std::move(model.params);
  result.has_selectivity = true;
  return result;
}

TrainResult train(const TrainConfig& config, const StepObserver& observe) {
  config.validate();
  TrainResult result;
  switch (config.kind) {
    case models::ModelKind::ae: result = train_autoencoder(config, observe); break;
    case models::ModelKind::thomas: result = train_thomas(config, observe); break;
    case models::ModelKind::dual_scratch: result = train_dual(config, nullptr, observe); break;
    case models::ModelKind::dual_pretrained: {
      const auto pre = ad::load_checkpoint(config.pretrain);
      result = train_dual(config, &pre, observe);
      break;
    }
  }
  if (!config.checkpoint.empty()) ad::save_checkpoint(result.params, config.checkpoint);
  if (!config.log.empty()) write_loss_log(config.log, result);
  return result;
}

void write_loss_log(const std::filesystem::path& path, const TrainResult& result) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write loss log: " + path.string());
  os.precision(9);
  os << "step,recon";
  if (result.has_selectivity)
    for (std::size_t k = 0; k < K; ++k) os << ",S_" << k + 1;
  os << ",total\n";
  for (std::size_t i = 0; i < result.log.size(); ++i) {
    const auto& r = result.log[i];
    os << i << ',' << r.recon;
    if (result.has_selectivity)
      for (double s : r.selectivity) os << ',' << s;
    os << ',' << r.total << '\n';
  }
  if (!os) throw IoError("failed writing loss log: " + path.string());
}

}  // namespace dlab::training
