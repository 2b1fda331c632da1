#include "dlab/training/suite.hpp"

#include <fstream>

#include "dlab/ad/checkpoint.hpp"
#include "dlab/errors.hpp"

namespace dlab::training {

namespace {

constexpr std::size_t K = models::kActions;

void append_correlations(std::ostream& os, const std::string& prefix,
                         const eval::CorrelationTable& t) {
  for (std::size_t k = 0; k < t.size(); ++k)
    for (std::size_t axis = 0; axis < 2; ++axis) {
      os << prefix << "corr_" << (axis == 0 ? 'x' : 'y') << k + 1 << ',';
      if (t[k][axis]) os << *t[k][axis];
      else os << "nan";
      os << '\n';
    }
}

}  // namespace

RunReport evaluate_model(models::ModelKind kind, const ad::ParameterStore<float>& params,
                         env::Scenario scenario, std::vector<eval::EvalSample>& samples,
                         std::size_t neighbors) {
  const env::Gridworld env(env::EnvConfig::for_scenario(scenario));
  RunReport r;
  r.kind = kind;
  r.params = params;
  const auto anchors = eval::anchor_lists(samples);
  const bool has_obstacles = anchors.front().size() > 1;
  auto unc_metrics = [&](bool unc) {
    const auto z = eval::latent_matrix(samples, unc);
    if (has_obstacles) r.distance = eval::accumulated_distance(z, anchors, neighbors);
    r.concentration = eval::concentration_matrix(z);
  };
  switch (kind) {
    case models::ModelKind::ae: {
      auto m = models::build_autoencoder<float>(K, 0);
      ad::copy_parameters(params, m.params);
      eval::encode_samples(m, samples);
      r.recall = eval::mask_recall(m.params, m.net, env, samples);
      if (has_obstacles) r.energy = eval::reconstruction_energy(m.params, m.net, env, samples);
      unc_metrics(false);
      break;
    }
    case models::ModelKind::thomas: {
      auto m = models::build_thomas<float>(K, 0);
      ad::copy_parameters(params, m.params);
      eval::encode_samples(m, samples);
      r.policy = eval::policy_report(m.params, m.policy, eval::latent_matrix(samples));
      r.recall = eval::mask_recall(m.params, m.net, env, samples);
      if (has_obstacles) r.energy = eval::reconstruction_energy(m.params, m.net, env, samples);
      unc_metrics(false);
      break;
    }
    case models::ModelKind::dual_pretrained:
    case models::ModelKind::dual_scratch: {
      auto m = models::build_dual<float>(K, models::uncontrollable_width(scenario), 0);
      ad::copy_parameters(params, m.params);
      eval::encode_samples(m, samples);
      r.policy = eval::policy_report(m.params, m.policy, eval::latent_matrix(samples));
      r.decomposition = eval::decomposition_iou(m, env, samples);
      unc_metrics(true);
      break;
    }
  }
  r.correlations = eval::controllable_correlations(samples);
  return r;
}

std::vector<RunReport> run_experiment_suite(const SuiteConfig& config,
                                            const SuiteProgress& progress) {
  if (config.seeds.empty()) throw ConfigError("suite needs at least one seed");
  auto samples = eval::sample_states(env::EnvConfig::for_scenario(config.scenario),
                                     config.eval_samples, config.eval_seed);
  const std::filesystem::path out(config.out_dir);
  std::vector<RunReport> reports;
  for (const auto seed : config.seeds) {
    TrainConfig base = config.train;
    base.scenario = config.scenario;
    base.seed = seed;
    base.checkpoint.clear();
    base.log.clear();
    base.pretrain.clear();
    std::optional<ad::ParameterStore<float>> thomas_params;
    for (const auto kind : config.kinds) {
      if (progress) progress(seed, kind);
      TrainConfig c = base;
      c.kind = kind;
      TrainResult result;
      switch (kind) {
        case models::ModelKind::ae:
          c.validate();
          result = train_autoencoder(c);
          break;
        case models::ModelKind::thomas:
          c.validate();
          result = train_thomas(c);
          thomas_params = result.params;
          break;
        case models::ModelKind::dual_scratch:
          c.validate();
          result = train_dual(c, nullptr);
          break;
        case models::ModelKind::dual_pretrained: {
          if (!thomas_params) {
            TrainConfig t = base;
            t.kind = models::ModelKind::thomas;
            t.validate();
            thomas_params = train_thomas(t).params;
          }
          result = train_dual(c, &*thomas_params);
          break;
        }
      }
      RunReport r = evaluate_model(kind, result.params, config.scenario, samples, config.neighbors);
      r.seed = seed;
      if (!result.log.empty()) r.final_loss = result.log.back();
      if (!config.out_dir.empty()) {
        const auto dir = out / ("seed" + std::to_string(seed)) / std::string(models::kind_name(kind));
        std::filesystem::create_directories(dir);
        write_loss_log(dir / "loss.csv", result);
        eval::write_correlations(dir / "correlations.csv", r.correlations);
        if (!r.distance.per_rank.empty()) eval::write_distance(dir / "distance.csv", r.distance);
        eval::write_matrix(dir / "concentration.csv", r.concentration.normalized, "z");
        if (r.policy) eval::write_policy(dir / "policy.csv", *r.policy);
        if (r.decomposition) eval::write_decomposition(dir / "decomposition.csv", *r.decomposition);
      }
      reports.push_back(std::move(r));
    }
  }
  if (!config.out_dir.empty()) write_summary(out / "summary.csv", reports);
  return reports;
}

void write_summary(const std::filesystem::path& path, const std::vector<RunReport>& reports) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os.precision(9);
  os << "seed,kind,metric,value\n";
  for (const auto& r : reports) {
    const std::string prefix = std::to_string(r.seed) + "," + std::string(models::kind_name(r.kind)) + ",";
    os << prefix << "final_recon," << r.final_loss.recon << '\n';
    for (std::size_t k = 0; k < r.final_loss.selectivity.size(); ++k)
      os << prefix << "final_S" << k + 1 << ',' << r.final_loss.selectivity[k] << '\n';
    append_correlations(os, prefix, r.correlations);
    if (!r.distance.per_rank.empty()) os << prefix << "distance," << r.distance.overall << '\n';
    os << prefix << "concentration_offdiag," << eval::mean_abs_off_diagonal(r.concentration.normalized)
       << '\n';
    if (r.policy)
      for (std::size_t k = 0; k < r.policy->argmax.size(); ++k)
        os << prefix << "policy_max" << k + 1 << ','
           << r.policy->mean_probs(k, r.policy->argmax[k]) << '\n';
    if (r.energy) os << prefix << "energy_ratio," << r.energy->ratio() << '\n';
    if (r.recall)
      os << prefix << "recall_ctrl," << (*r.recall)[0] << '\n'
         << prefix << "recall_obstacle," << (*r.recall)[1] << '\n';
    if (r.decomposition)
      os << prefix << "iou_c," << r.decomposition->iou_c << '\n'
         << prefix << "iou_u," << r.decomposition->iou_u << '\n'
         << prefix << "cross_c," << r.decomposition->cross_c << '\n'
         << prefix << "cross_u," << r.decomposition->cross_u << '\n';
  }
  if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace dlab::training
