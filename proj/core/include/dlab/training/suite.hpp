#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dlab/eval/metrics.hpp"
#include "dlab/training/training.hpp"

namespace dlab::training {

struct SuiteConfig {
  env::Scenario scenario = env::Scenario::situation1;
  std::vector<std::uint64_t> seeds{0};
  std::vector<models::ModelKind> kinds{models::ModelKind::ae, models::ModelKind::thomas,
                                       models::ModelKind::dual_pretrained,
                                       models::ModelKind::dual_scratch};
  // Shared training settings; scenario, kind, seed and paths are overridden.
  TrainConfig train;
  std::size_t eval_samples = eval::kEvalSamples;
  std::size_t neighbors = eval::kDefaultNeighbors;
  std::uint64_t eval_seed = 12345;
  std::string out_dir;  // report directory; nothing written when empty
};

// Evaluation of one trained model. Fields that do not apply to the kind stay
// empty.
struct RunReport {
  std::uint64_t seed = 0;
  models::ModelKind kind = models::ModelKind::ae;
  ad::ParameterStore<float> params;
  objectives::LossReport final_loss;
  eval::CorrelationTable correlations;  // single or controllable latent
  eval::DistanceCurve distance;         // uncontrollable latent for dual kinds
  eval::Concentration concentration;    // same latent as `distance`
  std::optional<eval::PolicyReport> policy;
  std::optional<eval::EnergySplit> energy;
  std::optional<std::array<double, 2>> recall;
  std::optional<eval::DecompositionScores> decomposition;
};

// Evaluates a trained model of `kind` on `samples` (latents are overwritten).
RunReport evaluate_model(models::ModelKind kind, const ad::ParameterStore<float>& params,
                         env::Scenario scenario, std::vector<eval::EvalSample>& samples,
                         std::size_t neighbors);

using SuiteProgress = std::function<void(std::uint64_t seed, models::ModelKind kind)>;

// Trains every kind for every seed (dual_pretrained starts from the Thomas
// run of the same seed, trained on demand), evaluates each on one shared set
// of states and writes the report when `out_dir` is set:
//   <out>/summary.csv and <out>/seed<S>/<kind>/{correlations,distance,
//   concentration,policy,decomposition,loss}.csv
std::vector<RunReport> run_experiment_suite(const SuiteConfig& config,
                                            const SuiteProgress& progress = {});

// CSV rows of seed,kind,metric,value for every report.
void write_summary(const std::filesystem::path& path, const std::vector<RunReport>& reports);

}  // namespace dlab::training
