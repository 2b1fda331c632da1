#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "dlab/env/gridworld.hpp"
#include "dlab/models/models.hpp"

namespace dlab::eval {

inline constexpr std::size_t kEvalSamples = 1000;
inline constexpr std::size_t kDefaultNeighbors = 10;
inline constexpr double kRidge = 1e-6;

// Row-major dense matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

// One evaluation state: its image, every object's anchor and the latents of
// the model under test.
struct EvalSample {
  env::Image image;
  std::vector<env::Point> anchors;  // [0] controllable, then obstacles
  std::vector<double> latent;       // single-branch or controllable latent
  std::vector<double> unc_latent;   // uncontrollable latent (dual models)
};

// `count` uniformly random legal states, rendered; latents left empty.
std::vector<EvalSample> sample_states(const env::EnvConfig& config, std::size_t count,
                                      std::uint64_t seed);

// Fill latents by encoding every image with the given model.
void encode_samples(const models::Autoencoder<float>& m, std::vector<EvalSample>& samples);
void encode_samples(const models::ThomasModel<float>& m, std::vector<EvalSample>& samples);
void encode_samples(const models::DualModel<float>& m, std::vector<EvalSample>& samples);

// Pearson correlation; nullopt when either series has zero variance or the
// lengths differ or are below 2.
std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b);

// Entry (k, 0) correlates latent k with the x anchor, (k, 1) with y.
using CorrelationTable = std::vector<std::array<std::optional<double>, 2>>;
CorrelationTable correlation_table(const Matrix& latents, const Matrix& coords);
// Latents from `samples[i].latent`, coordinates of the controllable anchor.
CorrelationTable controllable_correlations(const std::vector<EvalSample>& samples);

struct DistanceCurve {
  std::vector<double> per_rank;      // D(j): mean obstacle distance to the j-th neighbour
  std::vector<double> running_mean;  // mean of per_rank[0..j]
  double overall = 0.0;              // mean over all samples, obstacles and ranks
};

// For each sample, neighbours ranked by Euclidean distance in `latents`
// (ties by index, self excluded); D averages the true distance between
// obstacle anchors (objects 1..L) of the sample and each neighbour.
// Throws std::invalid_argument when there are not more samples than J or
// no obstacles.
DistanceCurve accumulated_distance(const Matrix& latents,
                                   const std::vector<std::vector<env::Point>>& anchors,
                                   std::size_t neighbors);

struct Concentration {
  Matrix normalized;  // |P_ij| / sqrt(P_ii P_jj)
  bool ridge_applied = false;
};

// Normalised absolute precision matrix of the feature columns. A ridge of
// kRidge is added to the covariance diagonal when it is near-singular; throws
// std::runtime_error if it stays singular.
Concentration concentration_matrix(const Matrix& features);
double mean_abs_off_diagonal(const Matrix& m);

struct PolicyReport {
  Matrix mean_probs;                 // [heads, actions]
  std::vector<std::size_t> argmax;   // per head
};
PolicyReport policy_report(const ad::ParameterStore<float>& params,
                           const models::PolicyHeads& policy, const Matrix& latents);

struct DecompositionScores {
  double iou_c = 0.0;      // controllable output vs controllable mask
  double iou_u = 0.0;      // uncontrollable output vs obstacle union
  double cross_c = 0.0;    // controllable output vs obstacle union
  double cross_u = 0.0;    // uncontrollable output vs controllable mask
};

// IoU between thresholded (> 0.5) branch outputs and the true masks, pooled
// over all samples. `ctrl_out` / `unc_out` are [S, 576].
DecompositionScores decomposition_iou(const env::Gridworld& env,
                                      const std::vector<EvalSample>& samples,
                                      const std::vector<float>& ctrl_out,
                                      const std::vector<float>& unc_out);
DecompositionScores decomposition_iou(const models::DualModel<float>& m, const env::Gridworld& env,
                                      const std::vector<EvalSample>& samples);

struct EnergySplit {
  double obstacle = 0.0;      // sum of squared output over obstacle pixels
  double controllable = 0.0;  // ... over controllable pixels
  double ratio() const { return controllable > 0.0 ? obstacle / controllable : 0.0; }
};
// Output energy of a single-branch model's reconstruction, averaged over samples.
EnergySplit reconstruction_energy(const ad::ParameterStore<float>& params,
                                  const models::Branch& net, const env::Gridworld& env,
                                  const std::vector<EvalSample>& samples);

// Pixel recall of a reconstruction on each object's mask at threshold 0.5:
// {controllable recall, obstacle recall}.
std::array<double, 2> mask_recall(const ad::ParameterStore<float>& params,
                                  const models::Branch& net, const env::Gridworld& env,
                                  const std::vector<EvalSample>& samples);

Matrix latent_matrix(const std::vector<EvalSample>& samples, bool uncontrollable = false);
Matrix anchor_matrix(const std::vector<EvalSample>& samples, std::size_t object = 0);
std::vector<std::vector<env::Point>> anchor_lists(const std::vector<EvalSample>& samples);

// CSV writers.
void write_correlations(const std::filesystem::path& path, const CorrelationTable& t);
void write_distance(const std::filesystem::path& path, const DistanceCurve& d);
void write_matrix(const std::filesystem::path& path, const Matrix& m, const std::string& prefix);
void write_policy(const std::filesystem::path& path, const PolicyReport& p);
void write_decomposition(const std::filesystem::path& path, const DecompositionScores& s);

}  // namespace dlab::eval
