#include "dlab/eval/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "dlab/errors.hpp"

namespace dlab::eval {

using ad::Tensor;

namespace {

constexpr std::size_t kChunk = 250;

// Runs `fn` on [n, 576] image chunks under no-grad and concatenates rows.
template <typename Fn>
std::vector<float> map_images(const std::vector<EvalSample>& samples, Fn&& fn, std::size_t& width) {
  ad::NoGradGuard guard;
  std::vector<float> out;
  for (std::size_t begin = 0; begin < samples.size(); begin += kChunk) {
    const std::size_t end = std::min(samples.size(), begin + kChunk);
    std::vector<float> v;
    v.reserve((end - begin) * env::kImagePixels);
    for (std::size_t i = begin; i < end; ++i)
      v.insert(v.end(), samples[i].image.begin(), samples[i].image.end());
    const Tensor<float> y = fn(Tensor<float>({end - begin, env::kImagePixels}, std::move(v)));
    width = y.dim(1);
    out.insert(out.end(), y.values().begin(), y.values().end());
  }
  return out;
}

void scatter(const std::vector<float>& flat, std::size_t width, std::vector<EvalSample>& samples,
             std::vector<double> EvalSample::*field) {
  for (std::size_t i = 0; i < samples.size(); ++i)
    samples[i].*field = std::vector<double>(flat.begin() + i * width, flat.begin() + (i + 1) * width);
}

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os.precision(9);
  return os;
}

void close_csv(std::ofstream& os, const std::filesystem::path& path) {
  if (!os) throw IoError("failed writing " + path.string());
}

env::PixelSet obstacle_union(const env::Gridworld& env, const std::vector<env::Point>& anchors) {
  env::PixelSet u;
  for (std::size_t i = 1; i < anchors.size(); ++i) u |= env.object_pixels(i, anchors[i]);
  return u;
}

}  // namespace

std::vector<EvalSample> sample_states(const env::EnvConfig& config, std::size_t count,
                                      std::uint64_t seed) {
  const env::Gridworld env(config);
  env::Rng rng(seed);
  std::vector<EvalSample> out(count);
  for (auto& s : out) {
    const auto st = env.random_state(rng);
    s.anchors = st.anchors;
    s.image = env.render(st);
  }
  return out;
}

void encode_samples(const models::Autoencoder<float>& m, std::vector<EvalSample>& samples) {
  std::size_t w = 0;
  auto z = map_images(samples, [&](const Tensor<float>& x) { return m.net.encode(m.params, x); }, w);
  scatter(z, w, samples, &EvalSample::latent);
}

void encode_samples(const models::ThomasModel<float>& m, std::vector<EvalSample>& samples) {
  std::size_t w = 0;
  auto z = map_images(samples, [&](const Tensor<float>& x) { return m.net.encode(m.params, x); }, w);
  scatter(z, w, samples, &EvalSample::latent);
}

void encode_samples(const models::DualModel<float>& m, std::vector<EvalSample>& samples) {
  std::size_t w = 0;
  auto zc = map_images(samples, [&](const Tensor<float>& x) { return m.ctrl.encode(m.params, x); }, w);
  scatter(zc, w, samples, &EvalSample::latent);
  auto zu = map_images(samples, [&](const Tensor<float>& x) { return m.unc.encode(m.params, x); }, w);
  scatter(zu, w, samples, &EvalSample::unc_latent);
}

std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) return std::nullopt;
  auto constant = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double e) { return e == v.front(); });
  };
  if (constant(a) || constant(b)) return std::nullopt;
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

CorrelationTable correlation_table(const Matrix& latents, const Matrix& coords) {
  if (latents.rows != coords.rows || coords.cols != 2)
    throw std::invalid_argument("correlation_table: expected S x K latents and S x 2 coordinates");
  auto column = [](const Matrix& m, std::size_t j) {
    std::vector<double> c(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) c[i] = m(i, j);
    return c;
  };
  CorrelationTable t(latents.cols);
  for (std::size_t k = 0; k < latents.cols; ++k)
    for (std::size_t axis = 0; axis < 2; ++axis)
      t[k][axis] = pearson(column(latents, k), column(coords, axis));
  return t;
}

CorrelationTable controllable_correlations(const std::vector<EvalSample>& samples) {
  return correlation_table(latent_matrix(samples), anchor_matrix(samples, 0));
}

DistanceCurve accumulated_distance(const Matrix& latents,
                                   const std::vector<std::vector<env::Point>>& anchors,
                                   std::size_t neighbors) {
  const std::size_t S = latents.rows;
  if (neighbors == 0 || S <= neighbors)
    throw std::invalid_argument("accumulated_distance: need more samples than neighbours");
  if (anchors.size() != S || anchors.front().size() < 2)
    throw std::invalid_argument("accumulated_distance: need anchors with at least one obstacle");
  const std::size_t L = anchors.front().size() - 1;

  DistanceCurve out;
  out.per_rank.assign(neighbors, 0.0);
  std::vector<std::pair<double, std::size_t>> dist(S);
  for (std::size_t i = 0; i < S; ++i) {
    for (std::size_t j = 0; j < S; ++j) {
      double d = 0.0;
      for (std::size_t c = 0; c < latents.cols; ++c) {
        const double e = latents(i, c) - latents(j, c);
        d += e * e;
      }
      dist[j] = {j == i ? std::numeric_limits<double>::infinity() : d, j};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(neighbors),
                      dist.end());
    for (std::size_t r = 0; r < neighbors; ++r) {
      const auto& other = anchors[dist[r].second];
      double sum = 0.0;
      for (std::size_t l = 1; l <= L; ++l)
        sum += std::hypot(static_cast<double>(anchors[i][l].x - other[l].x),
                          static_cast<double>(anchors[i][l].y - other[l].y));
      out.per_rank[r] += sum / static_cast<double>(S * L);
    }
  }
  double acc = 0.0;
  for (std::size_t r = 0; r < neighbors; ++r) {
    acc += out.per_rank[r];
    out.running_mean.push_back(acc / static_cast<double>(r + 1));
  }
  out.overall = acc / static_cast<double>(neighbors);
  return out;
}

Concentration concentration_matrix(const Matrix& features) {
  const std::size_t S = features.rows, M = features.cols;
  if (S <= M) throw std::invalid_argument("concentration_matrix: need more samples than features");
  Eigen::MatrixXd X(S, M);
  for (std::size_t i = 0; i < S; ++i)
    for (std::size_t j = 0; j < M; ++j) X(i, j) = features(i, j);
  const Eigen::MatrixXd centered = X.rowwise() - X.colwise().mean();
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(S - 1);

  Concentration out;
  auto condition = [](const Eigen::MatrixXd& c) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
    return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  };
  if (condition(cov) > 1e12) {
    cov.diagonal().array() += kRidge;
    out.ridge_applied = true;
    const double cond = condition(cov);
    if (!std::isfinite(cond) || cond > 1e15)
      throw std::runtime_error("concentration_matrix: covariance singular after ridge (condition " +
                               std::to_string(cond) + ")");
  }
  const Eigen::MatrixXd P = cov.inverse();
  out.normalized = Matrix(M, M);
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j < M; ++j)
      out.normalized(i, j) = i == j ? 1.0 : std::fabs(P(i, j)) / std::sqrt(P(i, i) * P(j, j));
  return out;
}

double mean_abs_off_diagonal(const Matrix& m) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j)
      if (i != j) {
        s += std::fabs(m(i, j));
        ++n;
      }
  return n ? s / static_cast<double>(n) : 0.0;
}

PolicyReport policy_report(const ad::ParameterStore<float>& params,
                           const models::PolicyHeads& policy, const Matrix& latents) {
  ad::NoGradGuard guard;
  std::vector<float> z(latents.data.begin(), latents.data.end());
  const Tensor<float> zt({latents.rows, latents.cols}, std::move(z));
  PolicyReport out;
  out.mean_probs = Matrix(policy.size(), models::kActions);
  for (std::size_t k = 0; k < policy.size(); ++k) {
    const auto p = policy.probs(params, zt, k);
    for (std::size_t i = 0; i < latents.rows; ++i)
      for (std::size_t a = 0; a < models::kActions; ++a)
        out.mean_probs(k, a) += p.at(i * models::kActions + a) / static_cast<double>(latents.rows);
    std::size_t best = 0;
    for (std::size_t a = 1; a < models::kActions; ++a)
      if (out.mean_probs(k, a) > out.mean_probs(k, best)) best = a;
    out.argmax.push_back(best);
  }
  return out;
}

DecompositionScores decomposition_iou(const env::Gridworld& env,
                                      const std::vector<EvalSample>& samples,
                                      const std::vector<float>& ctrl_out,
                                      const std::vector<float>& unc_out) {
  std::size_t inter[4] = {0, 0, 0, 0}, uni[4] = {0, 0, 0, 0};
  for (std::size_t i = 0; i < samples.size(); ++i) {
    env::PixelSet c_pred, u_pred;
    for (std::size_t p = 0; p < env::kImagePixels; ++p) {
      c_pred[p] = ctrl_out[i * env::kImagePixels + p] > 0.5f;
      u_pred[p] = unc_out[i * env::kImagePixels + p] > 0.5f;
    }
    const auto c_true = env.object_pixels(0, samples[i].anchors[0]);
    const auto u_true = obstacle_union(env, samples[i].anchors);
    const env::PixelSet* pred[4] = {&c_pred, &u_pred, &c_pred, &u_pred};
    const env::PixelSet* truth[4] = {&c_true, &u_true, &u_true, &c_true};
    for (int m = 0; m < 4; ++m) {
      inter[m] += (*pred[m] & *truth[m]).count();
      uni[m] += (*pred[m] | *truth[m]).count();
    }
  }
  auto iou = [&](int m) { return uni[m] ? static_cast<double>(inter[m]) / uni[m] : 0.0; };
  return {iou(0), iou(1), iou(2), iou(3)};
}

DecompositionScores decomposition_iou(const models::DualModel<float>& m, const env::Gridworld& env,
                                      const std::vector<EvalSample>& samples) {
  std::size_t w = 0;
  const auto c = map_images(
      samples, [&](const Tensor<float>& x) { return m.ctrl.decode(m.params, m.ctrl.encode(m.params, x)); }, w);
  const auto u = map_images(
      samples, [&](const Tensor<float>& x) { return m.unc.decode(m.params, m.unc.encode(m.params, x)); }, w);
  return decomposition_iou(env, samples, c, u);
}

EnergySplit reconstruction_energy(const ad::ParameterStore<float>& params,
                                  const models::Branch& net, const env::Gridworld& env,
                                  const std::vector<EvalSample>& samples) {
  std::size_t w = 0;
  const auto out = map_images(
      samples, [&](const Tensor<float>& x) { return net.decode(params, net.encode(params, x)); }, w);
  EnergySplit e;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto c = env.object_pixels(0, samples[i].anchors[0]);
    const auto u = obstacle_union(env, samples[i].anchors);
    for (std::size_t p = 0; p < env::kImagePixels; ++p) {
      const double v = out[i * env::kImagePixels + p];
      if (c[p]) e.controllable += v * v;
      if (u[p]) e.obstacle += v * v;
    }
  }
  e.controllable /= static_cast<double>(samples.size());
  e.obstacle /= static_cast<double>(samples.size());
  return e;
}

std::array<double, 2> mask_recall(const ad::ParameterStore<float>& params,
                                  const models::Branch& net, const env::Gridworld& env,
                                  const std::vector<EvalSample>& samples) {
  std::size_t w = 0;
  const auto out = map_images(
      samples, [&](const Tensor<float>& x) { return net.decode(params, net.encode(params, x)); }, w);
  std::size_t hit[2] = {0, 0}, total[2] = {0, 0};
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const env::PixelSet masks[2] = {env.object_pixels(0, samples[i].anchors[0]),
                                    obstacle_union(env, samples[i].anchors)};
    for (std::size_t p = 0; p < env::kImagePixels; ++p)
      for (int m = 0; m < 2; ++m)
        if (masks[m][p]) {
          ++total[m];
          hit[m] += out[i * env::kImagePixels + p] > 0.5f;
        }
  }
  return {total[0] ? static_cast<double>(hit[0]) / total[0] : 0.0,
          total[1] ? static_cast<double>(hit[1]) / total[1] : 0.0};
}

Matrix latent_matrix(const std::vector<EvalSample>& samples, bool uncontrollable) {
  const std::size_t w = (uncontrollable ? samples.at(0).unc_latent : samples.at(0).latent).size();
  Matrix m(samples.size(), w);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& z = uncontrollable ? samples[i].unc_latent : samples[i].latent;
    for (std::size_t j = 0; j < w; ++j) m(i, j) = z.at(j);
  }
  return m;
}

Matrix anchor_matrix(const std::vector<EvalSample>& samples, std::size_t object) {
  Matrix m(samples.size(), 2);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    m(i, 0) = samples[i].anchors.at(object).x;
    m(i, 1) = samples[i].anchors.at(object).y;
  }
  return m;
}

std::vector<std::vector<env::Point>> anchor_lists(const std::vector<EvalSample>& samples) {
  std::vector<std::vector<env::Point>> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.anchors);
  return out;
}

void write_correlations(const std::filesystem::path& path, const CorrelationTable& t) {
  auto os = open_csv(path);
  os << "latent,corr_x,corr_y\n";
  for (std::size_t k = 0; k < t.size(); ++k) {
    os << k + 1;
    for (const auto& v : t[k]) {
      os << ',';
      if (v) os << *v;
      else os << "nan";
    }
    os << '\n';
  }
  close_csv(os, path);
}

void write_distance(const std::filesystem::path& path, const DistanceCurve& d) {
  auto os = open_csv(path);
  os << "j,per_rank,running_mean\n";
  for (std::size_t j = 0; j < d.per_rank.size(); ++j)
    os << j + 1 << ',' << d.per_rank[j] << ',' << d.running_mean[j] << '\n';
  close_csv(os, path);
}

void write_matrix(const std::filesystem::path& path, const Matrix& m, const std::string& prefix) {
  auto os = open_csv(path);
  os << "row";
  for (std::size_t j = 0; j < m.cols; ++j) os << ',' << prefix << j + 1;
  os << '\n';
  for (std::size_t i = 0; i < m.rows; ++i) {
    os << prefix << i + 1;
    for (std::size_t j = 0; j < m.cols; ++j) os << ',' << m(i, j);
    os << '\n';
  }
  close_csv(os, path);
}

void write_policy(const std::filesystem::path& path, const PolicyReport& p) {
  auto os = open_csv(path);
  os << "head,left,right,up,down,argmax\n";
  for (std::size_t k = 0; k < p.mean_probs.rows; ++k) {
    os << k + 1;
    for (std::size_t a = 0; a < p.mean_probs.cols; ++a) os << ',' << p.mean_probs(k, a);
    os << ',' << env::action_name(env::action_from_index(p.argmax[k])) << '\n';
  }
  close_csv(os, path);
}

void write_decomposition(const std::filesystem::path& path, const DecompositionScores& s) {
  auto os = open_csv(path);
  os << "iou_c,iou_u,cross_c,cross_u\n"
     << s.iou_c << ',' << s.iou_u << ',' << s.cross_c << ',' << s.cross_u << '\n';
  close_csv(os, path);
}

}  // namespace dlab::eval
