#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "dlab/models/models.hpp"
#include "dlab/models/objectives.hpp"
#include "support/gradcheck.hpp"

using namespace dlab;
using namespace dlab::objectives;
using ad::Tensor;
using dlab::testing::random_tensor;

namespace {

using Rng = std::mt19937_64;

// Double-loop restatement of the weighted selectivity over every
// (sample, action, draw) triple.
std::vector<double> selectivity_oracle(const std::vector<double>& cur, const std::vector<double>& next,
                                       const std::vector<double>& w, std::size_t B, std::size_t A,
                                       std::size_t N, std::size_t K) {
  std::vector<double> S(B * K, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t a = 0; a < A; ++a)
      for (std::size_t n = 0; n < N; ++n) {
        const double* xn = &next[((b * A + a) * N + n) * K];
        const double* x = &cur[b * K];
        double den = 0.0;
        for (std::size_t j = 0; j < K; ++j) den += std::fabs(xn[j] - x[j]);
        den += 1e-8;
        for (std::size_t k = 0; k < K; ++k)
          S[b * K + k] += w[(b * A + a) * K + k] *
                          std::log(1.0 / static_cast<double>(K) + std::fabs(xn[k] - x[k]) / den);
      }
  return S;
}

std::vector<double> to_vec(const Tensor<double>& t) { return {t.values().begin(), t.values().end()}; }

SelectivityBatch<double> random_batch(Rng& rng, std::size_t B, std::size_t A, std::size_t N,
                                      std::size_t K) {
  SelectivityBatch<double> s;
  s.current = random_tensor({B, K}, rng);
  s.next = random_tensor({B * A * N, K}, rng);
  s.weights = random_tensor({B * A, K}, rng, 0.0, 1.0);
  s.actions = A;
  s.samples = N;
  return s;
}

Tensor<double> random_images(std::size_t n, Rng& rng) {
  return random_tensor({n, env::kImagePixels}, rng, 0.0, 1.0);
}

}  // namespace

TEST(Reconstruction, Examples) {
  Rng rng(1);
  const auto x = random_images(1, rng);
  EXPECT_EQ(reconstruction_error(x, x).item(), 0.0);
  auto y = x.clone();
  y.values_mut()[17] += 1.0;
  EXPECT_NEAR(reconstruction_error(x, y).item(), 1.0, 1e-12);
}

TEST(Reconstruction, MatchesElementwiseOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_images(3, rng), y = random_images(3, rng), z = random_images(3, rng);
    double expect = 0.0, expect_dual = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
      expect += (x.at(i) - y.at(i)) * (x.at(i) - y.at(i));
      const double d = x.at(i) - (y.at(i) + z.at(i));
      expect_dual += d * d;
    }
    EXPECT_NEAR(reconstruction_error(x, y).item(), expect, 1e-9);
    EXPECT_NEAR(dual_reconstruction_error(x, y, z).item(), expect_dual, 1e-9);
  }
}

TEST(Reconstruction, DualReducesToSingleWithZeroSecondBranch) {
  Rng rng(3);
  const auto x = ad::cast<float>(random_images(4, rng));
  const auto c = ad::cast<float>(random_images(4, rng));
  const Tensor<float> zero({4, env::kImagePixels}, 0.0f);
  const float single = reconstruction_error(x, c).item();
  const float dual = dual_reconstruction_error(x, c, zero).item();
  EXPECT_EQ(std::memcmp(&single, &dual, sizeof(float)), 0);

  const auto half = ad::scale(x, 0.5f);
  EXPECT_EQ(dual_reconstruction_error(x, half, half).item(), 0.0f);
}

TEST(Reconstruction, ShapeMismatchThrows) {
  EXPECT_THROW(reconstruction_error(Tensor<float>({1, 576}), Tensor<float>({1, 575})),
               ad::ShapeError);
}

TEST(Selectivity, SingleTransitionExample) {
  SelectivityBatch<double> s;
  s.current = Tensor<double>({1, 4}, std::vector<double>{0, 0, 0, 0});
  s.next = Tensor<double>({1, 4}, std::vector<double>{1, 0, 0, 0});
  s.weights = Tensor<double>({1, 4}, 1.0);
  s.actions = 1;
  s.samples = 1;
  const auto S = selectivity(s);
  EXPECT_NEAR(S.at(0), std::log(1.25), 1e-7);
  EXPECT_NEAR(S.at(0), 0.2231, 1e-4);
  EXPECT_NEAR(S.at(1), std::log(0.25), 1e-12);
  EXPECT_NEAR(S.at(1), -1.3863, 1e-4);
}

TEST(Selectivity, UnchangedLatentsGiveUniformTerm) {
  Rng rng(4);
  auto s = random_batch(rng, 2, 3, 4, 4);
  s.next = ad::repeat_rows(s.current, 12).detach();
  const auto terms = transition_terms(s);
  for (double v : terms.values()) EXPECT_DOUBLE_EQ(v, std::log(0.25));
}

// 1000 random batches of random shape against the double-loop oracle.
TEST(Selectivity, MatchesBruteForceOracle) {
  Rng rng(5);
  std::uniform_int_distribution<std::size_t> small(1, 4), width(2, 6);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t B = small(rng), A = small(rng), N = small(rng) + 1, K = width(rng);
    const auto s = random_batch(rng, B, A, N, K);
    const auto got = to_vec(selectivity(s));
    const auto expect =
        selectivity_oracle(to_vec(s.current), to_vec(s.next), to_vec(s.weights), B, A, N, K);
    ASSERT_EQ(got.size(), expect.size());
    for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::fabs(got[i] - expect[i]));
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(Selectivity, RatiosPartitionAndTermsAreBounded) {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t K = 2 + trial % 5;
    const auto s = random_batch(rng, 2, 2, 3, K);
    const auto terms = transition_terms(s);
    const double lo = std::log(1.0 / K), hi = std::log(1.0 / K + 1.0);
    for (std::size_t r = 0; r < terms.dim(0); ++r) {
      double ratio_sum = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        const double t = terms.at(r * K + k);
        EXPECT_GE(t, lo - 1e-12);
        EXPECT_LE(t, hi + 1e-12);
        ratio_sum += std::exp(t) - 1.0 / K;
      }
      EXPECT_NEAR(ratio_sum, 1.0, 1e-6);
    }
  }
}

TEST(Selectivity, ReturnsSumDrawsPerAction) {
  Rng rng(7);
  const auto s = random_batch(rng, 2, 3, 4, 4);
  const auto terms = transition_terms(s);
  const auto ret = action_returns(s);
  ASSERT_EQ(ret.shape(), (ad::Shape{6, 4}));
  for (std::size_t row = 0; row < 6; ++row)
    for (std::size_t k = 0; k < 4; ++k) {
      double sum = 0.0;
      for (std::size_t n = 0; n < 4; ++n) sum += terms.at((row * 4 + n) * 4 + k);
      EXPECT_NEAR(ret.at(row * 4 + k), sum, 1e-12);
    }
}

TEST(Selectivity, ShapeErrors) {
  Rng rng(8);
  auto s = random_batch(rng, 2, 2, 2, 4);
  s.samples = 3;
  EXPECT_THROW(selectivity(s), ad::ShapeError);
  s = random_batch(rng, 2, 2, 2, 4);
  s.weights = Tensor<double>({3, 4});
  EXPECT_THROW(selectivity(s), ad::ShapeError);
}

TEST(Selectivity, PolicyWeightsLayout) {
  const Tensor<double> p0({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  const Tensor<double> p1({2, 3}, std::vector<double>{7, 8, 9, 10, 11, 12});
  const auto w = policy_weights<double>({p0, p1});
  ASSERT_EQ(w.shape(), (ad::Shape{6, 2}));
  EXPECT_EQ(to_vec(w), (std::vector<double>{1, 7, 2, 8, 3, 9, 4, 10, 5, 11, 6, 12}));
  EXPECT_FALSE(w.requires_grad());
}

TEST(TotalLoss, Arithmetic) {
  const std::vector<double> s(4, 0.1);
  EXPECT_NEAR(total_loss(2.0, s, 0.05), 1.98, 1e-12);
  EXPECT_EQ(total_loss(2.5, s, 0.0), 2.5);
  EXPECT_EQ(kDefaultLambda, 0.05);
  EXPECT_THROW(total_loss(1.0, s, -0.1), std::invalid_argument);
  const auto t = total_loss(Tensor<double>::scalar(2.0), Tensor<double>::scalar(0.4), 0.05);
  EXPECT_NEAR(t.item(), 1.98, 1e-12);
  EXPECT_EQ(total_loss(Tensor<double>::scalar(2.0), Tensor<double>::scalar(0.4), 0.0).item(), 2.0);
}

namespace {

// Thomas objective on a small batch: mean reconstruction minus lambda times
// the mean summed selectivity. The policy weights are frozen at the initial
// parameters so the finite-difference oracle sees the same function the
// gradient describes.
struct ThomasFixture {
  models::ThomasModel<double> m = models::build_thomas<double>(4, 21);
  Tensor<double> x, next, weights;
  static constexpr std::size_t B = 2, A = 4, N = 2;

  ThomasFixture() {
    Rng rng(22);
    x = random_images(B, rng);
    next = random_images(B * A * N, rng);
    const auto z = m.net.encode(m.params, x);
    std::vector<Tensor<double>> probs;
    for (std::size_t k = 0; k < 4; ++k) probs.push_back(m.policy.probs(m.params, z, k));
    weights = policy_weights(probs);
  }

  Tensor<double> loss() const {
    const auto z = m.net.encode(m.params, x);
    SelectivityBatch<double> s{z, m.net.encode(m.params, next), weights, A, N};
    const auto recon = ad::scale(reconstruction_error(x, m.net.decode(m.params, z)), 1.0 / B);
    return total_loss(recon, ad::scale(ad::sum(selectivity(s)), 1.0 / B), 0.05);
  }
};

}  // namespace

TEST(TotalLoss, EncoderGradientMatchesFiniteDifferences) {
  ThomasFixture f;
  std::vector<Tensor<double>> inputs;
  for (const char* name : {"enc.conv1.w", "enc.conv2.b", "enc.fc1.b", "enc.fc2.w", "enc.fc2.b",
                           "dec.fc1.w", "dec.deconv2.b"})
    inputs.push_back(f.m.params.get(name));
  const auto r = dlab::testing::gradcheck([&](const auto&) { return f.loss(); }, inputs);
  EXPECT_LE(r.worst_relative_error, 1e-4) << "input " << r.worst_input;
}

TEST(TotalLoss, PolicyHeadsGetNoPathwiseGradient) {
  ThomasFixture f;
  f.m.params.zero_grad();
  ad::backward(f.loss());
  for (const auto& [name, t] : f.m.params)
    if (name.rfind("policy.", 0) == 0)
      for (double g : t.grad()) EXPECT_EQ(g, 0.0) << name;
  double enc = 0.0;
  for (double g : f.m.params.get("enc.fc2.w").grad()) enc += std::fabs(g);
  EXPECT_GT(enc, 0.0);
}

TEST(TotalLoss, DualGradientMatchesFiniteDifferences) {
  auto d = models::build_dual<double>(4, 3, 31);
  Rng rng(32);
  const auto x = random_images(2, rng);
  const auto next = random_images(2 * 4 * 2, rng);
  std::vector<Tensor<double>> probs;
  for (std::size_t k = 0; k < 4; ++k)
    probs.push_back(d.policy.probs(d.params, d.ctrl.encode(d.params, x), k));
  const auto weights = policy_weights(probs);
  auto loss = [&] {
    const auto zc = d.ctrl.encode(d.params, x);
    SelectivityBatch<double> s{zc, d.ctrl.encode(d.params, next), weights, 4, 2};
    const auto recon = dual_reconstruction_error(x, d.ctrl.decode(d.params, zc),
                                                 d.unc.decode(d.params, d.unc.encode(d.params, x)));
    return total_loss(ad::scale(recon, 0.5), ad::scale(ad::sum(selectivity(s)), 0.5), 0.05);
  };
  std::vector<Tensor<double>> inputs;
  for (const char* name : {"ctrl.enc.fc2.w", "ctrl.enc.conv1.b", "unc.enc.fc2.w", "unc.dec.fc1.b",
                           "unc.dec.deconv1.b"})
    inputs.push_back(d.params.get(name));
  const auto r = dlab::testing::gradcheck([&](const auto&) { return loss(); }, inputs);
  EXPECT_LE(r.worst_relative_error, 1e-4) << "input " << r.worst_input;
}

TEST(Reinforce, BaselineIsEmaSeededByFirstReward) {
  ReinforceBaseline b(2);
  EXPECT_FALSE(b.initialized(0));
  b.update(0, 4.0);
  EXPECT_EQ(b.value(0), 4.0);
  b.update(0, 2.0);
  EXPECT_NEAR(b.value(0), 0.99 * 4.0 + 0.01 * 2.0, 1e-15);
  EXPECT_EQ(b.value(1), 0.0);
  EXPECT_FALSE(b.initialized(1));
}

TEST(Reinforce, CenteredRewardGivesZeroGradient) {
  Tensor<double> logits({3, 4}, std::vector<double>{0.1, 0.2, -0.3, 0.5, 1, 0, 0, 0, 2, -1, 0.5, 0}, true);
  const std::vector<std::size_t> actions{0, 3, 2};
  const std::vector<double> adv{0.0, 0.0, 0.0};
  ad::backward(reinforce_surrogate(ad::log_softmax_rows(logits), std::span(actions), std::span(adv)));
  for (double g : logits.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Reinforce, HeadsDifferOnlyInLogProbFactor) {
  const std::vector<double> z{0.3, -0.1, 0.7, 0.2};
  const double adv = 0.8;
  std::vector<std::vector<double>> grads;
  std::vector<double> p;
  for (std::size_t a : {1u, 2u}) {
    Tensor<double> logits({1, 4}, z, true);
    const std::vector<std::size_t> act{a};
    const std::vector<double> ad_{adv};
    ad::backward(reinforce_surrogate(ad::log_softmax_rows(logits), std::span(act), std::span(ad_)));
    grads.emplace_back(logits.grad().begin(), logits.grad().end());
    p = to_vec(ad::softmax_rows(Tensor<double>({1, 4}, z)));
  }
  // d/dlogits of -adv * log pi(a) = -adv * (onehot(a) - pi)
  for (std::size_t h = 0; h < 2; ++h)
    for (std::size_t j = 0; j < 4; ++j)
      EXPECT_NEAR(grads[h][j], -adv * ((j == h + 1 ? 1.0 : 0.0) - p[j]), 1e-12);
}

// Averaging 10^4 single-sample estimates approximates the exact gradient of
// sum_a pi(a) r(a) obtained by enumerating all four actions.
TEST(Reinforce, EstimatorIsUnbiased) {
  const std::vector<double> theta{0.3, -0.2, 0.5, 0.1};
  const std::vector<double> reward{1.0, -0.5, 2.0, 0.3};
  const auto pi = to_vec(ad::softmax_rows(Tensor<double>({1, 4}, theta)));
  double J = 0.0;
  for (std::size_t a = 0; a < 4; ++a) J += pi[a] * reward[a];
  std::vector<double> exact(4);
  for (std::size_t a = 0; a < 4; ++a) exact[a] = pi[a] * (reward[a] - J);

  Rng rng(40);
  std::discrete_distribution<std::size_t> sample(pi.begin(), pi.end());
  ReinforceBaseline baseline(1);
  std::vector<double> est(4, 0.0);
  constexpr int kSamples = 10000;
  for (int i = 0; i < kSamples; ++i) {
    Tensor<double> logits({1, 4}, theta, true);
    const std::vector<std::size_t> act{sample(rng)};
    const double r = reward[act[0]];
    const std::vector<double> adv{baseline.initialized(0) ? r - baseline.value(0) : 0.0};
    ad::backward(reinforce_surrogate(ad::log_softmax_rows(logits), std::span(act), std::span(adv)));
    baseline.update(0, r);
    for (std::size_t j = 0; j < 4; ++j) est[j] -= logits.grad()[j] / kSamples;
  }
  double err = 0.0, norm = 0.0;
  for (std::size_t j = 0; j < 4; ++j) {
    err += (est[j] - exact[j]) * (est[j] - exact[j]);
    norm += exact[j] * exact[j];
  }
  EXPECT_LE(std::sqrt(err / norm), 0.05);
}
