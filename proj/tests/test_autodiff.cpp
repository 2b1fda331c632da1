#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "dlab/ad/checkpoint.hpp"
#include "dlab/ad/layers.hpp"
#include "dlab/ad/ops.hpp"
#include "dlab/ad/optim.hpp"
#include "support/gradcheck.hpp"

using namespace dlab::ad;
using dlab::testing::gradcheck;
using dlab::testing::random_tensor;
using TD = Tensor<double>;

namespace {

constexpr double kGradTol = 1e-4;

// Projects an arbitrary output onto a fixed random direction so every output
// element contributes a distinct weight to the scalar loss.
TD project(const TD& out, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return sum(mul(out, random_tensor(out.shape(), rng)));
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("dlab_test_" + name);
}

}  // namespace

TEST(Tensor, RejectsInconsistentShape) {
  EXPECT_THROW(Tensor<float>(Shape{2, 3}, std::vector<float>(5)), ShapeError);
  EXPECT_THROW(Tensor<float>(Shape{0, 3}), ShapeError);
}

TEST(Ops, ShapeMismatchReportsBothShapes) {
  Tensor<float> a(Shape{2, 3}), b(Shape{3, 2});
  try {
    add(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos);
    EXPECT_NE(msg.find("[3x2]"), std::string::npos);
  }
}

TEST(Ops, ConvOutputGeometry) {
  Tensor<float> x(Shape{1, 1, 24, 24});
  Tensor<float> w(Shape{16, 1, 4, 4}), b(Shape{16});
  auto y = conv2d(x, w, b, 2);
  EXPECT_EQ(y.shape(), (Shape{1, 16, 11, 11}));
  EXPECT_EQ(conv_out_size(11, 3, 2), 5u);
  EXPECT_EQ(deconv_out_size(5, 3, 2), 11u);
  EXPECT_EQ(deconv_out_size(11, 4, 2), 24u);
}

TEST(Ops, ReluAndSoftmaxExamples) {
  Tensor<float> x(Shape{3}, {-1.f, 0.f, 2.f});
  auto r = relu(x);
  EXPECT_EQ(r.at(0), 0.f);
  EXPECT_EQ(r.at(1), 0.f);
  EXPECT_EQ(r.at(2), 2.f);

  auto s = softmax_rows(Tensor<float>(Shape{1, 4}));
  for (int i = 0; i < 4; ++i) EXPECT_FLOAT_EQ(s.at(i), 0.25f);
}

TEST(Ops, SoftmaxRowsArePositiveAndNormalised) {
  std::mt19937_64 rng(3);
  auto logits = random_tensor({50, 4}, rng, -20, 20);
  auto p = softmax_rows(logits);
  for (std::size_t i = 0; i < 50; ++i) {
    double total = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_GT(p.at(i * 4 + j), 0.0);
      total += p.at(i * 4 + j);
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(Backward, LinearAndQuadraticExamples) {
  TD p(Shape{3}, {0.5, -1.0, 2.0}, true);
  backward(sum(p));
  for (double g : p.grad()) EXPECT_EQ(g, 1.0);

  TD q(Shape{2}, {1.0, -2.0}, true);
  backward(sum(square(q)));
  EXPECT_EQ(q.grad()[0], 2.0);
  EXPECT_EQ(q.grad()[1], -4.0);
}

TEST(Backward, RejectsNonScalarLoss) {
  TD p(Shape{3}, {1, 2, 3}, true);
  EXPECT_THROW(backward(p), ShapeError);
}

TEST(Backward, UnreachableParameterGetsZero) {
  ParameterStore<double> store;
  store.add("used", TD(Shape{2}, {1.0, 2.0}));
  store.add("unused", TD(Shape{2}, {3.0, 4.0}));
  store.zero_grad();
  backward(sum(store.get("used")));
  for (double g : store.get("unused").grad()) EXPECT_EQ(g, 0.0);
  for (double g : store.get("used").grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, DetachStopsGradient) {
  TD p(Shape{2}, {1.0, 2.0}, true);
  backward(sum(mul(p, p.detach())));
  EXPECT_EQ(p.grad()[0], 1.0);
  EXPECT_EQ(p.grad()[1], 2.0);
}

TEST(Backward, DeepChainDoesNotOverflow) {
  TD p(Shape{1}, {0.1}, true);
  TD x = p;
  for (int i = 0; i < 200000; ++i) x = add_scalar(x, 0.0);
  backward(x);
  EXPECT_EQ(p.grad()[0], 1.0);
}

// --- gradient checks, one per layer kind -----------------------------------

TEST(GradCheck, Elementwise) {
  std::mt19937_64 rng(1);
  auto a = random_tensor({3, 4}, rng, 0.5, 2.0);
  auto b = random_tensor({3, 4}, rng, 0.5, 2.0);
  auto r = gradcheck(
      [](const std::vector<TD>& in) {
        auto t = add(mul(in[0], in[1]), div(in[0], in[1]));
        t = sub(t, log(in[1]));
        t = add(t, abs(sub(in[0], scale(in[1], 0.3))));
        return project(add(tanh(t), sigmoid(square(t))));
      },
      {a, b});
  EXPECT_LT(r.worst_relative_error, kGradTol);
}

TEST(GradCheck, Relu) {
  std::mt19937_64 rng(2);
  auto r = gradcheck([](const std::vector<TD>& in) { return project(relu(in[0])); },
                     {random_tensor({5, 7}, rng)});
  EXPECT_LT(r.worst_relative_error, kGradTol);
}

TEST(GradCheck, SoftmaxAndLogSoftmax) {
  std::mt19937_64 rng(3);
  auto r = gradcheck(
      [](const std::vector<TD>& in) {
        return add(project(softmax_rows(in[0]), 5), project(log_softmax_rows(in[0]), 6));
      },
      {random_tensor({4, 4}, rng, -3, 3)});
  EXPECT_LT(r.worst_relative_error, kGradTol);
}

TEST(GradCheck, Dense) {
  std::mt19937_64 rng(4);
  auto r = gradcheck(
      [](const std::vector<TD>& in) { return project(linear(in[0], in[1], in[2])); },
      {random_tensor({3, 5}, rng), random_tensor({4, 5}, rng), random_tensor({4}, rng)});
  EXPECT_LT(r.worst_relative_error, kGradTol);
}

TEST(GradCheck, Conv2d) {
  std::mt19937_64 rng(5);
  auto r = gradcheck(
      [](const std::vector<TD>& in) { return project(conv2d(in[0], in[1], in[2], 2)); },
      {random_tensor({2, 3, 9, 8}, rng), random_tensor({4, 3, 3, 3}, rng),
       random_tensor({4}, rng)});
  EXPECT_LT(r.worst_relative_error, kGradTol);
}

TEST(GradCheck, ConvTranspose2d) {
  std::mt19937_64 rng(6);
  auto r = gradcheck(
      [](const std::vector<TD>& in) { return project(conv_transpose2d(in[0], in[1], in[2], 2)); },
      {random_tensor({2, 3, 4, 5}, rng), random_tensor({3, 2, 4, 4}, rng),
       random_tensor({2}, rng)});
  EXPECT_LT(r.worst_relative_error, kGradTol);
}

TEST(GradCheck, ShapeOps) {
  std::mt19937_64 rng(7);
  auto r = gradcheck(
      [](const std::vector<TD>& in) {
        auto rep = repeat_rows(in[0], 3);                       // [6,4]
        auto cols = broadcast_cols(row_sum(in[1]), 4);          // [6,4]
        auto both = concat_cols(slice_cols(rep, 1, 3), cols);   // [6,6]
        auto stacked = concat_rows<double>({both, slice_rows(both, 2, 4)});  // [8,6]
        auto r3 = sum_dim1(reshape(stacked, {2, 4, 6}));        // [2,6]
        return project(r3);
      },
      {random_tensor({2, 4}, rng), random_tensor({6, 3}, rng)});
  EXPECT_LT(r.worst_relative_error, kGradTol);
}

TEST(GradCheck, LstmStep) {
  std::mt19937_64 rng(8);
  LstmCell cell{"lstm", 3, 2};
  ParameterStore<double> store;
  init_lstm(store, cell, rng);
  std::vector<TD> inputs{store.get("lstm.wx"), store.get("lstm.wh"), store.get("lstm.b"),
                         random_tensor({1, 3}, rng), random_tensor({1, 3}, rng)};
  // perturb the bias away from zero so every path is exercised
  for (auto& v : inputs[2].values_mut()) v = 0.1;
  auto r = gradcheck(
      [&cell](const std::vector<TD>& in) {
        ParameterStore<double> s;
        s.add("lstm.wx", in[0]);
        s.add("lstm.wh", in[1]);
        s.add("lstm.b", in[2]);
        auto st = lstm_zero_state<double>(cell, 1);
        st = lstm_step(s, cell, in[3], st);
        st = lstm_step(s, cell, in[4], st);
        return add(project(st.h, 1), project(st.c, 2));
      },
      inputs);
  EXPECT_LT(r.worst_relative_error, kGradTol);
}

TEST(GradCheck, SequentialStack) {
  std::mt19937_64 rng(9);
  Sequential net{Conv2d{"c1", 1, 3, 4, 2, Activation::relu},
                 Conv2d{"c2", 3, 2, 3, 2, Activation::relu}, Reshape{{2 * 2 * 2}},
                 Dense{"fc", 8, 3, Activation::tanh}};
  ParameterStore<double> store;
  init_sequential(store, net, rng);
  auto x = random_tensor({2, 1, 12, 12}, rng);
  std::vector<TD> inputs;
  std::vector<std::string> names;
  for (auto& [n, t] : store) {
    names.push_back(n);
    inputs.push_back(t);
  }
  inputs.push_back(x);
  auto r = gradcheck(
      [&](const std::vector<TD>& in) {
        ParameterStore<double> s;
        for (std::size_t i = 0; i < names.size(); ++i) s.add(names[i], in[i]);
        return project(forward_sequential(s, net, in.back()));
      },
      inputs);
  EXPECT_LT(r.worst_relative_error, kGradTol);
}

// --- optimizers --------------------------------------------------------------

TEST(Optim, SgdExample) {
  ParameterStore<float> store;
  auto& p = store.add("p", Tensor<float>(Shape{1}, {1.0f}));
  p.grad_mut()[0] = 2.0f;
  Sgd<float>(0.1).step(store);
  EXPECT_FLOAT_EQ(p.at(0), 0.8f);
}

TEST(Optim, SgdZeroGradientIsIdentity) {
  ParameterStore<float> store;
  auto& p = store.add("p", Tensor<float>(Shape{2}, {1.5f, -3.0f}));
  store.zero_grad();
  Sgd<float>(0.1).step(store);
  EXPECT_EQ(p.at(0), 1.5f);
  EXPECT_EQ(p.at(1), -3.0f);
}

TEST(Optim, AdamFirstStepIsSignStep) {
  // m1 = (1-b1) g, v1 = (1-b2) g^2; bias correction gives mhat = g and
  // vhat = g^2, so the step is lr * g / (|g| + eps).
  for (double g : {0.3, -2.0, 1e-3}) {
    ParameterStore<double> store;
    auto& p = store.add("p", TD(Shape{1}, {1.0}));
    p.grad_mut()[0] = g;
    Adam<double> adam({0.01, 0.9, 0.999, 1e-8});
    adam.step(store);
    const double expected = 1.0 - 0.01 * g / (std::abs(g) + 1e-8);
    EXPECT_NEAR(p.at(0), expected, 1e-12);
    EXPECT_NEAR(std::abs(p.at(0) - 1.0), 0.01, 1e-6);
  }
}

TEST(Optim, MissingGradientRejected) {
  ParameterStore<float> store;
  store.add("p", Tensor<float>(Shape{1}, {1.0f}));
  EXPECT_THROW(Sgd<float>(0.1).step(store), std::invalid_argument);
  EXPECT_THROW(Adam<float>().step(store), std::invalid_argument);
}

TEST(Optim, AdamStepCounterIncreases) {
  ParameterStore<float> store;
  store.add("p", Tensor<float>(Shape{1}, {1.0f}));
  store.zero_grad();
  Adam<float> adam;
  adam.step(store);
  adam.step(store);
  EXPECT_EQ(adam.steps(), 2u);
}

// --- parameter store and checkpoints ---------------------------------------

TEST(ParameterStore, DuplicateNameRejected) {
  ParameterStore<float> store;
  store.add("a", Tensor<float>(Shape{1}));
  EXPECT_THROW(store.add("a", Tensor<float>(Shape{1})), std::invalid_argument);
}

TEST(ParameterStore, CopyIsDeep) {
  ParameterStore<float> a;
  a.add("w", Tensor<float>(Shape{2}, {1.f, 2.f}));
  ParameterStore<float> b = a;
  b.get("w").values_mut()[0] = 9.f;
  EXPECT_EQ(a.get("w").at(0), 1.f);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  std::mt19937_64 rng(11);
  ParameterStore<float> store;
  init_sequential(store, Sequential{Dense{"a", 5, 3}, Conv2d{"b", 2, 4, 3, 1}}, rng);
  // special values survive too
  store.get("a.b").values_mut()[0] = -0.0f;
  store.get("a.b").values_mut()[1] = std::numeric_limits<float>::denorm_min();
  const auto path = temp_path("roundtrip.ckpt");
  save_checkpoint(store, path);
  auto loaded = load_checkpoint(path);
  ASSERT_EQ(loaded.size(), store.size());
  auto it = loaded.begin();
  for (const auto& [name, t] : store) {
    EXPECT_EQ(it->first, name);
    ASSERT_EQ(it->second.shape(), t.shape());
    EXPECT_EQ(std::memcmp(it->second.values().data(), t.values().data(), t.numel() * 4), 0);
    ++it;
  }
}

TEST(Checkpoint, WrongMagicIsFormatError) {
  const auto path = temp_path("badmagic.ckpt");
  std::ofstream(path, std::ios::binary) << "NOPE1\x00\x00\x00\x00";
  EXPECT_THROW(load_checkpoint(path), dlab::FormatError);
}

TEST(Checkpoint, TruncatedIsFormatError) {
  ParameterStore<float> store;
  store.add("x", Tensor<float>(Shape{4}, {1, 2, 3, 4}));
  const auto path = temp_path("trunc.ckpt");
  save_checkpoint(store, path);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
  EXPECT_THROW(load_checkpoint(path), dlab::FormatError);
}

TEST(Checkpoint, CopyParametersRejectsShapeMismatch) {
  ParameterStore<float> src, dst;
  src.add("w", Tensor<float>(Shape{2}));
  dst.add("ctrl.w", Tensor<float>(Shape{3}));
  EXPECT_THROW(copy_parameters(src, dst, "", "ctrl."), dlab::FormatError);
  ParameterStore<float> other;
  other.add("v", Tensor<float>(Shape{2}));
  EXPECT_THROW(copy_parameters(other, dst, "", "ctrl."), dlab::FormatError);
}

TEST(Determinism, SameSeedSameTrajectory) {
  auto run = [] {
    Rng rng(123);
    ParameterStore<float> store;
    Sequential net{Dense{"a", 4, 8, Activation::relu}, Dense{"b", 8, 2, Activation::tanh}};
    init_sequential(store, net, rng);
    Adam<float> adam;
    std::uniform_real_distribution<float> dist(-1, 1);
    for (int step = 0; step < 20; ++step) {
      std::vector<float> xv(12);
      for (auto& v : xv) v = dist(rng);
      store.zero_grad();
      backward(sum(square(forward_sequential(store, net, Tensor<float>(Shape{3, 4}, xv)))));
      adam.step(store);
    }
    return store;
  };
  auto a = run(), b = run();
  auto it = b.begin();
  for (const auto& [name, t] : a) {
    EXPECT_EQ(std::memcmp(t.values().data(), it->second.values().data(), t.numel() * 4), 0);
    ++it;
  }
}
