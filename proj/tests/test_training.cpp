#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dlab/ad/checkpoint.hpp"
#include "dlab/errors.hpp"
#include "dlab/training/training.hpp"

using namespace dlab;
using namespace dlab::training;

namespace {

TrainConfig tiny(models::ModelKind kind, std::uint64_t seed = 3) {
  TrainConfig c;
  c.kind = kind;
  c.budget = 20 * env::kNumActions * c.samples;  // 20 base states
  c.batch = 8;
  c.epochs = 2;
  c.seed = seed;
  return c;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("dlab_training_" + name);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Encoder and decoder values only, in store order.
std::vector<float> branch_values(const ad::ParameterStore<float>& p) {
  std::vector<float> out;
  for (const auto& [name, t] : p)
    if (name.rfind("enc.", 0) == 0 || name.rfind("dec.", 0) == 0)
      out.insert(out.end(), t.values().begin(), t.values().end());
  return out;
}

bool bitwise_equal(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

}  // namespace

TEST(Config, ParsesKeyValues) {
  const auto kv = parse_key_values("# comment\n\nlambda = 0.1\n  kind=dual_scratch  \nseed = 7\n");
  TrainConfig c;
  c.apply(kv);
  EXPECT_DOUBLE_EQ(c.lambda, 0.1);
  EXPECT_EQ(c.kind, models::ModelKind::dual_scratch);
  EXPECT_EQ(c.seed, 7u);
}

TEST(Config, Defaults) {
  const TrainConfig c;
  EXPECT_DOUBLE_EQ(c.lambda, 0.05);
  EXPECT_EQ(c.samples, 20u);
  EXPECT_EQ(c.budget, 200000u);
  EXPECT_EQ(c.batch, 32u);
  EXPECT_EQ(c.base_states(), 2500u);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(parse_key_values("lambda 0.1\n"), ConfigError);
  EXPECT_THROW(parse_key_values("seed = 1\nseed = 2\n"), ConfigError);
  EXPECT_THROW(parse_key_values(" = 3\n"), ConfigError);
  TrainConfig c;
  EXPECT_THROW(c.set("learning_rate", "0.1"), ConfigError);
  EXPECT_THROW(c.set("budget", "-5"), ConfigError);
  EXPECT_THROW(c.set("lambda", "abc"), ConfigError);
  EXPECT_THROW(c.set("scenario", "situation9"), ConfigError);
  EXPECT_THROW(read_key_values(temp_path("missing.cfg")), IoError);
}

TEST(Config, ValidateChecksConsistency) {
  TrainConfig c;
  c.budget = 1000;  // not a multiple of 4 * 20
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lambda = -0.1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.kind = models::ModelKind::dual_pretrained;
  EXPECT_THROW(c.validate(), ConfigError);
  c.pretrain = temp_path("does_not_exist.ckpt").string();
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, KeyValueRoundTrip) {
  TrainConfig c;
  c.scenario = env::Scenario::situation2;
  c.kind = models::ModelKind::ae;
  c.lambda = 0.125;
  c.seed = 99;
  c.lr = 3e-4;
  c.log = "out/log.csv";
  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : c.to_key_values()) kv[k] = v;
  TrainConfig d;
  d.apply(kv);
  EXPECT_EQ(d.to_key_values(), c.to_key_values());
}

TEST(Corpus, HoldsEveryActionAndDraw) {
  const auto config = env::EnvConfig::for_scenario(env::Scenario::situation1);
  env::Rng rng(5);
  const Corpus corpus(config, 6, 3, rng);
  EXPECT_EQ(corpus.tuples(), 6u * 4u * 3u);
  const std::vector<std::size_t> idx{4, 1};
  const auto x = corpus.render_bases(idx);
  const auto xn = corpus.render_successors(idx);
  EXPECT_EQ(x.shape(), (ad::Shape{2, env::kImagePixels}));
  EXPECT_EQ(xn.shape(), (ad::Shape{24, env::kImagePixels}));
  // row (b=1, a=2, n=1) renders base 1, action up, draw 1
  const auto want = corpus.env().render(env::EnvState{corpus.next(1, 2, 1), 0, {}});
  for (std::size_t p = 0; p < env::kImagePixels; ++p)
    ASSERT_EQ(xn.at((12 + 2 * 3 + 1) * env::kImagePixels + p), want[p]);
  for (std::size_t i = 0; i < corpus.size(); ++i)
    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t n = 0; n < 3; ++n)
        EXPECT_TRUE(corpus.env().is_legal(env::EnvState{corpus.next(i, a, n), 0, {}}));
}

TEST(Training, BudgetAccounting) {
  auto c = tiny(models::ModelKind::thomas);
  c.epochs = 1;
  auto r = train(c);
  EXPECT_EQ(r.consumed, c.budget);
  EXPECT_EQ(r.updates, 3u);  // 20 states in batches of 8
  c.epochs = 3;
  r = train(c);
  EXPECT_EQ(r.consumed, 3 * c.budget);
  EXPECT_EQ(r.log.size(), 9u);
}

TEST(Training, ZeroLambdaThomasMatchesAutoencoderBitwise) {
  auto ae_cfg = tiny(models::ModelKind::ae, 11);
  auto th_cfg = tiny(models::ModelKind::thomas, 11);
  th_cfg.lambda = 0.0;
  std::vector<std::vector<float>> ae_traj, th_traj;
  const auto ae = train(ae_cfg, [&](std::size_t, const auto&, const auto& p) { ae_traj.push_back(branch_values(p)); });
  const auto th = train(th_cfg, [&](std::size_t, const auto&, const auto& p) { th_traj.push_back(branch_values(p)); });
  ASSERT_EQ(ae_traj.size(), th_traj.size());
  ASSERT_FALSE(ae_traj.empty());
  for (std::size_t i = 0; i < ae_traj.size(); ++i) {
    EXPECT_TRUE(bitwise_equal(ae_traj[i], th_traj[i])) << "diverged at update " << i;
    EXPECT_EQ(ae.log[i].recon, th.log[i].recon);
  }
  EXPECT_FALSE(bitwise_equal(ae_traj.front(), ae_traj.back()));
}

TEST(Training, PositiveLambdaChangesTrajectory) {
  const auto ae = train(tiny(models::ModelKind::ae, 11));
  const auto th = train(tiny(models::ModelKind::thomas, 11));
  EXPECT_FALSE(bitwise_equal(branch_values(ae.params), branch_values(th.params)));
}

TEST(Training, SeededDeterminism) {
  const auto a = train(tiny(models::ModelKind::dual_scratch, 4));
  const auto b = train(tiny(models::ModelKind::dual_scratch, 4));
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].recon, b.log[i].recon);
    EXPECT_EQ(a.log[i].selectivity, b.log[i].selectivity);
  }
  const auto c = train(tiny(models::ModelKind::dual_scratch, 5));
  EXPECT_NE(a.log.back().recon, c.log.back().recon);
}

TEST(Training, ReportTotalsFollowSignConvention) {
  const auto r = train(tiny(models::ModelKind::thomas));
  for (const auto& rep : r.log) {
    ASSERT_EQ(rep.selectivity.size(), 4u);
    double s = 0.0;
    for (double v : rep.selectivity) {
      // each head sums N terms bounded by log(1/K) and log(1/K + 1)
      EXPECT_GE(v, 20.0 * std::log(0.25) - 1e-4);
      EXPECT_LE(v, 20.0 * std::log(1.25) + 1e-4);
      s += v;
    }
    EXPECT_NEAR(rep.total, rep.recon - 0.05 * s, 1e-9);
    EXPECT_DOUBLE_EQ(rep.lambda, 0.05);
  }
}

TEST(Training, AutoencoderLossDecreases) {
  TrainConfig c;
  c.kind = models::ModelKind::ae;
  c.budget = 100 * 4 * c.samples;  // 4 updates per epoch
  c.epochs = 500;
  c.seed = 1;
  const auto r = train(c);
  ASSERT_EQ(r.log.size(), 2000u);
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < 1000; ++i) {
    first += r.log[i].recon;
    last += r.log[1000 + i].recon;
  }
  EXPECT_LT(last, first);
}

TEST(Training, PretrainedDualLoadsCheckpoint) {
  auto th_cfg = tiny(models::ModelKind::thomas, 2);
  th_cfg.checkpoint = temp_path("thomas.ckpt").string();
  const auto th = train(th_cfg);

  auto dual_cfg = tiny(models::ModelKind::dual_pretrained, 2);
  dual_cfg.pretrain = th_cfg.checkpoint;
  dual_cfg.epochs = 1;
  dual_cfg.lr = 1e-30;  // Adam moves each weight by at most ~lr per update
  const auto dual = train(dual_cfg);
  for (const auto& [name, t] : th.params) {
    const auto& d = dual.params.get("ctrl." + name);
    ASSERT_EQ(d.numel(), t.numel());
    for (std::size_t i = 0; i < t.numel(); ++i) ASSERT_NEAR(d.at(i), t.at(i), 1e-28) << name;
  }
  const auto scratch = train_dual(dual_cfg, nullptr);
  EXPECT_NE(scratch.params.get("ctrl.enc.fc2.w").at(0), dual.params.get("ctrl.enc.fc2.w").at(0));

  dual_cfg.pretrain = temp_path("not_there.ckpt").string();
  EXPECT_THROW(train(dual_cfg), ConfigError);
  std::filesystem::remove(th_cfg.checkpoint);
}

TEST(Training, WritesCheckpointAndLog) {
  auto c = tiny(models::ModelKind::thomas);
  c.checkpoint = temp_path("out.ckpt").string();
  c.log = temp_path("out.csv").string();
  const auto r = train(c);
  const auto loaded = ad::load_checkpoint(c.checkpoint);
  EXPECT_EQ(loaded.size(), r.params.size());
  const auto text = slurp(c.log);
  EXPECT_EQ(text.substr(0, text.find('\n')), "step,recon,S_1,S_2,S_3,S_4,total");
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), r.log.size() + 1);

  auto a = tiny(models::ModelKind::ae);
  a.log = c.log;
  train(a);
  const auto ae_text = slurp(a.log);
  EXPECT_EQ(ae_text.substr(0, ae_text.find('\n')), "step,recon,total");
  std::filesystem::remove(c.checkpoint);
  std::filesystem::remove(c.log);
}
