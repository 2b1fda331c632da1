#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "dlab/ad/checkpoint.hpp"
#include "dlab/env/dataset.hpp"
#include "dlab/errors.hpp"
#include "dlab/eval/metrics.hpp"
#include "dlab/rl/rl.hpp"
#include "dlab/runtime.hpp"
#include "dlab/training/suite.hpp"
#include "dlab/training/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace dlab;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitIo = 2;

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string part;
  try {
    while (std::getline(ss, part, ',')) {
      if (const auto dots = part.find(".."); dots != std::string::npos) {
        const auto lo = std::stoull(part.substr(0, dots)), hi = std::stoull(part.substr(dots + 2));
        if (hi < lo) throw ConfigError("empty seed range: " + part);
        for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
      } else {
        seeds.push_back(std::stoull(part));
      }
    }
  } catch (const std::logic_error&) {
    throw ConfigError("invalid seeds: " + text + " (expected e.g. 0..9 or 1,4,7)");
  }
  if (seeds.empty()) throw ConfigError("no seeds given");
  return seeds;
}

void write_manifest(const fs::path& path, const std::string& command, const json& config,
                    const std::vector<std::string>& outputs) {
  json m;
  m["tool"] = "dlab";
  m["version"] = "0.1.0";
  m["command"] = command;
  m["config"] = config;
  m["outputs"] = outputs;
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write manifest " + path.string());
  os << m.dump(2) << '\n';
}

json config_json(const training::TrainConfig& c) {
  json j;
  for (const auto& [k, v] : c.to_key_values()) j[k] = v;
  return j;
}

// Flags shared by `train` and `pretrain`, applied over the config file.
struct TrainFlags {
  std::string config_file;
  std::string scenario, kind, from, out, log;
  std::optional<double> lambda, lr;
  std::optional<std::size_t> budget, epochs, batch, samples;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app, bool with_kind) {
    app->add_option("--config", config_file, "key = value file; flags override it");
    app->add_option("--scenario", scenario, "simple | situation1 | situation2 | reward");
    if (with_kind) app->add_option("--kind", kind, "ae | thomas | dual_pretrained | dual_scratch");
    app->add_option("--from", from, "pretrained checkpoint for dual_pretrained");
    app->add_option("--lambda", lambda, "selectivity weight");
    app->add_option("--budget", budget, "tuples per epoch");
    app->add_option("--epochs", epochs, "passes over the corpus");
    app->add_option("--batch", batch, "base states per update");
    app->add_option("--samples", samples, "next states per (state, action)");
    app->add_option("--seed", seed, "random seed");
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--out", out, "checkpoint path")->required();
    app->add_option("--log", log, "loss CSV path");
  }

  training::TrainConfig build() const {
    training::TrainConfig c;
    if (!config_file.empty()) c.apply(training::read_key_values(config_file));
    if (!scenario.empty()) c.set("scenario", scenario);
    if (!kind.empty()) c.set("kind", kind);
    if (!from.empty()) c.pretrain = from;
    if (lambda) c.lambda = *lambda;
    if (lr) c.lr = *lr;
    if (budget) c.budget = *budget;
    if (epochs) c.epochs = *epochs;
    if (batch) c.batch = *batch;
    if (samples) c.samples = *samples;
    if (seed) c.seed = *seed;
    c.checkpoint = out;
    if (!log.empty()) c.log = log;
    return c;
  }
};

int run_train(const training::TrainConfig& c, const std::string& command) {
  c.validate();
  std::cerr << command << ": " << models::kind_name(c.kind) << " on "
            << env::scenario_name(c.scenario) << ", " << c.base_states() << " base states x "
            << c.epochs << " epochs\n";
  const auto r = training::train(c, [&](std::size_t step, const objectives::LossReport& rep,
                                        const ad::ParameterStore<float>&) {
    if (step % 50 == 0) {
      std::cerr << "  step " << step << " recon " << rep.recon;
      for (double s : rep.selectivity) std::cerr << ' ' << s;
      std::cerr << '\n';
    }
  });
  std::cerr << command << ": " << r.updates << " updates, " << r.consumed << " tuples\n";
  std::vector<std::string> outputs{c.checkpoint};
  if (!c.log.empty()) outputs.push_back(c.log);
  write_manifest(c.checkpoint + ".json", command, config_json(c), outputs);
  return 0;
}

void print_report(const training::RunReport& r) {
  std::cout << "kind " << models::kind_name(r.kind) << '\n';
  for (std::size_t k = 0; k < r.correlations.size(); ++k) {
    std::cout << "  z" << k + 1;
    for (const auto& v : r.correlations[k]) {
      std::cout << ' ';
      if (v) std::cout << *v;
      else std::cout << "nan";
    }
    std::cout << '\n';
  }
  if (!r.distance.per_rank.empty()) std::cout << "  distance " << r.distance.overall << '\n';
  std::cout << "  concentration_offdiag " << eval::mean_abs_off_diagonal(r.concentration.normalized)
            << '\n';
  if (r.policy)
    for (std::size_t k = 0; k < r.policy->argmax.size(); ++k)
      std::cout << "  policy" << k + 1 << ' '
                << env::action_name(env::action_from_index(r.policy->argmax[k])) << ' '
                << r.policy->mean_probs(k, r.policy->argmax[k]) << '\n';
  if (r.energy) std::cout << "  energy_ratio " << r.energy->ratio() << '\n';
  if (r.recall) std::cout << "  recall " << (*r.recall)[0] << ' ' << (*r.recall)[1] << '\n';
  if (r.decomposition)
    std::cout << "  iou " << r.decomposition->iou_c << ' ' << r.decomposition->iou_u << ' '
              << r.decomposition->cross_c << ' ' << r.decomposition->cross_u << '\n';
}

// Minimal CSV reader for numeric tables with a header row.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

Table read_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path.string());
  Table t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  if (!std::getline(is, line)) throw FormatError("empty CSV " + path.string());
  t.columns = split(line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    for (const auto& cell : split(line)) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::logic_error&) {
        row.push_back(std::nan(""));
      }
    }
    if (row.size() != t.columns.size()) throw FormatError("ragged CSV row in " + path.string());
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_svg(const fs::path& path, const Table& t, std::size_t xcol,
               const std::vector<std::size_t>& ycols, const std::string& title) {
  constexpr double W = 640, H = 400, L = 60, R = 150, T = 30, B = 40;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& row : t.rows) {
    if (!std::isfinite(row[xcol])) continue;
    x0 = std::min(x0, row[xcol]);
    x1 = std::max(x1, row[xcol]);
    for (auto c : ycols)
      if (std::isfinite(row[c])) {
        y0 = std::min(y0, row[c]);
        y1 = std::max(y1, row[c]);
      }
  }
  if (!(x1 >= x0) || !(y1 >= y0)) throw FormatError("nothing to plot");
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << L << "\" y=\"18\" font-size=\"13\">" << title << "</text>\n"
     << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    os << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 15 << "\" text-anchor=\"middle\">" << xv
       << "</text>\n<text x=\"" << L - 5 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">"
       << yv << "</text>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 5 << "\" text-anchor=\"middle\">"
     << t.columns[xcol] << "</text>\n";
  for (std::size_t i = 0; i < ycols.size(); ++i) {
    const char* color = colors[i % std::size(colors)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& row : t.rows)
      if (std::isfinite(row[xcol]) && std::isfinite(row[ycols[i]]))
        os << px(row[xcol]) << ',' << py(row[ycols[i]]) << ' ';
    os << "\"/>\n<text x=\"" << W - R + 10 << "\" y=\"" << T + 15 * (i + 1) << "\" fill=\"" << color
       << "\">" << t.columns[ycols[i]] << "</text>\n";
  }
  os << "</svg>\n";
  if (!os) throw IoError("failed writing " + path.string());
}

std::size_t column_index(const Table& t, const std::string& name) {
  const auto it = std::find(t.columns.begin(), t.columns.end(), name);
  if (it == t.columns.end()) throw ConfigError("no column named " + name);
  return static_cast<std::size_t>(it - t.columns.begin());
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Disentangling controllable and uncontrollable factors in gridworld images"};
  app.failure_message(CLI::FailureMessage::help);
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "write an (x, a, x') transition dataset");
  std::string gen_scenario = "situation1", gen_out;
  std::size_t gen_anchors = 2500, gen_samples = 20;
  std::uint64_t gen_seed = 0;
  gen->add_option("--scenario", gen_scenario, "scenario name");
  gen->add_option("--anchors", gen_anchors, "base states");
  gen->add_option("--samples", gen_samples, "next states per (state, action)");
  gen->add_option("--seed", gen_seed, "random seed");
  gen->add_option("--out", gen_out, "dataset path")->required();

  // pretrain / train
  auto* pre = app.add_subcommand("pretrain", "train the single-branch selectivity model");
  TrainFlags pre_flags;
  pre_flags.attach(pre, false);
  auto* tr = app.add_subcommand("train", "train one model kind");
  TrainFlags tr_flags;
  tr_flags.attach(tr, true);

  // suite
  auto* suite = app.add_subcommand("suite", "train and evaluate every model kind over seeds");
  std::string suite_scenario = "situation1", suite_seeds = "0", suite_out, suite_config, suite_kinds;
  std::optional<std::size_t> suite_budget, suite_epochs;
  suite->add_option("--scenario", suite_scenario, "scenario name");
  suite->add_option("--seeds", suite_seeds, "e.g. 0..9 or 1,4,7");
  suite->add_option("--kinds", suite_kinds, "comma-separated subset of model kinds");
  suite->add_option("--config", suite_config, "shared training settings (key = value)");
  suite->add_option("--budget", suite_budget, "tuples per epoch");
  suite->add_option("--epochs", suite_epochs, "passes over the corpus");
  suite->add_option("--out", suite_out, "report directory")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_kind, ev_from, ev_scenario = "situation1", ev_out;
  std::size_t ev_samples = eval::kEvalSamples, ev_neighbors = eval::kDefaultNeighbors;
  std::uint64_t ev_seed = 12345;
  ev->add_option("--kind", ev_kind, "model kind of the checkpoint")->required();
  ev->add_option("--from", ev_from, "checkpoint")->required();
  ev->add_option("--scenario", ev_scenario, "scenario name");
  ev->add_option("--samples", ev_samples, "evaluation states");
  ev->add_option("--neighbors", ev_neighbors, "neighbours for the distance curve");
  ev->add_option("--seed", ev_seed, "state sampling seed");
  ev->add_option("--out", ev_out, "directory for CSVs");

  // rl
  auto* rl = app.add_subcommand("rl", "recurrent Q-learning over a frozen encoder");
  rl::RLConfig rl_cfg;
  std::string rl_kind = "proposed", rl_out;
  rl->add_option("--from", rl_cfg.checkpoint, "encoder checkpoint")->required();
  rl->add_option("--kind", rl_kind, "model kind of the encoder");
  rl->add_option("--episodes", rl_cfg.episodes, "episodes per trial");
  rl->add_option("--trials", rl_cfg.trials, "independent trials");
  rl->add_option("--seed", rl_cfg.seed, "random seed");
  rl->add_option("--lr", rl_cfg.lr, "gradient descent step size");
  rl->add_option("--gamma", rl_cfg.gamma, "discount");
  rl->add_option("--out", rl_out, "directory for CSVs")->required();

  // plot
  auto* plot = app.add_subcommand("plot", "render CSV columns as an SVG line chart");
  std::string plot_in, plot_out, plot_x, plot_title;
  std::vector<std::string> plot_y;
  plot->add_option("--in", plot_in, "CSV file")->required();
  plot->add_option("--out", plot_out, "SVG file")->required();
  plot->add_option("--x", plot_x, "x column (default: first)");
  plot->add_option("--y", plot_y, "y columns (default: all others)");
  plot->add_option("--title", plot_title, "chart title");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) {
      const auto config = env::EnvConfig::for_scenario(env::parse_scenario(gen_scenario));
      std::cerr << "gen-data: " << gen_anchors << " base states x 4 actions x " << gen_samples << '\n';
      const auto h = env::generate_dataset(config, gen_anchors, gen_samples, gen_seed, gen_out);
      write_manifest(gen_out + ".json", "gen-data",
                     {{"scenario", gen_scenario}, {"anchors", gen_anchors}, {"samples", gen_samples},
                      {"seed", gen_seed}, {"records", h.records}},
                     {gen_out});
      return 0;
    }
    if (*pre) {
      auto c = pre_flags.build();
      c.kind = models::ModelKind::thomas;
      return run_train(c, "pretrain");
    }
    if (*tr) return run_train(tr_flags.build(), "train");
    if (*suite) {
      training::SuiteConfig s;
      if (!suite_config.empty()) s.train.apply(training::read_key_values(suite_config));
      if (suite_budget) s.train.budget = *suite_budget;
      if (suite_epochs) s.train.epochs = *suite_epochs;
      s.scenario = env::parse_scenario(suite_scenario);
      s.seeds = parse_seeds(suite_seeds);
      if (!suite_kinds.empty()) {
        s.kinds.clear();
        std::stringstream ss(suite_kinds);
        std::string k;
        while (std::getline(ss, k, ',')) s.kinds.push_back(models::parse_kind(k));
      }
      s.out_dir = suite_out;
      s.train.scenario = s.scenario;
      s.train.validate();
      fs::create_directories(suite_out);
      const auto reports = training::run_experiment_suite(
          s, [](std::uint64_t seed, models::ModelKind kind) {
            std::cerr << "suite: seed " << seed << ' ' << models::kind_name(kind) << '\n';
          });
      for (const auto& r : reports) {
        std::cout << "seed " << r.seed << ' ';
        print_report(r);
      }
      json cfg = config_json(s.train);
      cfg["seeds"] = s.seeds;
      std::vector<std::string> kinds;
      for (auto k : s.kinds) kinds.emplace_back(models::kind_name(k));
      cfg["kinds"] = kinds;
      write_manifest(fs::path(suite_out) / "manifest.json", "suite", cfg,
                     {(fs::path(suite_out) / "summary.csv").string()});
      return 0;
    }
    if (*ev) {
      const auto kind = models::parse_kind(ev_kind);
      const auto scenario = env::parse_scenario(ev_scenario);
      const auto params = ad::load_checkpoint(ev_from);
      auto samples = eval::sample_states(env::EnvConfig::for_scenario(scenario), ev_samples, ev_seed);
      const auto r = training::evaluate_model(kind, params, scenario, samples, ev_neighbors);
      print_report(r);
      if (!ev_out.empty()) {
        const fs::path dir(ev_out);
        fs::create_directories(dir);
        training::write_summary(dir / "summary.csv", {r});
        eval::write_correlations(dir / "correlations.csv", r.correlations);
        if (!r.distance.per_rank.empty()) eval::write_distance(dir / "distance.csv", r.distance);
        eval::write_matrix(dir / "concentration.csv", r.concentration.normalized, "z");
        if (r.policy) eval::write_policy(dir / "policy.csv", *r.policy);
        if (r.decomposition) eval::write_decomposition(dir / "decomposition.csv", *r.decomposition);
        write_manifest(dir / "manifest.json", "eval",
                       {{"kind", ev_kind}, {"from", ev_from}, {"scenario", ev_scenario},
                        {"samples", ev_samples}, {"neighbors", ev_neighbors}, {"seed", ev_seed}},
                       {(dir / "summary.csv").string()});
      }
      return 0;
    }
    if (*rl) {
      rl_cfg.kind = models::parse_kind(rl_kind);
      const auto result = rl::train_rl(rl_cfg, [&](std::size_t t, std::size_t e, const rl::EpisodeSummary& s) {
        if (e % 20 == 0 || e + 1 == rl_cfg.episodes)
          std::cerr << "rl: trial " << t << " episode " << e << " steps " << s.steps
                    << " collisions " << s.collisions << " qloss " << s.qloss << '\n';
      });
      const fs::path dir(rl_out);
      fs::create_directories(dir);
      rl::write_episode_log(dir / "episodes.csv", result);
      rl::write_aggregate(dir / "aggregate.csv", result.stats);
      std::cout << "final_median_steps " << rl::final_median_steps(result) << '\n';
      write_manifest(dir / "manifest.json", "rl",
                     {{"kind", rl_kind}, {"from", rl_cfg.checkpoint}, {"episodes", rl_cfg.episodes},
                      {"trials", rl_cfg.trials}, {"seed", rl_cfg.seed}, {"lr", rl_cfg.lr},
                      {"gamma", rl_cfg.gamma}},
                     {(dir / "episodes.csv").string(), (dir / "aggregate.csv").string()});
      return 0;
    }
    if (*plot) {
      const auto t = read_csv(plot_in);
      const std::size_t x = plot_x.empty() ? 0 : column_index(t, plot_x);
      std::vector<std::size_t> ys;
      for (const auto& y : plot_y) ys.push_back(column_index(t, y));
      if (ys.empty())
        for (std::size_t c = 0; c < t.columns.size(); ++c)
          if (c != x) ys.push_back(c);
      write_svg(plot_out, t, x, ys, plot_title.empty() ? fs::path(plot_in).filename().string() : plot_title);
      return 0;
    }
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return 0;
}
