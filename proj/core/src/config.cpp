#include "dlab/training/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "dlab/errors.hpp"

namespace dlab::training {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename U>
U parse_unsigned(const std::string& key, const std::string& v) {
  U out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("invalid value for " + key + ": \"" + v + "\" (expected a non-negative integer)");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("invalid value for " + key + ": \"" + v + "\" (expected a number)");
}

std::string format_double(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream is(text);
  std::string line;
  for (int n = 1; std::getline(is, line); ++n) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(n) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(n) + ": empty key");
    if (!out.emplace(key, trim(t.substr(eq + 1))).second)
      throw ConfigError("config line " + std::to_string(n) + ": repeated key " + key);
  }
  return out;
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config file: " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_key_values(ss.str());
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "scenario") scenario = env::parse_scenario(value);
  else if (key == "kind") kind = models::parse_kind(value);
  else if (key == "lambda") lambda = parse_double(key, value);
  else if (key == "samples") samples = parse_unsigned<std::size_t>(key, value);
  else if (key == "budget") budget = parse_unsigned<std::size_t>(key, value);
  else if (key == "epochs") epochs = parse_unsigned<std::size_t>(key, value);
  else if (key == "batch") batch = parse_unsigned<std::size_t>(key, value);
  else if (key == "seed") seed = parse_unsigned<std::uint64_t>(key, value);
  else if (key == "lr") lr = parse_double(key, value);
  else if (key == "beta1") beta1 = parse_double(key, value);
  else if (key == "beta2") beta2 = parse_double(key, value);
  else if (key == "adam_eps") adam_eps = parse_double(key, value);
  else if (key == "checkpoint") checkpoint = value;
  else if (key == "log") log = value;
  else if (key == "pretrain") pretrain = value;
  else throw ConfigError("unknown config key: " + key);
}

void TrainConfig::apply(const std::map<std::string, std::string>& values) {
  for (const auto& [k, v] : values) set(k, v);
}

void TrainConfig::validate() const {
  if (lambda < 0.0) throw ConfigError("lambda must be non-negative");
  if (samples == 0) throw ConfigError("samples must be at least 1");
  if (batch == 0) throw ConfigError("batch must be at least 1");
  if (epochs == 0) throw ConfigError("epochs must be at least 1");
  const std::size_t per_state = env::kNumActions * samples;
  if (budget < per_state || budget % per_state != 0)
    throw ConfigError("budget " + std::to_string(budget) + " must be a positive multiple of " +
                      std::to_string(per_state) + " (actions x samples)");
  if (lr <= 0.0) throw ConfigError("lr must be positive");
  if (kind == models::ModelKind::dual_pretrained && pretrain.empty())
    throw ConfigError("dual_pretrained requires a pretrain checkpoint");
  if (kind == models::ModelKind::dual_pretrained && !std::filesystem::exists(pretrain))
    throw ConfigError("pretrain checkpoint not found: " + pretrain);
}

std::size_t TrainConfig::base_states() const { return budget / (env::kNumActions * samples); }

std::vector<std::pair<std::string, std::string>> TrainConfig::to_key_values() const {
  return {{"scenario", std::string(env::scenario_name(scenario))},
          {"kind", std::string(models::kind_name(kind))},
          {"lambda", format_double(lambda)},
          {"samples", std::to_string(samples)},
          {"budget", std::to_string(budget)},
          {"epochs", std::to_string(epochs)},
          {"batch", std::to_string(batch)},
          {"seed", std::to_string(seed)},
          {"lr", format_double(lr)},
          {"beta1", format_double(beta1)},
          {"beta2", format_double(beta2)},
          {"adam_eps", format_double(adam_eps)},
          {"checkpoint", checkpoint},
          {"log", log},
          {"pretrain", pretrain}};
}

}  // namespace dlab::training
