#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dlab/env/gridworld.hpp"
#include "dlab/models/models.hpp"

namespace dlab::training {

// Parses flat `key = value` lines. Blank lines and lines starting with `#`
// are skipped. Throws dlab::ConfigError on a malformed line or repeated key.
std::map<std::string, std::string> parse_key_values(const std::string& text);
// Reads and parses a file; throws dlab::IoError if it cannot be read.
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);

struct TrainConfig {
  env::Scenario scenario = env::Scenario::situation1;
  models::ModelKind kind = models::ModelKind::thomas;
  double lambda = 0.05;
  std::size_t samples = 20;  // next states per (state, action)
  // Transition tuples per epoch. The corpus holds budget / (K * samples) base
  // states, each paired with every action and `samples` next states.
  std::size_t budget = 200000;
  std::size_t epochs = 1;
  std::size_t batch = 32;
  std::uint64_t seed = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::string checkpoint;  // written after training when non-empty
  std::string log;         // loss CSV written after training when non-empty
  std::string pretrain;    // single-branch checkpoint for dual_pretrained

  // Throws dlab::ConfigError on an unknown key or unparsable value.
  void set(const std::string& key, const std::string& value);
  void apply(const std::map<std::string, std::string>& values);
  // Throws dlab::ConfigError when the settings are inconsistent.
  void validate() const;
  // Every field as key/value pairs, in declaration order.
  std::vector<std::pair<std::string, std::string>> to_key_values() const;

  std::size_t base_states() const;
};

}  // namespace dlab::training
