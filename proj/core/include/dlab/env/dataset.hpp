#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <vector>

#include "dlab/env/gridworld.hpp"

namespace dlab::env {

// One base image, one action and its n sampled next images. The anchors of
// the base state are kept for evaluation only.
struct TransitionGroup {
  Image image;
  Action action = Action::left;
  std::vector<Image> next_images;
  std::vector<Point> anchors;
};

struct DatasetHeader {
  Scenario scenario = Scenario::situation1;
  std::uint32_t grid = kGridSize;
  std::uint32_t actions = kNumActions;
  std::uint32_t samples = 0;     // n next images per group
  std::uint32_t obstacles = 0;
  std::uint64_t records = 0;     // (x, a, x') tuples = groups * samples

  std::uint64_t groups() const { return samples == 0 ? 0 : records / samples; }
};

inline std::uint64_t dataset_record_count(std::size_t anchors, std::size_t n) {
  return static_cast<std::uint64_t>(anchors) * kNumActions * n;
}

// File layout, little-endian:
//   "DSET1" | u8 scenario | u32 grid | u32 K | u32 n | u32 obstacles | u64 records
//   then records / n groups of
//   { 576 f32 image | u8 action | n * 576 f32 next images | (1 + obstacles) * 2 u16 anchors }
// Groups are ordered base state major, action minor.
//
// Throws std::invalid_argument for zero counts and dlab::IoError when `path`
// cannot be written. Returns the header that was written.
DatasetHeader generate_dataset(const EnvConfig& config, std::size_t anchors, std::size_t n,
                               std::uint64_t seed, const std::filesystem::path& path);

// Streams groups back from a dataset file. Throws dlab::IoError if the file
// cannot be opened and dlab::FormatError on a malformed header or payload.
class DatasetReader {
 public:
  explicit DatasetReader(const std::filesystem::path& path);
  const DatasetHeader& header() const { return header_; }
  // Next group, or nullopt after the last one.
  std::optional<TransitionGroup> next();

 private:
  std::ifstream is_;
  DatasetHeader header_;
  std::uint64_t read_ = 0;
};

std::vector<TransitionGroup> read_dataset(const std::filesystem::path& path,
                                          DatasetHeader* header = nullptr);

}  // namespace dlab::env
