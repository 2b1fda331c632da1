#include "dlab/env/dataset.hpp"

#include <stdexcept>

#include "dlab/errors.hpp"
#include "dlab/io/binary.hpp"

namespace dlab::env {

namespace {
constexpr char kMagic[] = "DSET1";
constexpr std::size_t kMagicLen = 5;
constexpr std::uint32_t kMaxSamples = 1u << 20;
constexpr std::uint32_t kMaxObstacles = 64;

void write_anchor(std::ostream& os, Point p) {
  io::write_le<std::uint16_t>(os, static_cast<std::uint16_t>(p.x));
  io::write_le<std::uint16_t>(os, static_cast<std::uint16_t>(p.y));
}
}  // namespace

DatasetHeader generate_dataset(const EnvConfig& config, std::size_t anchors, std::size_t n,
                               std::uint64_t seed, const std::filesystem::path& path) {
  if (anchors == 0 || n == 0) throw std::invalid_argument("anchors and n must be at least 1");
  const Gridworld env(config);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open dataset for writing: " + path.string());

  DatasetHeader h;
  h.scenario = config.scenario;
  h.samples = static_cast<std::uint32_t>(n);
  h.obstacles = static_cast<std::uint32_t>(config.obstacle_count());
  h.records = dataset_record_count(anchors, n);

  os.write(kMagic, kMagicLen);
  io::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(h.scenario));
  io::write_le<std::uint32_t>(os, h.grid);
  io::write_le<std::uint32_t>(os, h.actions);
  io::write_le<std::uint32_t>(os, h.samples);
  io::write_le<std::uint32_t>(os, h.obstacles);
  io::write_le<std::uint64_t>(os, h.records);

  Rng rng(seed);
  Image next_img(kImagePixels);
  for (std::size_t i = 0; i < anchors; ++i) {
    const EnvState base = env.random_state(rng);
    const Image base_img = env.render(base);
    for (Action a : kAllActions) {
      io::write_f32_le(os, base_img);
      io::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(a));
      for (const auto& next : env.sample_successors(base, a, n)) {
        env.render_into(next, next_img.data());
        io::write_f32_le(os, next_img);
      }
      for (Point p : base.anchors) write_anchor(os, p);
    }
  }
  if (!os) throw IoError("failed writing dataset: " + path.string());
  return h;
}

DatasetReader::DatasetReader(const std::filesystem::path& path) : is_(path, std::ios::binary) {
  if (!is_) throw IoError("cannot open dataset: " + path.string());
  io::expect_magic(is_, kMagic, kMagicLen);
  const auto scenario = io::read_le<std::uint8_t>(is_, "scenario");
  if (scenario > static_cast<std::uint8_t>(Scenario::reward))
    throw FormatError("unknown scenario id " + std::to_string(scenario));
  header_.scenario = static_cast<Scenario>(scenario);
  header_.grid = io::read_le<std::uint32_t>(is_, "grid size");
  header_.actions = io::read_le<std::uint32_t>(is_, "action count");
  header_.samples = io::read_le<std::uint32_t>(is_, "sample count");
  header_.obstacles = io::read_le<std::uint32_t>(is_, "obstacle count");
  header_.records = io::read_le<std::uint64_t>(is_, "record count");
  if (header_.grid != static_cast<std::uint32_t>(kGridSize))
    throw FormatError("unsupported grid size " + std::to_string(header_.grid));
  if (header_.actions != kNumActions)
    throw FormatError("unsupported action count " + std::to_string(header_.actions));
  if (header_.samples == 0 || header_.samples > kMaxSamples)
    throw FormatError("corrupt sample count");
  if (header_.obstacles > kMaxObstacles) throw FormatError("corrupt obstacle count");
  if (header_.records % header_.samples != 0)
    throw FormatError("record count is not a multiple of the sample count");
}

std::optional<TransitionGroup> DatasetReader::next() {
  if (read_ == header_.groups()) return std::nullopt;
  TransitionGroup g;
  g.image.resize(kImagePixels);
  io::read_f32_le(is_, g.image, "image");
  const auto a = io::read_le<std::uint8_t>(is_, "action");
  if (a >= kNumActions) throw FormatError("invalid action byte " + std::to_string(a));
  g.action = static_cast<Action>(a);
  g.next_images.assign(header_.samples, Image(kImagePixels));
  for (auto& img : g.next_images) io::read_f32_le(is_, img, "next image");
  g.anchors.resize(1 + header_.obstacles);
  for (auto& p : g.anchors) {
    p.x = io::read_le<std::uint16_t>(is_, "anchor");
    p.y = io::read_le<std::uint16_t>(is_, "anchor");
  }
  ++read_;
  if (read_ == header_.groups() && is_.peek() != std::char_traits<char>::eof())
    throw FormatError("trailing bytes after dataset payload");
  return g;
}

std::vector<TransitionGroup> read_dataset(const std::filesystem::path& path,
                                          DatasetHeader* header) {
  DatasetReader r(path);
  if (header) *header = r.header();
  std::vector<TransitionGroup> out;
  while (auto g = r.next()) out.push_back(std::move(*g));
  return out;
}

}  // namespace dlab::env
