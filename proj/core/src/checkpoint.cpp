#include "dlab/ad/checkpoint.hpp"

#include <fstream>

#include "dlab/io/binary.hpp"

namespace dlab::ad {

namespace {
constexpr char kMagic[] = "DLAB1";
constexpr std::size_t kMagicLen = 5;
// Guards against absurd allocations from corrupt headers.
constexpr std::uint32_t kMaxNameLen = 4096;
constexpr std::uint32_t kMaxRank = 8;
}  // namespace

void save_checkpoint(const ParameterStore<float>& store, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
  os.write(kMagic, kMagicLen);
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, t] : store) {
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    io::write_f32_le(os, t.values());
  }
  if (!os) throw IoError("failed writing checkpoint: " + path.string());
}

ParameterStore<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  io::expect_magic(is, kMagic, kMagicLen);
  const auto count = io::read_le<std::uint32_t>(is, "tensor count");
  ParameterStore<float> store;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = io::read_le<std::uint32_t>(is, "name length");
    if (name_len == 0 || name_len > kMaxNameLen) throw FormatError("corrupt tensor name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw FormatError("truncated tensor name");
    const auto rank = io::read_le<std::uint32_t>(is, "rank");
    if (rank == 0 || rank > kMaxRank) throw FormatError("corrupt rank for tensor " + name);
    Shape shape(rank);
    for (auto& d : shape) {
      d = io::read_le<std::uint32_t>(is, "dims");
      if (d == 0) throw FormatError("zero dimension in tensor " + name);
    }
    std::vector<float> values(shape_numel(shape));
    io::read_f32_le(is, values, "tensor payload");
    if (store.contains(name)) throw FormatError("duplicate tensor name in checkpoint: " + name);
    store.add(name, Tensor<float>(std::move(shape), std::move(values)));
  }
  if (is.peek() != std::char_traits<char>::eof())
    throw FormatError("trailing bytes after checkpoint payload");
  return store;
}

std::size_t copy_parameters(const ParameterStore<float>& source, ParameterStore<float>& target,
                            const std::string& from_prefix, const std::string& to_prefix) {
  std::size_t copied = 0;
  for (const auto& [name, t] : source) {
    if (name.compare(0, from_prefix.size(), from_prefix) != 0)
      throw FormatError("checkpoint tensor " + name + " lacks prefix \"" + from_prefix + "\"");
    const std::string mapped = to_prefix + name.substr(from_prefix.size());
    if (!target.contains(mapped))
      throw FormatError("checkpoint tensor " + name + " has no counterpart " + mapped);
    auto& dst = target.get(mapped);
    if (dst.shape() != t.shape())
      throw FormatError("shape mismatch for " + mapped + ": checkpoint " + shape_str(t.shape()) +
                        " vs model " + shape_str(dst.shape()));
    auto out = dst.values_mut();
    std::copy(t.values().begin(), t.values().end(), out.begin());
    ++copied;
  }
  return copied;
}

}  // namespace dlab::ad
