#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "dlab/ad/params.hpp"
#include "dlab/errors.hpp"

namespace dlab::ad {

// Binary layout (all integers u32 little-endian):
//   "DLAB1" | count | { name_len | name bytes | rank | dims... | f32 LE payload }*
void save_checkpoint(const ParameterStore<float>& store, const std::filesystem::path& path);
ParameterStore<float> load_checkpoint(const std::filesystem::path& path);

// Copies `source` tensors into `target`. Every source name is looked up in
// `target` after replacing its leading `from_prefix` with `to_prefix`; a
// missing name or a shape mismatch throws FormatError. Returns the number of
// tensors copied.
std::size_t copy_parameters(const ParameterStore<float>& source, ParameterStore<float>& target,
                            const std::string& from_prefix = {}, const std::string& to_prefix = {});

}  // namespace dlab::ad
