#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rarecast/tensor.hpp"

namespace rarecast {

// Binary tensor container. Layout (little-endian):
//   magic "KNWR", format version uint32, then repeated records
//   {name_len uint32, name utf-8, dtype uint8 (0 = float64),
//    rank uint8, dims uint64[rank], payload row-major}.
// Round-trips must be bit-exact.

using NamedTensors = std::vector<std::pair<std::string, const Tensor*>>;

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);
std::map<std::string, Tensor> load_checkpoint(const std::filesystem::path& path);

}  // namespace rarecast
