#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cdt/nn/array.hpp"

namespace cdt::nn {

struct NamedArray {
  std::string name;
  Matrix value;
};

struct Checkpoint {
  nlohmann::json header;  // free-form metadata (architecture config, ...)
  std::vector<NamedArray> arrays;
};

// Layout: 8-byte magic "CDTCKPT1", little-endian u64 header length, UTF-8
// JSON header {"meta": ..., "arrays": [{"name", "shape"}...]}, then every
// array's row-major doubles in header order. Values round-trip bit-exactly.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string checkpoint_bytes(const Checkpoint& ckpt);
Checkpoint checkpoint_from_bytes(const std::string& bytes);

}  // namespace cdt::nn
