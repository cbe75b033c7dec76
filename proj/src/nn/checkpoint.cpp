#include "cdt/nn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cdt/error.hpp"

namespace cdt::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {

constexpr char kMagic[8] = {'C', 'D', 'T', 'C', 'K', 'P', 'T', '1'};

}  // namespace

std::string checkpoint_bytes(const Checkpoint& ckpt) {
  nlohmann::json header;
  header["meta"] = ckpt.header;
  header["arrays"] = nlohmann::json::array();
  for (const auto& a : ckpt.arrays) {
    header["arrays"].push_back({{"name", a.name}, {"shape", {a.value.rows(), a.value.cols()}}});
  }
  const std::string text = header.dump();
  const std::uint64_t len = text.size();

  std::string out(kMagic, sizeof(kMagic));
  out.append(reinterpret_cast<const char*>(&len), sizeof(len));
  out += text;
  for (const auto& a : ckpt.arrays) {
    out.append(reinterpret_cast<const char*>(a.value.data()),
               static_cast<std::size_t>(a.value.size()) * sizeof(double));
  }
  return out;
}

Checkpoint checkpoint_from_bytes(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ModelError("not a checkpoint file (bad magic)");
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, sizeof(len));
  if (16 + len > bytes.size()) throw ModelError("checkpoint header truncated");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, len));
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }

  Checkpoint ckpt;
  ckpt.header = header.value("meta", nlohmann::json::object());
  std::size_t offset = 16 + len;
  for (const auto& entry : header.at("arrays")) {
    NamedArray a;
    a.name = entry.at("name").get<std::string>();
    const auto rows = entry.at("shape").at(0).get<Eigen::Index>();
    const auto cols = entry.at("shape").at(1).get<Eigen::Index>();
    const std::size_t n = static_cast<std::size_t>(rows * cols) * sizeof(double);
    if (offset + n > bytes.size()) throw ModelError("checkpoint data truncated at array " + a.name);
    a.value.resize(rows, cols);
    std::memcpy(a.value.data(), bytes.data() + offset, n);
    offset += n;
    ckpt.arrays.push_back(std::move(a));
  }
  if (offset != bytes.size()) throw ModelError("trailing bytes after checkpoint data");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = checkpoint_bytes(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelError("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ModelError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("checkpoint not found: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_bytes(buf.str());
}

}  // namespace cdt::nn
