// SPDX-License-Identifier: Apache-2.0
#include "tsed/numerics/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tsed::checkpoint {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put(std::ostream& os, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::filesystem::path& path) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw std::runtime_error("truncated checkpoint " + path.string());
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) { return path.string() + ".arch"; }

}  // namespace

void save(const std::filesystem::path& path, const std::vector<NamedTensor>& entries) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(e.value.rank()));
    for (auto d : e.value.shape()) put<std::uint64_t>(os, d);
    for (double v : e.value.data()) put<float>(os, static_cast<float>(v));
  }
  if (!os) throw std::runtime_error("write failed for checkpoint " + path.string());
}

std::vector<NamedTensor> load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[sizeof(kMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("bad checkpoint magic in " + path.string());
  }
  auto version = get<std::uint32_t>(is, path);
  if (version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) + " in " + path.string());
  }
  auto count = get<std::uint32_t>(is, path);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto len = get<std::uint32_t>(is, path);
    if (len > (1u << 16)) throw std::runtime_error("implausible entry name length in " + path.string());
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw std::runtime_error("truncated checkpoint " + path.string());
    auto rank = get<std::uint32_t>(is, path);
    if (rank > 8) throw std::runtime_error("implausible rank for '" + name + "' in " + path.string());
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(is, path));
    Tensor t(shape);
    for (auto& v : t.data()) v = static_cast<double>(get<float>(is, path));
    out.push_back({std::move(name), std::move(t)});
  }
  return out;
}

void save_sidecar(const std::filesystem::path& path, const std::map<std::string, std::string>& arch) {
  std::ofstream os(sidecar_path(path), std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + sidecar_path(path).string());
  for (const auto& [k, v] : arch) os << k << '=' << v << '\n';
}

std::map<std::string, std::string> load_sidecar(const std::filesystem::path& path) {
  std::ifstream is(sidecar_path(path));
  if (!is) throw std::runtime_error("missing architecture sidecar " + sidecar_path(path).string());
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("malformed sidecar line: " + line);
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

}  // namespace tsed::checkpoint
