// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tsed/numerics/parameters.hpp"

namespace tsed::checkpoint {

/// Binary layout, all integers little-endian:
///
///   magic    8 bytes  "TSEDCKPT"
///   version  u32      1
///   count    u32      number of entries
///   entries  count x { u32 name_len, name bytes, u32 rank, rank x u64 dim,
///                      numel x f32 payload }
///
/// Values are stored as 32-bit floats.
inline constexpr char kMagic[8] = {'T', 'S', 'E', 'D', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kVersion = 1;

void save(const std::filesystem::path& path, const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> load(const std::filesystem::path& path);

/// Text sidecar (`<path>.arch`) with key=value lines describing the
/// architecture, checked on load.
void save_sidecar(const std::filesystem::path& path, const std::map<std::string, std::string>& arch);
std::map<std::string, std::string> load_sidecar(const std::filesystem::path& path);

}  // namespace tsed::checkpoint
