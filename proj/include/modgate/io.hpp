// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace modgate {

/// Whole-file read; throws Error(UnreadableSource).
std::string read_file(const std::filesystem::path &path);

/// Writes via a sibling temp file and rename, so readers never see a torn file.
void write_file_atomic(const std::filesystem::path &path, std::string_view bytes);

/// Parses one JSON object per non-blank line. Throws Error(InvalidValue)
/// naming the offending line.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path &path);
std::string to_jsonl(const std::vector<nlohmann::json> &rows);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string sha256_hex(std::string_view bytes);

/// SplitMix64 step; used to derive independent streams from stable hashes.
std::uint64_t splitmix64(std::uint64_t x);
/// Maps a 64-bit value to [0, 1).
double unit_interval(std::uint64_t x);

}  // namespace modgate
