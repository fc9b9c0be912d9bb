#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

namespace pwlmdp {

/// Writes via a temporary file in the same directory followed by a rename,
/// so readers never see a partial file. Creates parent directories.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// Pretty-printed JSON with a trailing newline.
void write_json_atomic(const std::filesystem::path& path, const nlohmann::json& j);

nlohmann::json read_json_file(const std::filesystem::path& path);

/// 64-bit FNV-1a of a string, as 16 hex digits.
std::string fnv1a_hex(const std::string& data);

}  // namespace pwlmdp
