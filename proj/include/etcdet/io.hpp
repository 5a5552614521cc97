#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace etc {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
std::string read_file_text(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& content);

/// UTC ISO-8601 timestamp with second resolution, e.g. 2017-01-01T06:00:00Z.
std::string iso8601_utc(std::int64_t unix_seconds);
std::int64_t now_unix_seconds();

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(const void* data, std::size_t size);

}  // namespace etc
