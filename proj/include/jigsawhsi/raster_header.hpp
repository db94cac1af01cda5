#pragma once

// Text header + raw little-endian payload, shared by cubes, label rasters,
// decomposers and model checkpoints.
//
//   # comment
//   key=value
//
// The payload lives in a sibling file named by the `data_file` key (relative
// to the header's directory); when absent it defaults to the header path with
// its extension replaced by ".bin".

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace jigsawhsi {

class RasterHeader {
 public:
  RasterHeader() = default;

  /// Parses header text. Keys are lower-cased; later duplicates are errors.
  static RasterHeader parse(std::string_view text, std::string_view module);

  std::string to_string() const;

  void set(std::string key, std::string value);
  void set(std::string key, std::uint64_t value);
  void set_double(std::string key, double value);

  bool contains(std::string_view key) const;
  std::optional<std::string> find(std::string_view key) const;

  /// Throws ValidationError (tagged with `module`) when the key is missing or
  /// does not parse.
  const std::string& get(std::string_view key, std::string_view module) const;
  std::uint64_t get_uint(std::string_view key, std::string_view module) const;
  double get_double(std::string_view key, std::string_view module) const;

  /// Requires key == expected (case-insensitive).
  void expect(std::string_view key, std::string_view expected, std::string_view module) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

RasterHeader read_header(const std::filesystem::path& path, std::string_view module);
void write_header(const RasterHeader& header, const std::filesystem::path& path, std::string_view module);

/// Default payload name for a header path (extension replaced by ".bin").
std::filesystem::path default_payload_path(const std::filesystem::path& header_path);

/// Payload path declared by the header, falling back to the default.
std::filesystem::path payload_path(const RasterHeader& header, const std::filesystem::path& header_path);

/// Reads exactly `count` little-endian values; size mismatch is an error.
template <class T>
std::vector<T> read_payload(const std::filesystem::path& path, std::size_t count, std::string_view module);

template <class T>
void write_payload(const std::filesystem::path& path, std::span<const T> values, std::string_view module);

std::string lowercase(std::string_view s);
std::string trim(std::string_view s);

}  // namespace jigsawhsi
