#include "jigsawhsi/raster_header.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "jigsawhsi/error.hpp"

namespace jigsawhsi {

static_assert(std::endian::native == std::endian::little,
              "payload I/O assumes a little-endian host");

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return out;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

RasterHeader RasterHeader::parse(std::string_view text, std::string_view module) {
  RasterHeader header;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(module, fmt::format("header line {}: expected key=value", line_no));
    }
    std::string key = lowercase(trim(std::string_view(body).substr(0, eq)));
    std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) {
      throw ValidationError(module, fmt::format("header line {}: empty key", line_no));
    }
    if (header.contains(key)) {
      throw ValidationError(module, fmt::format("header line {}: duplicate key '{}'", line_no, key));
    }
    header.entries_.emplace_back(std::move(key), std::move(value));
  }
  return header;
}

std::string RasterHeader::to_string() const {
  std::string out;
  for (const auto& [key, value] : entries_) {
    out += key;
    out += '=';
    out += value;
    out += '\n';
  }
  return out;
}

void RasterHeader::set(std::string key, std::string value) {
  key = lowercase(key);
  for (auto& entry : entries_) {
    if (entry.first == key) {
      entry.second = std::move(value);
      return;
    }
  }
  entries_.emplace_back(std::move(key), std::move(value));
}

void RasterHeader::set(std::string key, std::uint64_t value) { set(std::move(key), std::to_string(value)); }

void RasterHeader::set_double(std::string key, double value) {
  // fmt's default is the shortest representation that round-trips.
  set(std::move(key), fmt::format("{}", value));
}

bool RasterHeader::contains(std::string_view key) const { return find(key).has_value(); }

std::optional<std::string> RasterHeader::find(std::string_view key) const {
  const std::string k = lowercase(key);
  for (const auto& entry : entries_) {
    if (entry.first == k) return entry.second;
  }
  return std::nullopt;
}

const std::string& RasterHeader::get(std::string_view key, std::string_view module) const {
  const std::string k = lowercase(key);
  for (const auto& entry : entries_) {
    if (entry.first == k) return entry.second;
  }
  throw ValidationError(module, fmt::format("header is missing key '{}'", k));
}

std::uint64_t RasterHeader::get_uint(std::string_view key, std::string_view module) const {
  const std::string& text = get(key, module);
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ValidationError(module, fmt::format("header key '{}' is not a non-negative integer: '{}'", key, text));
  }
  return value;
}

double RasterHeader::get_double(std::string_view key, std::string_view module) const {
  const std::string& text = get(key, module);
  try {
    std::size_t used = 0;
    const double value = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw ValidationError(module, fmt::format("header key '{}' is not a number: '{}'", key, text));
  }
}

void RasterHeader::expect(std::string_view key, std::string_view expected, std::string_view module) const {
  const std::string& value = get(key, module);
  if (lowercase(value) != lowercase(expected)) {
    throw ValidationError(module, fmt::format("unsupported {}='{}' (expected '{}')", key, value, expected));
  }
}

RasterHeader read_header(const std::filesystem::path& path, std::string_view module) {
  std::ifstream in(path);
  if (!in) throw IoError(module, fmt::format("cannot open header '{}'", path.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return RasterHeader::parse(buffer.str(), module);
}

void write_header(const RasterHeader& header, const std::filesystem::path& path, std::string_view module) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(module, fmt::format("cannot write header '{}'", path.string()));
  out << header.to_string();
  if (!out) throw IoError(module, fmt::format("failed writing header '{}'", path.string()));
}

std::filesystem::path default_payload_path(const std::filesystem::path& header_path) {
  std::filesystem::path p = header_path;
  p.replace_extension(".bin");
  if (p == header_path) p += ".bin";
  return p;
}

std::filesystem::path payload_path(const RasterHeader& header, const std::filesystem::path& header_path) {
  if (auto name = header.find("data_file")) {
    return header_path.parent_path() / *name;
  }
  return default_payload_path(header_path);
}

template <class T>
std::vector<T> read_payload(const std::filesystem::path& path, std::size_t count, std::string_view module) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(module, fmt::format("cannot open payload '{}'", path.string()));
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  const std::uint64_t expected = static_cast<std::uint64_t>(count) * sizeof(T);
  if (bytes != expected) {
    throw ValidationError(module, fmt::format("payload '{}' has {} bytes but the header declares {} values ({} bytes)",
                                              path.string(), bytes, count, expected));
  }
  std::vector<T> values(count);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(expected));
  if (!in) throw IoError(module, fmt::format("short read from '{}'", path.string()));
  return values;
}

template <class T>
void write_payload(const std::filesystem::path& path, std::span<const T> values, std::string_view module) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(module, fmt::format("cannot write payload '{}'", path.string()));
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  if (!out) throw IoError(module, fmt::format("failed writing payload '{}'", path.string()));
}

template std::vector<float> read_payload<float>(const std::filesystem::path&, std::size_t, std::string_view);
template std::vector<double> read_payload<double>(const std::filesystem::path&, std::size_t, std::string_view);
template std::vector<std::uint16_t> read_payload<std::uint16_t>(const std::filesystem::path&, std::size_t,
                                                                std::string_view);
template void write_payload<float>(const std::filesystem::path&, std::span<const float>, std::string_view);
template void write_payload<double>(const std::filesystem::path&, std::span<const double>, std::string_view);
template void write_payload<std::uint16_t>(const std::filesystem::path&, std::span<const std::uint16_t>,
                                           std::string_view);

}  // namespace jigsawhsi
