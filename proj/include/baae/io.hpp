#pragma once

// Little-endian binary blobs, JSON files, and atomic writes.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "baae/error.hpp"

namespace baae::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

template <class UInt>
void put_le(std::string& out, UInt v) {
  for (std::size_t i = 0; i < sizeof(UInt); ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
}

template <class UInt>
UInt get_le(const unsigned char* p) {
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(p[i]) << (8 * i);
  return v;
}

inline std::string encode_f64(std::span<const double> values) {
  std::string out;
  out.reserve(values.size() * 8);
  for (double v : values) put_le(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

inline std::vector<double> decode_f64(std::string_view bytes, const std::string& field) {
  if (bytes.size() % 8 != 0) throw DataError(field, "byte count not a multiple of 8");
  std::vector<double> out(bytes.size() / 8);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::bit_cast<double>(get_le<std::uint64_t>(p + 8 * i));
  }
  return out;
}

inline std::string encode_i32(std::span<const std::int32_t> values) {
  std::string out;
  out.reserve(values.size() * 4);
  for (std::int32_t v : values) put_le(out, static_cast<std::uint32_t>(v));
  return out;
}

inline std::vector<std::int32_t> decode_i32(std::string_view bytes, const std::string& field) {
  if (bytes.size() % 4 != 0) throw DataError(field, "byte count not a multiple of 4");
  std::vector<std::int32_t> out(bytes.size() / 4);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::int32_t>(get_le<std::uint32_t>(p + 4 * i));
  }
  return out;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string(), "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes `contents` to a sibling temporary file and renames it over `path`,
/// so readers never observe a partial file.
inline void write_file_atomic(const fs::path& path, std::string_view contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(path.string(), "cannot open for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw DataError(path.string(), "write failed");
  }
  fs::rename(tmp, path);
}

inline json read_json(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(path.string(), std::string("invalid JSON: ") + e.what());
  }
}

inline void write_json(const fs::path& path, const json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

/// Typed field access that reports missing or mistyped entries by name.
template <class T>
T field(const json& j, const std::string& key, const std::string& context) {
  if (!j.is_object() || !j.contains(key)) throw DataError(context + "." + key, "missing");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw DataError(context + "." + key, std::string("wrong type: ") + e.what());
  }
}

}  // namespace baae::io
