#pragma once

// Volume file format: <name>.json header + <name>.raw little-endian payload.

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <type_traits>
#include <variant>

#include <json.hpp>

#include "bseg/volume.hpp"

namespace bseg {

namespace fs = std::filesystem;

template <typename T>
struct DType;
template <>
struct DType<std::uint8_t> {
  static constexpr std::string_view name = "u8";
};
template <>
struct DType<float> {
  static constexpr std::string_view name = "f32";
};

struct VolumeHeader {
  Grid grid;
  std::size_t channels = 1;
  std::string dtype;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();  // fields beyond the core set
};

using AnyVolume = std::variant<Volume<std::uint8_t>, Volume<float>>;

/// "<dir>/case.json", "<dir>/case.raw" and "<dir>/case" all name the same volume.
inline fs::path volume_stem(const fs::path& p) {
  if (p.extension() == ".json" || p.extension() == ".raw") {
    fs::path stem = p;
    stem.replace_extension();
    return stem;
  }
  return p;
}

inline fs::path header_path(const fs::path& p) {
  return fs::path(volume_stem(p).string() + ".json");
}
inline fs::path raw_path(const fs::path& p) { return fs::path(volume_stem(p).string() + ".raw"); }

namespace detail {

inline nlohmann::ordered_json load_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  try {
    return nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

inline void save_text_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  if (!out) throw IoError("write failed for " + p.string());
}

template <typename T>
void to_little_endian(std::span<const T> values, std::vector<char>& bytes) {
  bytes.resize(values.size_bytes());
  std::memcpy(bytes.data(), values.data(), bytes.size());
  if constexpr (sizeof(T) > 1 && std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < bytes.size(); i += sizeof(T))
      std::reverse(bytes.begin() + i, bytes.begin() + i + sizeof(T));
  }
}

template <typename T>
void from_little_endian(std::vector<char>& bytes, std::span<T> values) {
  if constexpr (sizeof(T) > 1 && std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < bytes.size(); i += sizeof(T))
      std::reverse(bytes.begin() + i, bytes.begin() + i + sizeof(T));
  }
  std::memcpy(values.data(), bytes.data(), bytes.size());
}

} // namespace detail

inline VolumeHeader read_header(const fs::path& path) {
  const auto j = detail::load_json_file(header_path(path));
  VolumeHeader h;
  try {
    const auto& dims = j.at("dims");
    const auto& spacing = j.at("spacing_mm");
    const auto& origin = j.at("origin_mm");
    if (dims.size() != 3 || spacing.size() != 3 || origin.size() != 3)
      throw FormatError("dims, spacing_mm and origin_mm must have three entries");
    for (int a = 0; a < 3; ++a) {
      const auto d = dims[a].get<long long>();
      if (d <= 0) throw FormatError("dims must be positive");
      h.grid.dims[a] = static_cast<std::size_t>(d);
      h.grid.spacing_mm[a] = spacing[a].get<double>();
      h.grid.origin_mm[a] = origin[a].get<double>();
      if (!(h.grid.spacing_mm[a] > 0.0)) throw FormatError("non-positive spacing in " + header_path(path).string());
    }
    const auto ch = j.at("channels").get<long long>();
    if (ch <= 0) throw FormatError("channels must be positive");
    h.channels = static_cast<std::size_t>(ch);
    h.dtype = j.at("dtype").get<std::string>();
    if (h.dtype != "u8" && h.dtype != "f32") throw FormatError("unknown dtype '" + h.dtype + "'");
    if (j.contains("axis_convention") && j.at("axis_convention").get<std::string>() != kAxisConvention)
      throw FormatError("unsupported axis_convention");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(header_path(path).string() + ": " + e.what());
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    static constexpr std::array<std::string_view, 6> core{"dims",     "spacing_mm", "origin_mm",
                                                           "channels", "dtype",      "axis_convention"};
    if (std::find(core.begin(), core.end(), it.key()) == core.end()) h.extra[it.key()] = it.value();
  }
  return h;
}

template <typename T>
Volume<T> read_volume_as(const fs::path& path, VolumeHeader* header_out = nullptr) {
  VolumeHeader h = read_header(path);
  if (h.dtype != DType<T>::name)
    throw FormatError(header_path(path).string() + ": expected dtype " + std::string(DType<T>::name) +
                      ", found " + h.dtype);
  const fs::path raw = raw_path(path);
  std::ifstream in(raw, std::ios::binary);
  if (!in) throw IoError("cannot open " + raw.string());
  const std::size_t expected = h.grid.voxel_count() * h.channels * sizeof(T);
  const auto actual = static_cast<std::size_t>(fs::file_size(raw));
  if (actual != expected)
    throw FormatError(raw.string() + ": size " + std::to_string(actual) + " bytes, header implies " +
                      std::to_string(expected));
  std::vector<char> bytes(expected);
  in.read(bytes.data(), static_cast<std::streamsize>(expected));
  if (!in) throw IoError("short read on " + raw.string());
  std::vector<T> values(h.grid.voxel_count() * h.channels);
  detail::from_little_endian<T>(bytes, values);
  if (header_out) *header_out = h;
  return Volume<T>(h.grid, h.channels, std::move(values));
}

inline AnyVolume read_volume(const fs::path& path) {
  const VolumeHeader h = read_header(path);
  if (h.dtype == "u8") return read_volume_as<std::uint8_t>(path);
  return read_volume_as<float>(path);
}

template <typename T>
nlohmann::ordered_json header_json(const Volume<T>& v, const nlohmann::ordered_json& extra = {}) {
  const auto& g = v.grid();
  nlohmann::ordered_json j;
  j["dims"] = {g.dims[0], g.dims[1], g.dims[2]};
  j["spacing_mm"] = {g.spacing_mm[0], g.spacing_mm[1], g.spacing_mm[2]};
  j["origin_mm"] = {g.origin_mm[0], g.origin_mm[1], g.origin_mm[2]};
  j["channels"] = v.channels();
  j["dtype"] = std::string(DType<T>::name);
  j["axis_convention"] = std::string(kAxisConvention);
  if (extra.is_object())
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  return j;
}

template <typename T>
void write_volume(const Volume<T>& v, const fs::path& path, const nlohmann::ordered_json& extra = {}) {
  detail::save_text_file(header_path(path), header_json(v, extra).dump(2) + "\n");
  std::vector<char> bytes;
  detail::to_little_endian<T>(v.data(), bytes);
  const fs::path raw = raw_path(path);
  std::ofstream out(raw, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + raw.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + raw.string());
}

inline void write_volume(const AnyVolume& v, const fs::path& path, const nlohmann::ordered_json& extra = {}) {
  std::visit([&](const auto& vol) { write_volume(vol, path, extra); }, v);
}

} // namespace bseg
