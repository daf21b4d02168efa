#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bseg/error.hpp"

namespace bseg {

// Axis 0 = patient left-right, axis 1 = anterior-posterior, axis 2 = superior-inferior.
inline constexpr std::string_view kAxisConvention = "LR_AP_SI";

using Index3 = std::array<std::size_t, 3>;
using Vec3 = std::array<double, 3>;

/// Spatial sampling of a volume. Voxel i along an axis covers [i*s, (i+1)*s) mm
/// relative to the origin; box coordinates throughout the library use this frame.
struct Grid {
  Index3 dims{0, 0, 0};
  Vec3 spacing_mm{1.0, 1.0, 1.0};
  Vec3 origin_mm{0.0, 0.0, 0.0};

  std::size_t voxel_count() const { return dims[0] * dims[1] * dims[2]; }

  Vec3 extent_mm() const {
    return {dims[0] * spacing_mm[0], dims[1] * spacing_mm[1], dims[2] * spacing_mm[2]};
  }

  std::size_t linear(std::size_t x, std::size_t y, std::size_t z) const {
    return x + dims[0] * (y + dims[1] * z);
  }

  Index3 coords(std::size_t linear_index) const {
    const std::size_t x = linear_index % dims[0];
    const std::size_t rest = linear_index / dims[0];
    return {x, rest % dims[1], rest / dims[1]};
  }

  /// Voxel-center position along an axis, in the box frame.
  double center_mm(int axis, std::size_t i) const {
    return (static_cast<double>(i) + 0.5) * spacing_mm[axis];
  }

  bool same_sampling(const Grid& other) const {
    return dims == other.dims && spacing_mm == other.spacing_mm;
  }

  bool operator==(const Grid&) const = default;

  void validate() const {
    for (int a = 0; a < 3; ++a) {
      if (!(spacing_mm[a] > 0.0) || !std::isfinite(spacing_mm[a]))
        throw InvalidArgument("spacing must be strictly positive on every axis");
    }
  }
};

/// Dense voxel grid with interleaved channels: x fastest, then y, then z,
/// channel innermost.
template <typename T>
class Volume {
public:
  using value_type = T;

  Volume() = default;

  explicit Volume(Grid grid, std::size_t channels = 1, T fill = T{})
      : grid_(grid), channels_(channels), data_(grid.voxel_count() * channels, fill) {
    grid_.validate();
    if (channels_ == 0) throw InvalidArgument("channel count must be positive");
  }

  Volume(Grid grid, std::size_t channels, std::vector<T> data)
      : grid_(grid), channels_(channels), data_(std::move(data)) {
    grid_.validate();
    if (channels_ == 0) throw InvalidArgument("channel count must be positive");
    if (data_.size() != grid_.voxel_count() * channels_)
      throw FormatError("buffer length does not match dims x channels");
  }

  const Grid& grid() const { return grid_; }
  const Index3& dims() const { return grid_.dims; }
  const Vec3& spacing() const { return grid_.spacing_mm; }
  std::size_t channels() const { return channels_; }
  std::size_t voxel_count() const { return grid_.voxel_count(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& buffer() { return data_; }
  const std::vector<T>& buffer() const { return data_; }

  T& at(std::size_t voxel, std::size_t c = 0) { return data_[voxel * channels_ + c]; }
  const T& at(std::size_t voxel, std::size_t c = 0) const { return data_[voxel * channels_ + c]; }

  T& operator()(std::size_t x, std::size_t y, std::size_t z, std::size_t c = 0) {
    return data_[grid_.linear(x, y, z) * channels_ + c];
  }
  const T& operator()(std::size_t x, std::size_t y, std::size_t z, std::size_t c = 0) const {
    return data_[grid_.linear(x, y, z) * channels_ + c];
  }

  std::span<T> voxel(std::size_t linear_index) {
    return std::span<T>(data_).subspan(linear_index * channels_, channels_);
  }
  std::span<const T> voxel(std::size_t linear_index) const {
    return std::span<const T>(data_).subspan(linear_index * channels_, channels_);
  }

  bool operator==(const Volume&) const = default;

private:
  Grid grid_{};
  std::size_t channels_ = 1;
  std::vector<T> data_;
};

// ---------------------------------------------------------------------------
// Tissue classes

enum class Tissue : std::uint8_t {
  air = 0,
  skin = 1,
  adipose = 2,
  gland = 3,
  vasculature = 4,
  tumor = 5,
  chest = 6,
};

inline constexpr std::size_t kNumClasses = 7;

constexpr std::uint8_t code(Tissue t) { return static_cast<std::uint8_t>(t); }

inline constexpr std::array<std::string_view, kNumClasses> kTissueNames{
    "air", "skin", "adipose", "gland", "vasculature", "tumor", "chest"};

inline std::string_view tissue_name(std::uint8_t c) {
  if (c >= kNumClasses) throw InvalidArgument("unknown class code " + std::to_string(c));
  return kTissueNames[c];
}

inline std::uint8_t tissue_code(std::string_view name) {
  for (std::size_t i = 0; i < kNumClasses; ++i)
    if (kTissueNames[i] == name) return static_cast<std::uint8_t>(i);
  throw InvalidArgument("unknown class name '" + std::string(name) + "'");
}

using LabelMap = Volume<std::uint8_t>;
using ProbMap = Volume<float>;
using LogitMap = Volume<float>;
using ScalarVolume = Volume<float>;
using Mask = Volume<std::uint8_t>;

inline void require_label_map(const LabelMap& labels) {
  if (labels.channels() != 1) throw InvalidArgument("label map must have one channel");
  for (auto v : labels.data())
    if (v >= kNumClasses) throw InvalidArgument("label value outside 0..6");
}

inline void require_prob_map(const ProbMap& p) {
  if (p.channels() != kNumClasses) throw InvalidArgument("probability map must have 7 channels");
}

template <typename A, typename B>
void require_same_grid(const Volume<A>& a, const Volume<B>& b, std::string_view what) {
  if (!a.grid().same_sampling(b.grid()))
    throw GridMismatch(std::string(what) + ": inputs are on different voxel grids");
}

/// Index of the largest channel; ties go to the lowest class code.
inline std::uint8_t argmax_class(std::span<const float> probs) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < probs.size(); ++c)
    if (probs[c] > probs[best]) best = c;
  return static_cast<std::uint8_t>(best);
}

inline LabelMap argmax_labels(const ProbMap& p) {
  require_prob_map(p);
  LabelMap out(p.grid(), 1);
  for (std::size_t i = 0; i < p.voxel_count(); ++i) out.at(i) = argmax_class(p.voxel(i));
  return out;
}

inline Mask class_mask(const LabelMap& labels, std::uint8_t cls) {
  Mask m(labels.grid(), 1);
  for (std::size_t i = 0; i < labels.voxel_count(); ++i) m.at(i) = labels.at(i) == cls ? 1 : 0;
  return m;
}

inline ProbMap one_hot(const LabelMap& labels) {
  ProbMap p(labels.grid(), kNumClasses, 0.0f);
  for (std::size_t i = 0; i < labels.voxel_count(); ++i) p.at(i, labels.at(i)) = 1.0f;
  return p;
}

inline ScalarVolume extract_channel(const ProbMap& p, std::size_t c) {
  ScalarVolume out(p.grid(), 1);
  for (std::size_t i = 0; i < p.voxel_count(); ++i) out.at(i) = p.at(i, c);
  return out;
}

/// Largest |sum - 1| over voxels.
inline double max_sum_deviation(const ProbMap& p) {
  double worst = 0.0;
  for (std::size_t i = 0; i < p.voxel_count(); ++i) {
    double s = 0.0;
    for (float v : p.voxel(i)) s += v;
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Laterality

enum class Laterality { left, right, bilateral };
enum class Side { left, right };

inline std::string_view to_string(Laterality l) {
  switch (l) {
  case Laterality::left: return "left";
  case Laterality::right: return "right";
  case Laterality::bilateral: return "bilateral";
  }
  return "?";
}

inline std::string_view to_string(Side s) { return s == Side::left ? "left" : "right"; }

inline Laterality parse_laterality(std::string_view s) {
  if (s == "left") return Laterality::left;
  if (s == "right") return Laterality::right;
  if (s == "bilateral") return Laterality::bilateral;
  throw InvalidArgument("laterality must be left, right or bilateral, got '" + std::string(s) + "'");
}

inline std::vector<Side> sides_of(Laterality l) {
  switch (l) {
  case Laterality::left: return {Side::left};
  case Laterality::right: return {Side::right};
  case Laterality::bilateral: return {Side::left, Side::right};
  }
  return {};
}

/// Voxel range [begin, end) along axis 0 for one side. Index 0 is the patient's
/// left edge, so the left half is x < nx/2.
inline std::pair<std::size_t, std::size_t> side_voxel_range(Side s, std::size_t nx) {
  return s == Side::left ? std::pair<std::size_t, std::size_t>{0, nx / 2}
                         : std::pair<std::size_t, std::size_t>{nx / 2, nx};
}

/// Same half in mm (box frame): left = [0, extent/2], right = [extent/2, extent].
inline std::pair<double, double> side_mm_range(Side s, double extent_x_mm) {
  return s == Side::left ? std::pair<double, double>{0.0, extent_x_mm / 2.0}
                         : std::pair<double, double>{extent_x_mm / 2.0, extent_x_mm};
}

} // namespace bseg
