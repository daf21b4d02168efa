#pragma once

// Two-dimensional inputs for the external tumor detectors: per-timepoint median
// filtering along the projection axis, maximum intensity projection, and
// ImageNet-style channel normalization.

#include <optional>

#include "bseg/case_bundle.hpp"

namespace bseg {

enum class Plane { axial, sagittal };

inline std::string_view to_string(Plane p) { return p == Plane::axial ? "axial" : "sagittal"; }

inline Plane parse_plane(std::string_view s) {
  if (s == "axial") return Plane::axial;
  if (s == "sagittal") return Plane::sagittal;
  throw InvalidArgument("plane must be axial or sagittal, got '" + std::string(s) + "'");
}

/// Axis collapsed by the projection: axial projects over z (image x-y), sagittal over x (image y-z).
inline int projection_axis(Plane p) { return p == Plane::axial ? 2 : 0; }

/// Three-channel (pre, early, late) projection image stored as a volume with nz = 1.
struct MipImage {
  Plane plane = Plane::axial;
  Laterality laterality = Laterality::left;  // side of the slab for sagittal, case laterality for axial
  ScalarVolume image;

  std::size_t width() const { return image.dims()[0]; }
  std::size_t height() const { return image.dims()[1]; }
};

struct ImageNetStats {
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> stddev{0.229, 0.224, 0.225};
};

inline std::size_t median_window_voxels(double window_mm, double spacing_mm) {
  if (!(window_mm > 0.0)) throw InvalidArgument("median window must be positive");
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(window_mm / spacing_mm)));
}

/// Running median of `window_mm` along one axis only, replicate borders. For a
/// window of w samples the neighborhood spans offsets [-w/2, w-1-w/2] and the
/// lower median (order statistic (w-1)/2) is taken, so even windows pick an
/// existing sample.
template <typename T>
Volume<T> median_filter_axis(const Volume<T>& v, int axis, double window_mm = 10.0) {
  if (axis < 0 || axis > 2) throw InvalidArgument("axis must be 0, 1 or 2");
  const std::size_t w = median_window_voxels(window_mm, v.spacing()[axis]);
  const std::size_t n = v.dims()[axis];
  if (w > n) throw InvalidArgument("median window larger than axis extent");
  if (w == 1) return v;

  const auto& d = v.dims();
  const std::size_t stride = axis == 0 ? 1 : (axis == 1 ? d[0] : d[0] * d[1]);
  const long lo = -static_cast<long>(w / 2);
  const std::size_t rank = (w - 1) / 2;
  const std::size_t nc = v.channels();

  Volume<T> out(v.grid(), nc);
  std::vector<T> line(n), scratch(w);
  // Enumerate the start of every line along `axis`.
  for (std::size_t start = 0; start < v.voxel_count(); ++start) {
    const Index3 c = v.grid().coords(start);
    if (c[axis] != 0) continue;
    for (std::size_t ch = 0; ch < nc; ++ch) {
      for (std::size_t i = 0; i < n; ++i) line[i] = v.at(start + i * stride, ch);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < w; ++k) {
          const long src = std::clamp<long>(static_cast<long>(i) + lo + static_cast<long>(k), 0,
                                            static_cast<long>(n) - 1);
          scratch[k] = line[static_cast<std::size_t>(src)];
        }
        std::nth_element(scratch.begin(), scratch.begin() + static_cast<long>(rank), scratch.end());
        out.at(start + i * stride, ch) = scratch[rank];
      }
    }
  }
  return out;
}

/// Copy of the voxel slab x in [x0, x1).
template <typename T>
Volume<T> crop_x(const Volume<T>& v, std::size_t x0, std::size_t x1) {
  Grid g = v.grid();
  g.dims[0] = x1 - x0;
  g.origin_mm[0] += static_cast<double>(x0) * g.spacing_mm[0];
  Volume<T> out(g, v.channels());
  for (std::size_t z = 0; z < g.dims[2]; ++z)
    for (std::size_t y = 0; y < g.dims[1]; ++y)
      for (std::size_t x = x0; x < x1; ++x)
        for (std::size_t c = 0; c < v.channels(); ++c) out(x - x0, y, z, c) = v(x, y, z, c);
  return out;
}

/// Maximum intensity projection of one prepared case. Sagittal projections need
/// a side and only see that half of the volume (x < nx/2 for left). Each
/// timepoint is median filtered along the projection axis before projecting.
inline MipImage make_mip(const CaseBundle& bundle, Plane plane, std::optional<Side> side = std::nullopt,
                         double window_mm = 10.0) {
  bundle.require_same_grid();
  const int axis = projection_axis(plane);
  const Grid& g = bundle[Timepoint::pre].grid();
  if (plane == Plane::sagittal && !side) throw InvalidArgument("sagittal projection needs a side");

  std::size_t x0 = 0, x1 = g.dims[0];
  if (plane == Plane::sagittal) std::tie(x0, x1) = side_voxel_range(*side, g.dims[0]);
  if (x1 <= x0) throw InvalidArgument("volume too narrow for a half-volume projection");

  Grid ig;
  if (plane == Plane::axial) {
    ig.dims = {g.dims[0], g.dims[1], 1};
    ig.spacing_mm = {g.spacing_mm[0], g.spacing_mm[1], g.spacing_mm[2]};
    ig.origin_mm = {g.origin_mm[0], g.origin_mm[1], g.origin_mm[2]};
  } else {
    ig.dims = {g.dims[1], g.dims[2], 1};
    ig.spacing_mm = {g.spacing_mm[1], g.spacing_mm[2], g.spacing_mm[0]};
    ig.origin_mm = {g.origin_mm[1], g.origin_mm[2], g.origin_mm[0] + static_cast<double>(x0) * g.spacing_mm[0]};
  }
  MipImage mip;
  mip.plane = plane;
  mip.laterality = plane == Plane::sagittal ? (*side == Side::left ? Laterality::left : Laterality::right)
                                            : bundle.laterality;
  mip.image = ScalarVolume(ig, 3, -std::numeric_limits<float>::infinity());

  for (int t = 0; t < 3; ++t) {
    const ScalarVolume& src = bundle.timepoints[t];
    const ScalarVolume slab = plane == Plane::sagittal ? crop_x(src, x0, x1) : src;
    const ScalarVolume filtered = median_filter_axis(slab, axis, window_mm);
    const auto& d = filtered.dims();
    for (std::size_t z = 0; z < d[2]; ++z)
      for (std::size_t y = 0; y < d[1]; ++y)
        for (std::size_t x = 0; x < d[0]; ++x) {
          const float v = filtered(x, y, z);
          float& px = plane == Plane::axial ? mip.image(x, y, 0, t) : mip.image(y, z, 0, t);
          px = std::max(px, v);
        }
  }
  return mip;
}

/// Axial image plus one sagittal image per diseased side.
inline std::vector<MipImage> make_mips(const CaseBundle& bundle, double window_mm = 10.0) {
  std::vector<MipImage> out;
  out.push_back(make_mip(bundle, Plane::axial, std::nullopt, window_mm));
  for (Side s : sides_of(bundle.laterality)) out.push_back(make_mip(bundle, Plane::sagittal, s, window_mm));
  return out;
}

/// Per-channel min-max rescale to [0,1], then (v - mean_c) / std_c. A constant
/// channel maps to (0 - mean_c) / std_c everywhere.
inline MipImage normalize_imagenet(const MipImage& img, const ImageNetStats& stats = {}) {
  if (img.image.channels() != 3) throw InvalidArgument("MIP image must have three channels");
  MipImage out = img;
  const std::size_t n = img.image.voxel_count();
  for (std::size_t c = 0; c < 3; ++c) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < n; ++i) {
      lo = std::min<double>(lo, img.image.at(i, c));
      hi = std::max<double>(hi, img.image.at(i, c));
    }
    const double range = hi - lo;
    for (std::size_t i = 0; i < n; ++i) {
      const double unit = range > 0.0 ? (img.image.at(i, c) - lo) / range : 0.0;
      out.image.at(i, c) = static_cast<float>((unit - stats.mean[c]) / stats.stddev[c]);
    }
  }
  return out;
}

inline void write_mip(const MipImage& mip, const fs::path& path) {
  nlohmann::ordered_json extra;
  extra["plane"] = std::string(to_string(mip.plane));
  extra["laterality"] = std::string(to_string(mip.laterality));
  write_volume(mip.image, path, extra);
}

inline MipImage read_mip(const fs::path& path) {
  VolumeHeader h;
  MipImage mip;
  mip.image = read_volume_as<float>(path, &h);
  if (mip.image.channels() != 3 || mip.image.dims()[2] != 1)
    throw FormatError(path.string() + ": MIP images have nz = 1 and three channels");
  try {
    mip.plane = parse_plane(h.extra.at("plane").get<std::string>());
    mip.laterality = parse_laterality(h.extra.at("laterality").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return mip;
}

} // namespace bseg
