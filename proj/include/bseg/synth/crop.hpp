#pragma once

// Fixed-size training crops with a crop-level tumor/no-tumor ratio.

#include <random>

#include "bseg/case_bundle.hpp"

namespace bseg::synth {

struct TrainingCrop {
  CaseBundle bundle;
  LabelMap labels;
  Index3 origin{};          // voxel offset of the crop in the source volume
  bool positive_draw = false;
  bool contains_tumor = false;
};

namespace detail {

template <typename T>
Volume<T> crop_volume(const Volume<T>& v, const Index3& o, const Index3& n) {
  Grid g = v.grid();
  g.dims = n;
  for (int a = 0; a < 3; ++a) g.origin_mm[a] += static_cast<double>(o[a]) * g.spacing_mm[a];
  Volume<T> out(g, v.channels());
  for (std::size_t z = 0; z < n[2]; ++z)
    for (std::size_t y = 0; y < n[1]; ++y)
      for (std::size_t x = 0; x < n[0]; ++x)
        for (std::size_t c = 0; c < v.channels(); ++c) out(x, y, z, c) = v(o[0] + x, o[1] + y, o[2] + z, c);
  return out;
}

/// Inclusive 3D prefix sums with a zero border: s(x+1, y+1, z+1) counts hits
/// in [0..x] x [0..y] x [0..z].
class SummedVolume {
public:
  explicit SummedVolume(const Mask& m) : d_{m.dims()[0] + 1, m.dims()[1] + 1, m.dims()[2] + 1} {
    s_.assign(d_[0] * d_[1] * d_[2], 0);
    for (std::size_t z = 1; z < d_[2]; ++z)
      for (std::size_t y = 1; y < d_[1]; ++y)
        for (std::size_t x = 1; x < d_[0]; ++x)
          s_[idx(x, y, z)] = (m(x - 1, y - 1, z - 1) ? 1 : 0) + at(x - 1, y, z) + at(x, y - 1, z) + at(x, y, z - 1) -
                             at(x - 1, y - 1, z) - at(x - 1, y, z - 1) - at(x, y - 1, z - 1) +
                             at(x - 1, y - 1, z - 1);
  }

  /// Number of set voxels in the box [o, o + n).
  std::int64_t count(const Index3& o, const Index3& n) const {
    const std::size_t x0 = o[0], y0 = o[1], z0 = o[2], x1 = o[0] + n[0], y1 = o[1] + n[1], z1 = o[2] + n[2];
    return at(x1, y1, z1) - at(x0, y1, z1) - at(x1, y0, z1) - at(x1, y1, z0) + at(x0, y0, z1) + at(x0, y1, z0) +
           at(x1, y0, z0) - at(x0, y0, z0);
  }

private:
  std::size_t idx(std::size_t x, std::size_t y, std::size_t z) const { return (z * d_[1] + y) * d_[0] + x; }
  std::int64_t at(std::size_t x, std::size_t y, std::size_t z) const { return s_[idx(x, y, z)]; }

  Index3 d_;
  std::vector<std::int64_t> s_;
};

} // namespace detail

/// With probability `positive_fraction` the crop is centered (then clamped) on
/// a random tumor voxel. Otherwise a tumor-free crop is drawn when one exists,
/// falling back to a uniform crop. Volumes without tumor always get uniform crops.
inline TrainingCrop sample_training_crop(const CaseBundle& bundle, const LabelMap& gt, std::uint64_t seed,
                                         const Vec3& crop_mm = {128.0, 128.0, 64.0}, double positive_fraction = 0.9) {
  bundle.require_same_grid();
  require_same_grid(bundle[Timepoint::pre], gt, "sample_training_crop");
  if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0))
    throw InvalidArgument("positive fraction must lie in [0,1]");
  const Grid& g = gt.grid();
  Index3 n{};
  for (int a = 0; a < 3; ++a) {
    if (!(crop_mm[a] > 0.0)) throw InvalidArgument("crop extent must be positive");
    n[a] = static_cast<std::size_t>(std::llround(crop_mm[a] / g.spacing_mm[a]));
    if (n[a] == 0 || n[a] > g.dims[a]) throw InvalidArgument("volume is smaller than the crop");
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform_origin = [&] {
    Index3 o;
    for (int a = 0; a < 3; ++a) o[a] = std::uniform_int_distribution<std::size_t>(0, g.dims[a] - n[a])(rng);
    return o;
  };

  const Mask tumor = class_mask(gt, code(Tissue::tumor));
  std::vector<std::size_t> tumor_voxels;
  for (std::size_t i = 0; i < g.voxel_count(); ++i)
    if (tumor.at(i)) tumor_voxels.push_back(i);

  TrainingCrop out;
  out.positive_draw = unit(rng) < positive_fraction;
  Index3 o;
  if (tumor_voxels.empty()) {
    o = uniform_origin();
  } else if (out.positive_draw) {
    const Index3 t = g.coords(tumor_voxels[std::uniform_int_distribution<std::size_t>(0, tumor_voxels.size() - 1)(rng)]);
    for (int a = 0; a < 3; ++a) {
      const long start = static_cast<long>(t[a]) - static_cast<long>(n[a] / 2);
      o[a] = static_cast<std::size_t>(std::clamp(start, 0L, static_cast<long>(g.dims[a] - n[a])));
    }
  } else {
    const detail::SummedVolume sums(tumor);
    bool found = false;
    for (int attempt = 0; attempt < 1000 && !found; ++attempt) {
      o = uniform_origin();
      found = sums.count(o, n) == 0;
    }
    if (!found) {
      std::vector<Index3> free;
      for (std::size_t z = 0; z + n[2] <= g.dims[2]; ++z)
        for (std::size_t y = 0; y + n[1] <= g.dims[1]; ++y)
          for (std::size_t x = 0; x + n[0] <= g.dims[0]; ++x)
            if (sums.count({x, y, z}, n) == 0) free.push_back({x, y, z});
      o = free.empty() ? uniform_origin() : free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
    }
  }

  out.origin = o;
  out.bundle.case_id = bundle.case_id;
  out.bundle.laterality = bundle.laterality;
  for (int t = 0; t < 3; ++t) out.bundle.timepoints[t] = detail::crop_volume(bundle.timepoints[t], o, n);
  out.labels = detail::crop_volume(gt, o, n);
  out.contains_tumor =
      std::any_of(out.labels.data().begin(), out.labels.data().end(), [](auto v) { return v == code(Tissue::tumor); });
  return out;
}

} // namespace bseg::synth
