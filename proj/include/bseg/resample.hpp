#pragma once

#include <cmath>
#include <limits>

#include "bseg/volume.hpp"

namespace bseg {

/// Output voxel count along one axis when resampling from spacing `in_mm` to
/// `target_mm`: floor((n-1)*in/target) + 1, so the new grid never extends past
/// the last input sample.
inline std::size_t resampled_length(std::size_t n_in, double in_mm, double target_mm) {
  if (n_in == 0) return 0;
  const double span = static_cast<double>(n_in - 1) * in_mm / target_mm;
  return static_cast<std::size_t>(std::floor(span + 1e-9)) + 1;
}

namespace detail {

struct AxisSample {
  std::size_t i0 = 0;
  std::size_t i1 = 0;
  double w1 = 0.0;  // weight of i1; i0 gets 1 - w1
};

inline std::vector<AxisSample> axis_samples(std::size_t n_in, double in_mm, std::size_t n_out, double out_mm) {
  std::vector<AxisSample> s(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double pos = static_cast<double>(i) * out_mm / in_mm;
    auto i0 = static_cast<std::size_t>(std::floor(pos));
    if (i0 >= n_in - 1) {
      s[i] = {n_in - 1, n_in - 1, 0.0};
      continue;
    }
    double w = pos - static_cast<double>(i0);
    if (w < 1e-12) w = 0.0;
    s[i] = {i0, i0 + 1, w};
  }
  return s;
}

template <typename T>
T cast_sample(double v) {
  if constexpr (std::is_integral_v<T>) {
    const double r = std::round(v);
    return static_cast<T>(std::clamp(r, static_cast<double>(std::numeric_limits<T>::lowest()),
                                     static_cast<double>(std::numeric_limits<T>::max())));
  } else {
    return static_cast<T>(v);
  }
}

} // namespace detail

/// Trilinear resampling to isotropic `target_mm` spacing. Sample i of the output
/// sits at i*target mm from the first input sample; origin is preserved.
template <typename T>
Volume<T> resample_isotropic(const Volume<T>& v, double target_mm = 1.0) {
  if (!(target_mm > 0.0)) throw InvalidArgument("target spacing must be positive");
  const Grid& in = v.grid();
  Grid out_grid = in;
  for (int a = 0; a < 3; ++a) {
    if (in.dims[a] < 2 && in.spacing_mm[a] != target_mm)
      throw InvalidArgument("cannot resample an axis with fewer than two samples");
    out_grid.dims[a] = resampled_length(in.dims[a], in.spacing_mm[a], target_mm);
    out_grid.spacing_mm[a] = target_mm;
  }
  const auto sx = detail::axis_samples(in.dims[0], in.spacing_mm[0], out_grid.dims[0], target_mm);
  const auto sy = detail::axis_samples(in.dims[1], in.spacing_mm[1], out_grid.dims[1], target_mm);
  const auto sz = detail::axis_samples(in.dims[2], in.spacing_mm[2], out_grid.dims[2], target_mm);

  const std::size_t nc = v.channels();
  Volume<T> out(out_grid, nc);
  for (std::size_t z = 0; z < out_grid.dims[2]; ++z) {
    const auto& az = sz[z];
    for (std::size_t y = 0; y < out_grid.dims[1]; ++y) {
      const auto& ay = sy[y];
      for (std::size_t x = 0; x < out_grid.dims[0]; ++x) {
        const auto& ax = sx[x];
        for (std::size_t c = 0; c < nc; ++c) {
          auto at = [&](std::size_t i, std::size_t j, std::size_t k) {
            return static_cast<double>(v(i, j, k, c));
          };
          // Zero-weight taps are skipped so identity resampling is exact.
          auto lerp_x = [&](std::size_t j, std::size_t k) {
            return ax.w1 == 0.0 ? at(ax.i0, j, k) : (1.0 - ax.w1) * at(ax.i0, j, k) + ax.w1 * at(ax.i1, j, k);
          };
          auto lerp_y = [&](std::size_t k) {
            return ay.w1 == 0.0 ? lerp_x(ay.i0, k) : (1.0 - ay.w1) * lerp_x(ay.i0, k) + ay.w1 * lerp_x(ay.i1, k);
          };
          const double value =
              az.w1 == 0.0 ? lerp_y(az.i0) : (1.0 - az.w1) * lerp_y(az.i0) + az.w1 * lerp_y(az.i1);
          out(x, y, z, c) = detail::cast_sample<T>(value);
        }
      }
    }
  }
  return out;
}

} // namespace bseg
