#pragma once

#include <limits>

#include "bseg/volume.hpp"

namespace bseg {

namespace detail {

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) along one line.
// f holds squared distances on input; positions are i*step.
inline void edt_line(std::vector<double>& f, double step, std::vector<double>& out, std::vector<std::size_t>& v,
                     std::vector<double>& z) {
  const std::size_t n = f.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  out.assign(n, inf);
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  std::size_t k = 0;
  bool any = false;
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] == inf) continue;
    const double pq = static_cast<double>(q) * step;
    if (!any) {
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      k = 0;
      any = true;
      continue;
    }
    double s;
    while (true) {
      const double pv = static_cast<double>(v[k]) * step;
      s = ((f[q] + pq * pq) - (f[v[k]] + pv * pv)) / (2.0 * (pq - pv));
      if (s <= z[k] && k > 0) {
        --k;
        continue;
      }
      break;
    }
    if (s <= z[k]) {
      // k == 0 and the new parabola dominates everywhere.
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  if (!any) return;
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const double pq = static_cast<double>(q) * step;
    while (z[k + 1] < pq) ++k;
    const double d = pq - static_cast<double>(v[k]) * step;
    out[q] = d * d + f[v[k]];
  }
}

} // namespace detail

/// Exact squared Euclidean distance (mm^2) from every voxel center to the
/// nearest voxel with `features` set, honoring anisotropic spacing. Infinity
/// when there are no features.
inline Volume<double> squared_distance_transform(const Mask& features) {
  const Grid& g = features.grid();
  const auto& d = g.dims;
  constexpr double inf = std::numeric_limits<double>::infinity();
  Volume<double> dist(g, 1, inf);
  for (std::size_t i = 0; i < g.voxel_count(); ++i)
    if (features.at(i)) dist.at(i) = 0.0;

  std::vector<double> f, out, z;
  std::vector<std::size_t> v;
  for (int axis = 0; axis < 3; ++axis) {
    const std::size_t n = d[axis];
    const std::size_t stride = axis == 0 ? 1 : (axis == 1 ? d[0] : d[0] * d[1]);
    const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    f.resize(n);
    for (std::size_t j = 0; j < d[a2]; ++j) {
      for (std::size_t i = 0; i < d[a1]; ++i) {
        Index3 c{};
        c[axis] = 0;
        c[a1] = i;
        c[a2] = j;
        const std::size_t start = g.linear(c[0], c[1], c[2]);
        for (std::size_t q = 0; q < n; ++q) f[q] = dist.at(start + q * stride);
        detail::edt_line(f, g.spacing_mm[axis], out, v, z);
        for (std::size_t q = 0; q < n; ++q) dist.at(start + q * stride) = out[q];
      }
    }
  }
  return dist;
}

} // namespace bseg
