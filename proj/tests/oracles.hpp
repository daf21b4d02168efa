#pragma once

// Brute-force reference implementations used to cross-check the library. They
// share only the Volume container with the code under test and favor obvious
// loops over speed, so they are meant for small volumes.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "bseg/volume.hpp"

namespace oracle {

using bseg::LabelMap;
using bseg::Index3;

inline double dice(const LabelMap& p, const LabelMap& g, std::uint8_t cls) {
  std::set<std::size_t> a, b;
  for (std::size_t i = 0; i < p.voxel_count(); ++i) {
    if (p.at(i) == cls) a.insert(i);
    if (g.at(i) == cls) b.insert(i);
  }
  if (a.empty() && b.empty()) return 100.0;
  std::vector<std::size_t> both;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
  return 200.0 * double(both.size()) / double(a.size() + b.size());
}

inline bool inside(const Index3& d, long x, long y, long z) {
  return x >= 0 && y >= 0 && z >= 0 && x < long(d[0]) && y < long(d[1]) && z < long(d[2]);
}

inline std::vector<std::array<long, 3>> surface(const LabelMap& l, std::uint8_t cls) {
  const auto& d = l.dims();
  std::vector<std::array<long, 3>> out;
  const long off[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (long z = 0; z < long(d[2]); ++z)
    for (long y = 0; y < long(d[1]); ++y)
      for (long x = 0; x < long(d[0]); ++x) {
        if (l(x, y, z) != cls) continue;
        bool edge = false;
        for (const auto& o : off) {
          const long a = x + o[0], b = y + o[1], c = z + o[2];
          if (!inside(d, a, b, c) || l(a, b, c) != cls) edge = true;
        }
        if (edge) out.push_back({x, y, z});
      }
  return out;
}

/// All-pairs symmetric surface distances.
inline std::vector<double> surface_distances(const LabelMap& p, const LabelMap& g, std::uint8_t cls) {
  const auto sp = surface(p, cls), sg = surface(g, cls);
  const auto& s = p.spacing();
  auto nearest = [&](const std::array<long, 3>& v, const std::vector<std::array<long, 3>>& other) {
    double best = INFINITY;
    for (const auto& w : other) {
      double d2 = 0.0;
      for (int a = 0; a < 3; ++a) d2 += std::pow(double(v[a] - w[a]) * s[a], 2);
      best = std::min(best, d2);
    }
    return std::sqrt(best);
  };
  std::vector<double> out;
  for (const auto& v : sp) out.push_back(nearest(v, sg));
  for (const auto& v : sg) out.push_back(nearest(v, sp));
  return out;
}

/// q-th percentile with linear interpolation between closest ranks.
inline double robust_hausdorff(const LabelMap& p, const LabelMap& g, std::uint8_t cls, double q = 95.0) {
  auto d = surface_distances(p, g, cls);
  std::sort(d.begin(), d.end());
  const double rank = q / 100.0 * double(d.size() - 1);
  const auto lo = std::size_t(rank);
  if (lo + 1 >= d.size()) return d.back();
  return d[lo] + (rank - double(lo)) * (d[lo + 1] - d[lo]);
}

/// Union-find labeling of `cls`; returns a root per voxel (SIZE_MAX off-class).
inline std::vector<std::size_t> components(const LabelMap& l, std::uint8_t cls, int conn) {
  const auto& d = l.dims();
  const std::size_t n = l.voxel_count();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (long z = 0; z < long(d[2]); ++z)
    for (long y = 0; y < long(d[1]); ++y)
      for (long x = 0; x < long(d[0]); ++x) {
        if (l(x, y, z) != cls) continue;
        for (long dz = -1; dz <= 1; ++dz)
          for (long dy = -1; dy <= 1; ++dy)
            for (long dx = -1; dx <= 1; ++dx) {
              const int manhattan = int(std::abs(dx) + std::abs(dy) + std::abs(dz));
              if (manhattan == 0 || (conn == 6 && manhattan > 1) || (conn == 18 && manhattan > 2)) continue;
              if (!inside(d, x + dx, y + dy, z + dz) || l(x + dx, y + dy, z + dz) != cls) continue;
              parent[find(l.grid().linear(x, y, z))] = find(l.grid().linear(x + dx, y + dy, z + dz));
            }
      }
  std::vector<std::size_t> root(n, SIZE_MAX);
  for (std::size_t i = 0; i < n; ++i)
    if (l.at(i) == cls) root[i] = find(i);
  return root;
}

inline std::size_t component_count(const std::vector<std::size_t>& roots) {
  std::set<std::size_t> s;
  for (auto r : roots)
    if (r != SIZE_MAX) s.insert(r);
  return s.size();
}

inline std::size_t fp_components(const LabelMap& p, const LabelMap& g, std::uint8_t tumor = 5) {
  const auto roots = components(p, tumor, 26);
  std::map<std::size_t, bool> hit;
  for (std::size_t i = 0; i < p.voxel_count(); ++i) {
    if (roots[i] == SIZE_MAX) continue;
    hit[roots[i]] = hit[roots[i]] || g.at(i) == tumor;
  }
  return std::size_t(std::count_if(hit.begin(), hit.end(), [](const auto& kv) { return !kv.second; }));
}

/// Contact area per component of class a with class b, keyed by the smallest
/// linear index in the component.
inline std::map<std::size_t, double> contact(const LabelMap& l, std::uint8_t a, std::uint8_t b, int conn) {
  const auto roots = components(l, a, conn);
  std::map<std::size_t, std::size_t> first;
  for (std::size_t i = 0; i < l.voxel_count(); ++i)
    if (roots[i] != SIZE_MAX && !first.count(roots[i])) first[roots[i]] = i;
  std::map<std::size_t, double> out;
  for (const auto& [r, f] : first) out[f] = 0.0;
  // Walk every interior face of the grid once.
  const auto& s = l.spacing();
  const auto& d = l.dims();
  for (int k = 0; k < 3; ++k)
    for (long z = 0; z < long(d[2]); ++z)
      for (long y = 0; y < long(d[1]); ++y)
        for (long x = 0; x < long(d[0]); ++x) {
          long n[3] = {x, y, z};
          n[k] += 1;
          if (!inside(d, n[0], n[1], n[2])) continue;
          const std::size_t i = l.grid().linear(x, y, z), j = l.grid().linear(n[0], n[1], n[2]);
          const double area = s[(k + 1) % 3] * s[(k + 2) % 3];
          if (roots[i] != SIZE_MAX && l.at(j) == b) out[first[roots[i]]] += area;
          if (roots[j] != SIZE_MAX && l.at(i) == b) out[first[roots[j]]] += area;
        }
  return out;
}

/// Random label volume of up to `max_side`^3 voxels with clustered classes.
inline LabelMap random_labels(std::mt19937_64& rng, std::size_t max_side = 20, int classes = 3) {
  std::uniform_int_distribution<std::size_t> side(2, max_side);
  bseg::Grid g;
  g.dims = {side(rng), side(rng), side(rng)};
  std::uniform_real_distribution<double> sp(0.5, 2.0);
  g.spacing_mm = {sp(rng), sp(rng), sp(rng)};
  LabelMap l(g, 1, 0);
  std::uniform_int_distribution<int> cls(0, classes - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep = u(rng);  // cluster strength
  for (std::size_t i = 0; i < l.voxel_count(); ++i)
    l.at(i) = static_cast<std::uint8_t>(i > 0 && u(rng) < keep ? l.at(i - 1) : cls(rng));
  return l;
}

} // namespace oracle
