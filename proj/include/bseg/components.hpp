#pragma once

#include <cstdint>

#include "bseg/volume.hpp"

namespace bseg {

/// Connected components of a binary mask. IDs are dense 1..count, numbered in
/// the x-fastest scan order of each component's first voxel; 0 is background.
struct ComponentSet {
  Volume<std::int32_t> ids;
  std::size_t count = 0;
  std::vector<std::size_t> voxel_counts;  // index id-1
  std::vector<std::array<Index3, 2>> bboxes;  // inclusive voxel bounds, index id-1

  bool touches_image_face(std::size_t id) const {
    const auto& [lo, hi] = bboxes[id - 1];
    const auto& d = ids.dims();
    for (int a = 0; a < 3; ++a)
      if (lo[a] == 0 || hi[a] + 1 == d[a]) return true;
    return false;
  }
};

namespace detail {

struct Offset {
  int dx, dy, dz;
};

inline const std::vector<Offset>& neighbor_offsets(int connectivity) {
  static const std::vector<Offset> faces{{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};
  static const std::vector<Offset> full = [] {
    std::vector<Offset> o;
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          if (dx || dy || dz) o.push_back({dx, dy, dz});
    return o;
  }();
  if (connectivity == 6) return faces;
  if (connectivity == 26) return full;
  throw InvalidArgument("connectivity must be 6 or 26");
}

inline bool step(const Index3& dims, const Index3& c, const Offset& o, Index3& out) {
  const long x = static_cast<long>(c[0]) + o.dx;
  const long y = static_cast<long>(c[1]) + o.dy;
  const long z = static_cast<long>(c[2]) + o.dz;
  if (x < 0 || y < 0 || z < 0 || x >= static_cast<long>(dims[0]) || y >= static_cast<long>(dims[1]) ||
      z >= static_cast<long>(dims[2]))
    return false;
  out = {static_cast<std::size_t>(x), static_cast<std::size_t>(y), static_cast<std::size_t>(z)};
  return true;
}

} // namespace detail

inline ComponentSet connected_components(const Mask& mask, int connectivity = 26) {
  const auto& offsets = detail::neighbor_offsets(connectivity);
  const Grid& g = mask.grid();
  ComponentSet cs;
  cs.ids = Volume<std::int32_t>(g, 1, 0);
  std::vector<std::size_t> queue;
  for (std::size_t seed = 0; seed < g.voxel_count(); ++seed) {
    if (!mask.at(seed) || cs.ids.at(seed) != 0) continue;
    const auto id = static_cast<std::int32_t>(++cs.count);
    Index3 lo = g.coords(seed), hi = lo;
    std::size_t n = 0;
    queue.clear();
    queue.push_back(seed);
    cs.ids.at(seed) = id;
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const std::size_t cur = queue[head];
      const Index3 c = g.coords(cur);
      ++n;
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], c[a]);
        hi[a] = std::max(hi[a], c[a]);
      }
      Index3 nb;
      for (const auto& o : offsets) {
        if (!detail::step(g.dims, c, o, nb)) continue;
        const std::size_t ni = g.linear(nb[0], nb[1], nb[2]);
        if (mask.at(ni) && cs.ids.at(ni) == 0) {
          cs.ids.at(ni) = id;
          queue.push_back(ni);
        }
      }
    }
    cs.voxel_counts.push_back(n);
    cs.bboxes.push_back({lo, hi});
  }
  return cs;
}

inline ComponentSet class_components(const LabelMap& labels, std::uint8_t cls, int connectivity = 26) {
  return connected_components(class_mask(labels, cls), connectivity);
}

/// Face area (mm^2) of the interface orthogonal to `axis`.
inline double face_area_mm2(const Grid& g, int axis) {
  return g.spacing_mm[(axis + 1) % 3] * g.spacing_mm[(axis + 2) % 3];
}

struct ContactAreas {
  ComponentSet components;     // components of class_a
  std::vector<double> area_mm2;  // shared-face area with class_b, index id-1
};

/// For every connected component of `class_a`, the total area of voxel faces it
/// shares with `class_b` voxels. Faces on the image border do not count.
inline ContactAreas contact_area(const LabelMap& labels, std::uint8_t class_a, std::uint8_t class_b,
                                 int connectivity = 26) {
  if (class_a >= kNumClasses || class_b >= kNumClasses) throw InvalidArgument("unknown class code");
  const Grid& g = labels.grid();
  ContactAreas out{class_components(labels, class_a, connectivity), {}};
  out.area_mm2.assign(out.components.count, 0.0);
  const auto& faces = detail::neighbor_offsets(6);
  for (std::size_t i = 0; i < g.voxel_count(); ++i) {
    const auto id = out.components.ids.at(i);
    if (id == 0) continue;
    const Index3 c = g.coords(i);
    Index3 nb;
    for (const auto& o : faces) {
      if (!detail::step(g.dims, c, o, nb)) continue;
      if (labels(nb[0], nb[1], nb[2]) != class_b) continue;
      const int axis = o.dx ? 0 : (o.dy ? 1 : 2);
      out.area_mm2[static_cast<std::size_t>(id) - 1] += face_area_mm2(g, axis);
    }
  }
  return out;
}

} // namespace bseg
