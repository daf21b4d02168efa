#pragma once

// Procedural breast phantoms: superellipsoid breasts on a posterior chest slab,
// a skin shell facing air, metaball gland, tubular vessels and a tumor seated in
// gland. Realism is not a goal; the phantoms carry the contact topology the
// post-processing relies on.

#include <random>

#include "bseg/case_bundle.hpp"
#include "bseg/components.hpp"
#include "bseg/distance.hpp"

namespace bseg::synth {

struct PhantomSpec {
  std::uint64_t seed = 0;
  Index3 dims{128, 128, 128};
  double spacing_mm = 1.0;
  std::array<double, 2> breast_radius_mm{24.0, 29.0};
  double gland_fraction = 0.35;  // rough share of the breast interior
  std::array<double, 2> tumor_diameter_mm{12.0, 22.0};
  int vessels_per_breast = 3;
  double vessel_radius_mm = 2.0;
  Laterality laterality = Laterality::left;
  double bpe = 0.3;  // background parenchymal enhancement in [0,1]
  double skin_thickness_mm = 2.0;
  double intensity_noise = 2.0;

  void validate() const {
    if (!(spacing_mm > 0.0)) throw InvalidArgument("phantom spacing must be positive");
    if (!(breast_radius_mm[0] > 0.0 && breast_radius_mm[1] >= breast_radius_mm[0]))
      throw InvalidArgument("breast radius range must be positive and ordered");
    if (!(tumor_diameter_mm[0] > 0.0 && tumor_diameter_mm[1] >= tumor_diameter_mm[0]))
      throw InvalidArgument("tumor diameter must be positive");
    if (vessel_radius_mm < 2.0) throw InvalidArgument("vessel radius must be at least 2 mm");
    if (vessels_per_breast < 0) throw InvalidArgument("vessel count must be non-negative");
    if (gland_fraction <= 0.0 || gland_fraction > 1.0) throw InvalidArgument("gland fraction must lie in (0,1]");
    if (bpe < 0.0 || bpe > 1.0) throw InvalidArgument("BPE level must lie in [0,1]");
    if (!(skin_thickness_mm > 0.0)) throw InvalidArgument("skin thickness must be positive");
    if (intensity_noise < 0.0) throw InvalidArgument("intensity noise must be non-negative");
  }
};

struct Phantom {
  CaseBundle bundle;
  LabelMap labels;
  Mask vessel_centerlines;
  std::vector<Vec3> tumor_centers_mm;  // box frame
};

namespace detail {

struct Ellipsoid {
  Vec3 center;  // voxel units
  Vec3 radii;   // voxel units
  double exponent = 2.5;

  double level(double x, double y, double z) const {
    return std::pow(std::abs(x - center[0]) / radii[0], exponent) +
           std::pow(std::abs(y - center[1]) / radii[1], exponent) +
           std::pow(std::abs(z - center[2]) / radii[2], exponent);
  }
};

struct TimeCurve {
  double pre, early, late;
};

inline TimeCurve enhancement(Tissue t, double bpe) {
  switch (t) {
  case Tissue::air: return {0.0, 0.0, 0.0};
  case Tissue::skin: return {70.0, 85.0, 90.0};
  case Tissue::adipose: return {25.0, 27.0, 29.0};
  case Tissue::gland: return {50.0, 50.0 + 60.0 * bpe, 50.0 + 80.0 * bpe};
  case Tissue::vasculature: return {60.0, 210.0, 160.0};
  case Tissue::tumor: return {55.0, 180.0, 150.0};
  case Tissue::chest: return {90.0, 110.0, 115.0};
  }
  return {0.0, 0.0, 0.0};
}

inline double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  Vec3 ab{b[0] - a[0], b[1] - a[1], b[2] - a[2]};
  Vec3 ap{p[0] - a[0], p[1] - a[1], p[2] - a[2]};
  const double len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
  double t = len2 > 0.0 ? (ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  double d2 = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double q = ap[a] - t * ab[a];
    d2 += q * q;
  }
  return std::sqrt(d2);
}

} // namespace detail

/// Builds one phantom. Deterministic in `spec.seed`. Throws InvalidArgument when
/// the requested anatomy does not fit (breast wider than its half, tumor deeper
/// than the available gland).
inline Phantom generate_phantom(const PhantomSpec& spec, const std::string& case_id = "phantom") {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  const double s = spec.spacing_mm;
  Grid g;
  g.dims = spec.dims;
  g.spacing_mm = {s, s, s};
  const auto& d = g.dims;
  const double nx = static_cast<double>(d[0]), ny = static_cast<double>(d[1]), nz = static_cast<double>(d[2]);

  const double chest_y0 = std::floor(0.62 * ny);
  LabelMap labels(g, 1, code(Tissue::air));
  Mask breast(g, 1, 0);
  std::array<detail::Ellipsoid, 2> breasts;
  for (int side = 0; side < 2; ++side) {
    const double r = uniform(spec.breast_radius_mm[0], spec.breast_radius_mm[1]) / s;
    auto& e = breasts[side];
    e.center = {side == 0 ? 0.27 * nx : 0.73 * nx, chest_y0, 0.5 * nz};
    e.radii = {r, std::min(r * uniform(0.95, 1.2), chest_y0 - 4.0), r * uniform(0.95, 1.1)};
    if (e.radii[0] + 3.0 > 0.25 * nx || e.radii[2] + 3.0 > 0.5 * nz || e.radii[1] < 0.6 * r)
      throw InvalidArgument("breast radius does not fit the phantom grid");
  }

  for (std::size_t z = 0; z < d[2]; ++z)
    for (std::size_t y = 0; y < d[1]; ++y)
      for (std::size_t x = 0; x < d[0]; ++x) {
        if (static_cast<double>(y) >= chest_y0) {
          labels(x, y, z) = code(Tissue::chest);
          continue;
        }
        for (const auto& e : breasts)
          if (e.level(static_cast<double>(x), static_cast<double>(y), static_cast<double>(z)) <= 1.0)
            breast(x, y, z) = 1;
      }

  // Skin: breast voxels within the skin thickness of air; the rest is adipose.
  Mask air(g, 1, 0);
  for (std::size_t i = 0; i < g.voxel_count(); ++i)
    air.at(i) = labels.at(i) == code(Tissue::air) && !breast.at(i);
  const auto air_d2 = squared_distance_transform(air);
  const double skin2 = spec.skin_thickness_mm * spec.skin_thickness_mm + 1e-9;
  Mask interior(g, 1, 0);
  for (std::size_t i = 0; i < g.voxel_count(); ++i) {
    if (!breast.at(i)) continue;
    if (air_d2.at(i) <= skin2) {
      labels.at(i) = code(Tissue::skin);
    } else {
      labels.at(i) = code(Tissue::adipose);
      interior.at(i) = 1;
    }
  }
  // Depth below the skin. The chest wall does not count as a boundary, so a
  // tumor may sit against it.
  Mask not_interior(g, 1, 0);
  for (std::size_t i = 0; i < g.voxel_count(); ++i)
    not_interior.at(i) = !interior.at(i) && labels.at(i) != code(Tissue::chest);
  const auto depth2 = squared_distance_transform(not_interior);

  // Gland: metaballs around the breast core, kept 2 mm clear of the skin.
  for (const auto& e : breasts) {
    const int balls = std::max(2, static_cast<int>(std::lround(spec.gland_fraction * 16.0)));
    std::vector<std::pair<Vec3, double>> centers;
    for (int b = 0; b < balls; ++b) {
      const Vec3 c{e.center[0] + uniform(-0.45, 0.45) * e.radii[0], e.center[1] - uniform(0.15, 0.6) * e.radii[1],
                   e.center[2] + uniform(-0.45, 0.45) * e.radii[2]};
      centers.push_back({c, uniform(0.18, 0.28) * e.radii[0]});
    }
    const std::size_t x0 = static_cast<std::size_t>(std::max(0.0, e.center[0] - e.radii[0]));
    const std::size_t x1 = static_cast<std::size_t>(std::min(nx, e.center[0] + e.radii[0] + 1));
    for (std::size_t z = 0; z < d[2]; ++z)
      for (std::size_t y = 0; y < d[1]; ++y)
        for (std::size_t x = x0; x < x1; ++x) {
          const std::size_t i = g.linear(x, y, z);
          if (!interior.at(i) || depth2.at(i) < 4.0) continue;
          double field = 0.0;
          for (const auto& [c, sigma] : centers) {
            const double dx = x - c[0], dy = y - c[1], dz = z - c[2];
            field += std::exp(-(dx * dx + dy * dy + dz * dz) / (2.0 * sigma * sigma));
          }
          if (field >= 0.5) labels.at(i) = code(Tissue::gland);
        }
  }

  // Vessels: straight tubes from the chest wall toward the front of each breast.
  Mask centerline(g, 1, 0);
  const double vr = spec.vessel_radius_mm / s;
  for (const auto& e : breasts) {
    for (int v = 0; v < spec.vessels_per_breast; ++v) {
      const Vec3 a{e.center[0] + uniform(-0.5, 0.5) * e.radii[0], chest_y0 - 3.0,
                   e.center[2] + uniform(-0.5, 0.5) * e.radii[2]};
      const Vec3 b{e.center[0] + uniform(-0.4, 0.4) * e.radii[0], chest_y0 - uniform(0.55, 0.8) * e.radii[1],
                   e.center[2] + uniform(-0.4, 0.4) * e.radii[2]};
      const auto lo_x = static_cast<std::size_t>(std::max(0.0, std::min(a[0], b[0]) - vr - 1));
      const auto hi_x = static_cast<std::size_t>(std::min(nx - 1, std::max(a[0], b[0]) + vr + 1));
      const auto lo_y = static_cast<std::size_t>(std::max(0.0, std::min(a[1], b[1]) - vr - 1));
      const auto hi_y = static_cast<std::size_t>(std::min(ny - 1, std::max(a[1], b[1]) + vr + 1));
      const auto lo_z = static_cast<std::size_t>(std::max(0.0, std::min(a[2], b[2]) - vr - 1));
      const auto hi_z = static_cast<std::size_t>(std::min(nz - 1, std::max(a[2], b[2]) + vr + 1));
      for (std::size_t z = lo_z; z <= hi_z; ++z)
        for (std::size_t y = lo_y; y <= hi_y; ++y)
          for (std::size_t x = lo_x; x <= hi_x; ++x) {
            const std::size_t i = g.linear(x, y, z);
            if (!interior.at(i)) continue;
            const double dist = detail::segment_distance({double(x), double(y), double(z)}, a, b);
            if (dist <= vr) labels.at(i) = code(Tissue::vasculature);
            if (dist <= 0.5) centerline.at(i) = 1;
          }
    }
  }

  // Tumor: an ellipsoid seated in gland, wrapped in a gland shell of 3 mm.
  Phantom ph;
  for (Side side : sides_of(spec.laterality)) {
    const double diameter = uniform(spec.tumor_diameter_mm[0], spec.tumor_diameter_mm[1]);
    const Vec3 radii{diameter / 2.0 / s * uniform(0.85, 1.15), diameter / 2.0 / s * uniform(0.85, 1.15),
                     diameter / 2.0 / s * uniform(0.85, 1.15)};
    const double rmax = std::max({radii[0], radii[1], radii[2]});
    const double shell = 3.0 / s;
    const double need = rmax + shell + 1.0;

    std::vector<std::size_t> candidates, fallback;
    const auto [sx0, sx1] = side_voxel_range(side, d[0]);
    for (std::size_t z = 0; z < d[2]; ++z)
      for (std::size_t y = 0; y < d[1]; ++y)
        for (std::size_t x = sx0; x < sx1; ++x) {
          const std::size_t i = g.linear(x, y, z);
          if (!interior.at(i)) continue;
          if (depth2.at(i) >= need * need * s * s) {
            fallback.push_back(i);
            if (labels.at(i) == code(Tissue::gland)) candidates.push_back(i);
          }
        }
    if (fallback.empty())
      throw InvalidArgument("tumor of diameter " + std::to_string(diameter) + " mm does not fit inside the breast");
    const auto& pool = candidates.empty() ? fallback : candidates;
    const std::size_t ci = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
    const Index3 c = g.coords(ci);

    const auto span = static_cast<long>(std::ceil(rmax + shell)) + 1;
    for (long dz = -span; dz <= span; ++dz)
      for (long dy = -span; dy <= span; ++dy)
        for (long dx = -span; dx <= span; ++dx) {
          const long x = static_cast<long>(c[0]) + dx, y = static_cast<long>(c[1]) + dy,
                     z = static_cast<long>(c[2]) + dz;
          if (x < 0 || y < 0 || z < 0 || x >= long(d[0]) || y >= long(d[1]) || z >= long(d[2])) continue;
          const std::size_t i = g.linear(x, y, z);
          if (!interior.at(i)) continue;
          const double q = std::pow(dx / radii[0], 2) + std::pow(dy / radii[1], 2) + std::pow(dz / radii[2], 2);
          const double qs = std::pow(dx / (radii[0] + shell), 2) + std::pow(dy / (radii[1] + shell), 2) +
                            std::pow(dz / (radii[2] + shell), 2);
          if (q <= 1.0) {
            labels.at(i) = code(Tissue::tumor);
            centerline.at(i) = 0;
          } else if (qs <= 1.0) {
            labels.at(i) = code(Tissue::gland);
            centerline.at(i) = 0;
          }
        }
    ph.tumor_centers_mm.push_back({g.center_mm(0, c[0]), g.center_mm(1, c[1]), g.center_mm(2, c[2])});
  }

  // Vessel centerlines may have been cut by the gland shell.
  for (std::size_t i = 0; i < g.voxel_count(); ++i)
    if (labels.at(i) != code(Tissue::vasculature)) centerline.at(i) = 0;

  const auto tumor_contact = contact_area(labels, code(Tissue::tumor), code(Tissue::gland));
  for (double a : tumor_contact.area_mm2)
    if (a < 64.0) throw InvalidArgument("phantom tumor has less than 64 mm^2 of gland contact");

  // Intensities per timepoint.
  CaseBundle bundle;
  bundle.case_id = case_id;
  bundle.laterality = spec.laterality;
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int t = 0; t < 3; ++t) {
    ScalarVolume vol(g, 1);
    for (std::size_t i = 0; i < g.voxel_count(); ++i) {
      const auto curve = detail::enhancement(static_cast<Tissue>(labels.at(i)), spec.bpe);
      const double base = t == 0 ? curve.pre : (t == 1 ? curve.early : curve.late);
      const double n = spec.intensity_noise > 0.0 ? spec.intensity_noise * noise(rng) : 0.0;
      vol.at(i) = static_cast<float>(std::max(0.0, base + n));
    }
    bundle.timepoints[t] = std::move(vol);
  }

  ph.bundle = std::move(bundle);
  ph.labels = std::move(labels);
  ph.vessel_centerlines = std::move(centerline);
  return ph;
}

template <typename Json>
PhantomSpec phantom_spec_from_json(const Json& j, PhantomSpec s = {}) {
  s.seed = j.value("seed", s.seed);
  if (j.contains("dims")) s.dims = j.at("dims").template get<Index3>();
  s.spacing_mm = j.value("spacing_mm", s.spacing_mm);
  if (j.contains("breast_radius_mm")) s.breast_radius_mm = j.at("breast_radius_mm").template get<std::array<double, 2>>();
  s.gland_fraction = j.value("gland_fraction", s.gland_fraction);
  if (j.contains("tumor_diameter_mm"))
    s.tumor_diameter_mm = j.at("tumor_diameter_mm").template get<std::array<double, 2>>();
  s.vessels_per_breast = j.value("vessels_per_breast", s.vessels_per_breast);
  s.vessel_radius_mm = j.value("vessel_radius_mm", s.vessel_radius_mm);
  if (j.contains("laterality")) s.laterality = parse_laterality(j.at("laterality").template get<std::string>());
  s.bpe = j.value("bpe", s.bpe);
  s.skin_thickness_mm = j.value("skin_thickness_mm", s.skin_thickness_mm);
  s.intensity_noise = j.value("intensity_noise", s.intensity_noise);
  s.validate();
  return s;
}

} // namespace bseg::synth
