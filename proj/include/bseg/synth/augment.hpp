#pragma once

// Training-time augmentations applied to a (bundle, labels) pair. Geometric
// transforms resample intensities trilinearly and labels by nearest neighbor;
// everything outside the source volume reads as zero (air).

#include <optional>
#include <random>

#include "bseg/case_bundle.hpp"

namespace bseg::synth {

struct MultiplicativeNoise {
  double sigma = 0.1;            // std. dev. of the gain field around 1
  double correlation_mm = 16.0;  // control-point spacing of the field
};

struct Rotation {
  int axis = 2;  // rotation axis (0 = x, 1 = y, 2 = z)
  double degrees = 0.0;
};

struct Elastic {
  double sigma_mm = 2.0;             // std. dev. of each control-point displacement
  double control_spacing_mm = 24.0;
  double max_displacement_mm = 8.0;  // hard cap; exceeding it is an error
};

struct Drift {
  double amplitude = 10.0;  // intensity change from the volume center to a face
};

/// Each engaged field enables one augmentation. A spec with nothing engaged is
/// the identity.
struct AugmentSpec {
  std::uint64_t seed = 0;
  std::optional<double> additive_noise_sigma;
  std::optional<MultiplicativeNoise> multiplicative_noise;
  std::optional<Rotation> rotation;
  std::optional<double> scale;
  std::optional<Elastic> elastic;
  std::optional<Drift> drift;

  bool is_identity() const {
    return !additive_noise_sigma && !multiplicative_noise && !rotation && !scale && !elastic && !drift;
  }
  bool is_geometric() const { return rotation || scale || elastic; }

  void validate() const {
    if (additive_noise_sigma && *additive_noise_sigma < 0.0) throw InvalidArgument("noise sigma must be non-negative");
    if (multiplicative_noise &&
        (multiplicative_noise->sigma < 0.0 || !(multiplicative_noise->correlation_mm > 0.0)))
      throw InvalidArgument("multiplicative noise needs sigma >= 0 and a positive correlation length");
    if (rotation && (rotation->axis < 0 || rotation->axis > 2)) throw InvalidArgument("rotation axis must be 0, 1 or 2");
    if (scale && !(*scale > 0.0)) throw InvalidArgument("scale factor must be positive");
    if (elastic && (elastic->sigma_mm < 0.0 || !(elastic->control_spacing_mm > 0.0) ||
                    !(elastic->max_displacement_mm > 0.0)))
      throw InvalidArgument("elastic deformation needs sigma >= 0 and positive spacing and cap");
  }
};

namespace detail {

/// Gaussian values on a coarse control lattice, read back by trilinear
/// interpolation. Lattice point k sits at k * spacing mm in the box frame.
class ControlField {
public:
  ControlField(const Grid& g, double spacing_mm, double sigma, std::mt19937_64& rng) : spacing_(spacing_mm) {
    const Vec3 ext = g.extent_mm();
    for (int a = 0; a < 3; ++a) n_[a] = static_cast<std::size_t>(std::floor(ext[a] / spacing_mm)) + 2;
    std::normal_distribution<double> normal(0.0, sigma);
    values_.resize(n_[0] * n_[1] * n_[2]);
    for (auto& v : values_) v = normal(rng);
  }

  double operator()(const Vec3& p) const {
    std::array<std::size_t, 3> i0;
    std::array<double, 3> f;
    for (int a = 0; a < 3; ++a) {
      const double u = std::clamp(p[a] / spacing_, 0.0, static_cast<double>(n_[a] - 1));
      i0[a] = std::min(static_cast<std::size_t>(u), n_[a] - 2);
      f[a] = u - static_cast<double>(i0[a]);
    }
    double acc = 0.0;
    for (int corner = 0; corner < 8; ++corner) {
      double w = 1.0;
      std::size_t idx[3];
      for (int a = 0; a < 3; ++a) {
        const int bit = (corner >> a) & 1;
        w *= bit ? f[a] : 1.0 - f[a];
        idx[a] = i0[a] + bit;
      }
      if (w != 0.0) acc += w * values_[(idx[2] * n_[1] + idx[1]) * n_[0] + idx[0]];
    }
    return acc;
  }

private:
  double spacing_;
  std::array<std::size_t, 3> n_{};
  std::vector<double> values_;
};

using Mat3 = std::array<std::array<double, 3>, 3>;

inline double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < 1e-12 ? r : v;
}

/// Rotation about one axis. Quarter turns come out with exact 0/±1 entries so
/// they permute voxel centers without interpolation.
inline Mat3 rotation_matrix(int axis, double degrees) {
  const double t = degrees * std::acos(-1.0) / 180.0;
  const double c = snap(std::cos(t)), s = snap(std::sin(t));
  const int a = (axis + 1) % 3, b = (axis + 2) % 3;
  Mat3 r{};
  r[axis][axis] = 1.0;
  r[a][a] = c;
  r[a][b] = -s;
  r[b][a] = s;
  r[b][b] = c;
  return r;
}

inline float sample_trilinear(const ScalarVolume& v, const Vec3& q) {
  const Grid& g = v.grid();
  std::array<std::size_t, 3> i0;
  std::array<double, 3> f;
  for (int a = 0; a < 3; ++a) {
    const double u = q[a] / g.spacing_mm[a] - 0.5;
    const double n = static_cast<double>(g.dims[a]);
    if (u < -0.5 || u > n - 0.5) return 0.0f;
    const double c = std::clamp(u, 0.0, n - 1.0);
    i0[a] = std::min(static_cast<std::size_t>(c), g.dims[a] > 1 ? g.dims[a] - 2 : 0);
    f[a] = g.dims[a] > 1 ? c - static_cast<double>(i0[a]) : 0.0;
  }
  double acc = 0.0;
  for (int corner = 0; corner < 8; ++corner) {
    double w = 1.0;
    std::size_t idx[3];
    for (int a = 0; a < 3; ++a) {
      const int bit = (corner >> a) & 1;
      w *= bit ? f[a] : 1.0 - f[a];
      idx[a] = i0[a] + bit;
    }
    if (w != 0.0) acc += w * v(idx[0], idx[1], idx[2]);
  }
  return static_cast<float>(acc);
}

inline std::uint8_t sample_nearest(const LabelMap& v, const Vec3& q) {
  const Grid& g = v.grid();
  std::size_t idx[3];
  for (int a = 0; a < 3; ++a) {
    const double u = std::floor(q[a] / g.spacing_mm[a]);
    if (u < 0.0 || u >= static_cast<double>(g.dims[a])) return 0;
    idx[a] = static_cast<std::size_t>(u);
  }
  return v(idx[0], idx[1], idx[2]);
}

/// Backward map from output voxel centers to source positions (mm), applied
/// about the volume center: q = c + R^T (p - c) / scale + u(p).
inline std::vector<Vec3> source_positions(const Grid& g, const AugmentSpec& a, std::mt19937_64& rng) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i) r[i][i] = 1.0;
  if (a.rotation) r = rotation_matrix(a.rotation->axis, a.rotation->degrees);
  const double inv_scale = a.scale ? 1.0 / *a.scale : 1.0;
  const Vec3 ext = g.extent_mm();
  const Vec3 c{ext[0] / 2.0, ext[1] / 2.0, ext[2] / 2.0};

  std::optional<std::array<ControlField, 3>> field;
  if (a.elastic)
    field.emplace(std::array<ControlField, 3>{ControlField(g, a.elastic->control_spacing_mm, a.elastic->sigma_mm, rng),
                                              ControlField(g, a.elastic->control_spacing_mm, a.elastic->sigma_mm, rng),
                                              ControlField(g, a.elastic->control_spacing_mm, a.elastic->sigma_mm, rng)});

  std::vector<Vec3> out(g.voxel_count());
  std::vector<Vec3> disp;
  if (field) disp.resize(g.voxel_count());
  for (std::size_t i = 0; i < g.voxel_count(); ++i) {
    const Index3 v = g.coords(i);
    const Vec3 p{g.center_mm(0, v[0]), g.center_mm(1, v[1]), g.center_mm(2, v[2])};
    Vec3 q;
    for (int row = 0; row < 3; ++row) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += r[k][row] * (p[k] - c[k]);  // R^T
      q[row] = c[row] + acc * inv_scale;
    }
    if (field) {
      for (int k = 0; k < 3; ++k) disp[i][k] = (*field)[k](p);
      const double mag = std::sqrt(disp[i][0] * disp[i][0] + disp[i][1] * disp[i][1] + disp[i][2] * disp[i][2]);
      if (mag > a.elastic->max_displacement_mm)
        throw InvalidArgument("elastic displacement exceeds the configured cap");
      for (int k = 0; k < 3; ++k) q[k] += disp[i][k];
    }
    out[i] = q;
  }

  // Folding check: the displacement Jacobian det(I + du/dp) must stay positive.
  if (field) {
    const auto& d = g.dims;
    for (std::size_t i = 0; i < g.voxel_count(); ++i) {
      const Index3 v = g.coords(i);
      Mat3 j{};
      for (int k = 0; k < 3; ++k) {
        const std::size_t lo = v[k] > 0 ? v[k] - 1 : v[k], hi = v[k] + 1 < d[k] ? v[k] + 1 : v[k];
        if (lo == hi) {
          j[0][k] = j[1][k] = j[2][k] = 0.0;
        } else {
          Index3 a0 = v, a1 = v;
          a0[k] = lo;
          a1[k] = hi;
          const auto& u0 = disp[g.linear(a0[0], a0[1], a0[2])];
          const auto& u1 = disp[g.linear(a1[0], a1[1], a1[2])];
          const double h = static_cast<double>(hi - lo) * g.spacing_mm[k];
          for (int m = 0; m < 3; ++m) j[m][k] = (u1[m] - u0[m]) / h;
        }
        j[k][k] += 1.0;
      }
      const double det = j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1]) -
                         j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0]) +
                         j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]);
      if (!(det > 0.0)) throw InvalidArgument("elastic deformation folds the volume");
    }
  }
  return out;
}

} // namespace detail

struct AugmentedPair {
  CaseBundle bundle;
  LabelMap labels;
};

/// Applies the engaged augmentations in a fixed order: geometric transform,
/// multiplicative gain field, drift, additive noise. Deterministic in `a.seed`.
inline AugmentedPair augment(const CaseBundle& bundle, const LabelMap& gt, const AugmentSpec& a) {
  a.validate();
  bundle.require_same_grid();
  require_same_grid(bundle[Timepoint::pre], gt, "augment");
  AugmentedPair out{bundle, gt};
  if (a.is_identity()) return out;

  const Grid& g = gt.grid();
  std::mt19937_64 rng(a.seed);

  if (a.is_geometric()) {
    const auto src = detail::source_positions(g, a, rng);
    for (std::size_t i = 0; i < g.voxel_count(); ++i) out.labels.at(i) = detail::sample_nearest(gt, src[i]);
    for (int t = 0; t < 3; ++t)
      for (std::size_t i = 0; i < g.voxel_count(); ++i)
        out.bundle.timepoints[t].at(i) = detail::sample_trilinear(bundle.timepoints[t], src[i]);
  }

  if (a.multiplicative_noise) {
    const detail::ControlField gain(g, a.multiplicative_noise->correlation_mm, a.multiplicative_noise->sigma, rng);
    for (std::size_t i = 0; i < g.voxel_count(); ++i) {
      const Index3 v = g.coords(i);
      const double m = 1.0 + gain({g.center_mm(0, v[0]), g.center_mm(1, v[1]), g.center_mm(2, v[2])});
      for (auto& tp : out.bundle.timepoints) tp.at(i) = static_cast<float>(tp.at(i) * m);
    }
  }

  if (a.drift) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec3 dir{};
    double norm = 0.0;
    while (norm < 1e-6) {
      for (auto& c : dir) c = normal(rng);
      norm = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
    }
    const Vec3 ext = g.extent_mm();
    for (std::size_t i = 0; i < g.voxel_count(); ++i) {
      const Index3 v = g.coords(i);
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += dir[k] / norm * (g.center_mm(k, v[k]) - ext[k] / 2.0) / (ext[k] / 2.0);
      for (auto& tp : out.bundle.timepoints) tp.at(i) = static_cast<float>(tp.at(i) + a.drift->amplitude * s);
    }
  }

  if (a.additive_noise_sigma && *a.additive_noise_sigma > 0.0) {
    std::normal_distribution<double> normal(0.0, *a.additive_noise_sigma);
    for (auto& tp : out.bundle.timepoints)
      for (std::size_t i = 0; i < g.voxel_count(); ++i) tp.at(i) = static_cast<float>(tp.at(i) + normal(rng));
  }
  return out;
}

/// Ranges for random_augment_spec. These defaults are conservative guesses.
struct AugmentRanges {
  double apply_probability = 0.5;
  std::array<double, 2> additive_noise_sigma{1.0, 5.0};
  std::array<double, 2> multiplicative_sigma{0.02, 0.1};
  double multiplicative_correlation_mm = 16.0;
  double max_rotation_degrees = 15.0;
  std::array<double, 2> scale{0.9, 1.1};
  Elastic elastic{};
  std::array<double, 2> drift_amplitude{-10.0, 10.0};
};

/// Draws a spec with a non-empty random subset of the six augmentations.
inline AugmentSpec random_augment_spec(std::uint64_t seed, const AugmentRanges& r = {}) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto in = [&](const std::array<double, 2>& lim) { return lim[0] + (lim[1] - lim[0]) * unit(rng); };
  std::array<bool, 6> on{};
  while (std::none_of(on.begin(), on.end(), [](bool b) { return b; }))
    for (auto& b : on) b = unit(rng) < r.apply_probability;

  AugmentSpec a;
  a.seed = rng();
  if (on[0]) a.additive_noise_sigma = in(r.additive_noise_sigma);
  if (on[1]) a.multiplicative_noise = MultiplicativeNoise{in(r.multiplicative_sigma), r.multiplicative_correlation_mm};
  if (on[2]) {
    const int axis = static_cast<int>(std::min(2.0, std::floor(3.0 * unit(rng))));
    a.rotation = Rotation{axis, in({-r.max_rotation_degrees, r.max_rotation_degrees})};
  }
  if (on[3]) a.scale = in(r.scale);
  if (on[4]) a.elastic = r.elastic;
  if (on[5]) a.drift = Drift{in(r.drift_amplitude)};
  return a;
}

} // namespace bseg::synth
