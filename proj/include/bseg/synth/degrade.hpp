#pragma once

// Stand-ins for the neural models: turns a ground-truth LabelMap into
// multi-tissue logits/probabilities, a tumor probability volume and detector box
// proposals, with controllable error modes.

#include <random>

#include "bseg/boxfuse.hpp"
#include "bseg/calib.hpp"
#include "bseg/components.hpp"
#include "bseg/distance.hpp"

namespace bseg::synth {

struct DegradationSpec {
  std::uint64_t seed = 0;
  double label_noise_sigma = 0.0;    // iid logit noise
  double label_smoothing = 0.0;      // probability mass moved off the true class before noise
  std::size_t fp_blob_count = 0;     // spurious tumor balls placed away from the true tumor
  double fp_blob_diameter_mm = 6.0;
  double vessel_leak_fraction = 0.0;  // share of vessel components painted with tumor probability
  double tumor_rim_mm = 0.0;          // under-segmented rim where gland outranks tumor
  double detector_jitter_mm = 0.0;    // std. dev. of each proposal edge
  double miss_probability = 0.0;      // chance each proposal is dropped
  int proposals_per_plane = 2;

  void validate() const {
    if (label_noise_sigma < 0.0 || fp_blob_diameter_mm <= 0.0 || tumor_rim_mm < 0.0 || detector_jitter_mm < 0.0)
      throw InvalidArgument("degradation magnitudes must be non-negative");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0) throw InvalidArgument("label smoothing must lie in [0,1)");
    if (vessel_leak_fraction < 0.0 || vessel_leak_fraction > 1.0)
      throw InvalidArgument("vessel leak fraction must lie in [0,1]");
    if (miss_probability < 0.0 || miss_probability > 1.0) throw InvalidArgument("miss probability must lie in [0,1]");
    if (proposals_per_plane < 0) throw InvalidArgument("proposals per plane must be non-negative");
  }
};

struct ModelOutputs {
  LogitMap logits;         // multi-tissue network before tumor-specific error injection
  ProbMap multi;           // multi-tissue probabilities
  ScalarVolume tumor_prob; // tumor network probability
  std::vector<BoxProposal2D> proposals;
  std::vector<Index3> fp_blob_centers;
};

namespace detail {

/// Sets the tumor channel to `t` and rescales the rest to 1 - t in proportion.
inline void paint_tumor(std::span<float> p, double t) {
  constexpr std::size_t k = code(Tissue::tumor);
  double rest = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c)
    if (c != k) rest += p[c];
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (c == k) continue;
    p[c] = rest > 0.0 ? static_cast<float>(p[c] * (1.0 - t) / rest) : 0.0f;
  }
  if (!(rest > 0.0)) p[code(Tissue::adipose)] = static_cast<float>(1.0 - t);
  p[k] = static_cast<float>(t);
}

inline void set_probs(std::span<float> p, std::initializer_list<std::pair<Tissue, float>> values) {
  std::fill(p.begin(), p.end(), 0.0f);
  for (const auto& [t, v] : values) p[code(t)] = v;
}

} // namespace detail

/// Degrades a ground truth into model outputs. Deterministic in `d.seed`.
inline ModelOutputs simulate_model_outputs(const LabelMap& gt, const DegradationSpec& d,
                                           const std::string& case_id = {}) {
  d.validate();
  require_label_map(gt);
  std::mt19937_64 rng(d.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Grid& g = gt.grid();
  const auto& dims = g.dims;

  ModelOutputs out;
  const bool exact = d.label_noise_sigma == 0.0 && d.label_smoothing == 0.0;
  // Gap between the true-class logit and the rest so the clean softmax puts
  // 1 - smoothing on the true class.
  const double gap = exact ? 20.0 : std::log(6.0 * (1.0 - d.label_smoothing) / d.label_smoothing);
  out.logits = LogitMap(g, kNumClasses, 0.0f);
  for (std::size_t i = 0; i < g.voxel_count(); ++i) {
    auto l = out.logits.voxel(i);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      double v = c == gt.at(i) ? gap : 0.0;
      if (d.label_noise_sigma > 0.0) v += d.label_noise_sigma * normal(rng);
      l[c] = static_cast<float>(v);
    }
  }
  out.multi = exact ? one_hot(gt) : softmax_with_temperature(out.logits, 1.0);

  const auto tumor_cs = class_components(gt, code(Tissue::tumor));

  // Under-segmented rim: gland outranks tumor within tumor_rim_mm of the boundary.
  if (d.tumor_rim_mm > 0.0 && tumor_cs.count > 0) {
    Mask outside(g, 1);
    for (std::size_t i = 0; i < g.voxel_count(); ++i) outside.at(i) = gt.at(i) != code(Tissue::tumor);
    const auto d2 = squared_distance_transform(outside);
    const double r2 = d.tumor_rim_mm * d.tumor_rim_mm + 1e-9;
    for (std::size_t i = 0; i < g.voxel_count(); ++i)
      if (!outside.at(i) && d2.at(i) <= r2)
        detail::set_probs(out.multi.voxel(i),
                          {{Tissue::gland, 0.55f}, {Tissue::tumor, 0.40f}, {Tissue::adipose, 0.05f}});
  }

  // Tumor probability leaking onto whole vessel components.
  if (d.vessel_leak_fraction > 0.0) {
    const auto vcs = class_components(gt, code(Tissue::vasculature));
    std::vector<std::size_t> order(vcs.count);
    for (std::size_t i = 0; i < vcs.count; ++i) order[i] = i + 1;
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_leak = static_cast<std::size_t>(std::ceil(d.vessel_leak_fraction * static_cast<double>(vcs.count)));
    std::vector<char> leak(vcs.count + 1, 0);
    for (std::size_t k = 0; k < std::min(n_leak, order.size()); ++k) leak[order[k]] = 1;
    for (std::size_t i = 0; i < g.voxel_count(); ++i) {
      const auto id = vcs.ids.at(i);
      if (id != 0 && leak[id])
        detail::set_probs(out.multi.voxel(i),
                          {{Tissue::tumor, 0.50f}, {Tissue::vasculature, 0.45f}, {Tissue::adipose, 0.05f}});
    }
  }

  // Spurious tumor blobs: fully inside the body, clear of vessels, of each other,
  // and of the true tumor's bounding box widened by the detector error margin.
  if (d.fp_blob_count > 0) {
    const double r = d.fp_blob_diameter_mm / 2.0 / g.spacing_mm[0];
    const auto span = static_cast<long>(std::ceil(r)) + 1;
    const double margin = (4.0 * d.detector_jitter_mm + 3.0) / g.spacing_mm[0];
    std::vector<std::array<double, 6>> exclusion;
    for (const auto& [lo, hi] : tumor_cs.bboxes)
      exclusion.push_back({lo[0] - margin, lo[1] - margin, lo[2] - margin, hi[0] + margin, hi[1] + margin,
                           hi[2] + margin});
    std::vector<std::uniform_int_distribution<long>> pick;
    for (int a = 0; a < 3; ++a) pick.emplace_back(span, static_cast<long>(dims[a]) - 1 - span);
    if (pick[0].a() > pick[0].b() || pick[1].a() > pick[1].b() || pick[2].a() > pick[2].b())
      throw InvalidArgument("volume too small for false-positive blobs");

    std::size_t tries = 0;
    while (out.fp_blob_centers.size() < d.fp_blob_count) {
      if (++tries > 200000) throw InvalidArgument("could not place the requested false-positive blobs");
      const Index3 c{static_cast<std::size_t>(pick[0](rng)), static_cast<std::size_t>(pick[1](rng)),
                     static_cast<std::size_t>(pick[2](rng))};
      bool ok = true;
      for (const auto& e : exclusion)
        if (c[0] + span >= e[0] && c[0] - span <= e[3] && c[1] + span >= e[1] && c[1] - span <= e[4] &&
            c[2] + span >= e[2] && c[2] - span <= e[5])
          ok = false;
      for (const auto& o : out.fp_blob_centers) {
        double dd = 0.0;
        for (int a = 0; a < 3; ++a) dd += std::pow(double(o[a]) - double(c[a]), 2);
        if (std::sqrt(dd) < 2.0 * r + 3.0) ok = false;
      }
      for (long dz = -span; ok && dz <= span; ++dz)
        for (long dy = -span; ok && dy <= span; ++dy)
          for (long dx = -span; ok && dx <= span; ++dx) {
            const auto lab = gt(c[0] + dx, c[1] + dy, c[2] + dz);
            const double q = std::sqrt(double(dx * dx + dy * dy + dz * dz));
            if (lab == code(Tissue::vasculature) || lab == code(Tissue::tumor)) ok = false;
            if (q <= r && lab == code(Tissue::air)) ok = false;
          }
      if (!ok) continue;
      out.fp_blob_centers.push_back(c);
      for (long dz = -span; dz <= span; ++dz)
        for (long dy = -span; dy <= span; ++dy)
          for (long dx = -span; dx <= span; ++dx)
            if (std::sqrt(double(dx * dx + dy * dy + dz * dz)) <= r)
              detail::paint_tumor(out.multi.voxel(g.linear(c[0] + dx, c[1] + dy, c[2] + dz)), 0.9);
    }
  }

  out.tumor_prob = extract_channel(out.multi, code(Tissue::tumor));

  // Detector proposals: projections of each true tumor component, jittered.
  const Vec3 ext = g.extent_mm();
  for (std::size_t id = 1; id <= tumor_cs.count; ++id) {
    const auto& [lo, hi] = tumor_cs.bboxes[id - 1];
    const double cx = 0.5 * (g.center_mm(0, lo[0]) + g.center_mm(0, hi[0]));
    const Laterality tag = cx < ext[0] / 2.0 ? Laterality::left : Laterality::right;
    Vec3 bmin, bmax;
    for (int a = 0; a < 3; ++a) {
      bmin[a] = static_cast<double>(lo[a]) * g.spacing_mm[a];
      bmax[a] = static_cast<double>(hi[a] + 1) * g.spacing_mm[a];
    }
    for (Plane plane : {Plane::axial, Plane::sagittal}) {
      const int a0 = plane == Plane::axial ? 0 : 1, a1 = plane == Plane::axial ? 1 : 2;
      for (int k = 0; k < d.proposals_per_plane; ++k) {
        const bool missed = unit(rng) < d.miss_probability;
        std::array<double, 4> e{bmin[a0], bmin[a1], bmax[a0], bmax[a1]};
        for (auto& v : e) v += d.detector_jitter_mm * normal(rng);
        const double score = 0.5 + 0.5 * unit(rng);
        if (missed) continue;
        BoxProposal2D p;
        p.plane = plane;
        p.box.min = {std::clamp(std::min(e[0], e[2]), 0.0, ext[a0]), std::clamp(std::min(e[1], e[3]), 0.0, ext[a1])};
        p.box.max = {std::clamp(std::max(e[0], e[2]), 0.0, ext[a0]), std::clamp(std::max(e[1], e[3]), 0.0, ext[a1])};
        if (!(p.box.min[0] < p.box.max[0]) || !(p.box.min[1] < p.box.max[1])) continue;
        p.score = score;
        p.laterality = tag;
        p.case_id = case_id;
        out.proposals.push_back(p);
      }
    }
  }
  return out;
}

template <typename Json>
DegradationSpec degradation_spec_from_json(const Json& j, DegradationSpec s = {}) {
  s.seed = j.value("seed", s.seed);
  s.label_noise_sigma = j.value("label_noise_sigma", s.label_noise_sigma);
  s.label_smoothing = j.value("label_smoothing", s.label_smoothing);
  s.fp_blob_count = j.value("fp_blob_count", s.fp_blob_count);
  s.fp_blob_diameter_mm = j.value("fp_blob_diameter_mm", s.fp_blob_diameter_mm);
  s.vessel_leak_fraction = j.value("vessel_leak_fraction", s.vessel_leak_fraction);
  s.tumor_rim_mm = j.value("tumor_rim_mm", s.tumor_rim_mm);
  s.detector_jitter_mm = j.value("detector_jitter_mm", s.detector_jitter_mm);
  s.miss_probability = j.value("miss_probability", s.miss_probability);
  s.proposals_per_plane = j.value("proposals_per_plane", s.proposals_per_plane);
  s.validate();
  return s;
}

} // namespace bseg::synth
