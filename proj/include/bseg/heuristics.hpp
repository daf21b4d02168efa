#pragma once

// Tissue-tissue interaction post-processing: merges the tumor model with the
// multi-tissue model, removes tumor outside the fused detector box and on
// vasculature, drops anatomically implausible components by contact analysis,
// and grows the tumor boundary by hysteresis.

#include <functional>

#include "bseg/boxfuse.hpp"
#include "bseg/components.hpp"
#include "bseg/distance.hpp"

namespace bseg {

struct HeuristicConfig {
  double min_contact_area_mm2 = 64.0;
  double hysteresis_radius_mm = 4.0;
  double hysteresis_low_threshold = 0.25;
  int connectivity = 26;  // component analysis; contact is always face adjacency

  void validate() const {
    if (!(min_contact_area_mm2 > 0.0)) throw InvalidArgument("min_contact_area_mm2 must be positive");
    if (!(hysteresis_radius_mm > 0.0)) throw InvalidArgument("hysteresis_radius_mm must be positive");
    if (!(hysteresis_low_threshold > 0.0 && hysteresis_low_threshold < 1.0))
      throw InvalidArgument("hysteresis_low_threshold must lie in (0,1)");
    if (connectivity != 6 && connectivity != 26) throw InvalidArgument("connectivity must be 6 or 26");
  }
};

inline nlohmann::ordered_json to_json(const HeuristicConfig& c) {
  nlohmann::ordered_json j;
  j["min_contact_area_mm2"] = c.min_contact_area_mm2;
  j["hysteresis_radius_mm"] = c.hysteresis_radius_mm;
  j["hysteresis_low_threshold"] = c.hysteresis_low_threshold;
  j["connectivity"] = c.connectivity;
  return j;
}

template <typename Json>
HeuristicConfig heuristic_config_from_json(const Json& j, HeuristicConfig c = {}) {
  c.min_contact_area_mm2 = j.value("min_contact_area_mm2", c.min_contact_area_mm2);
  c.hysteresis_radius_mm = j.value("hysteresis_radius_mm", c.hysteresis_radius_mm);
  c.hysteresis_low_threshold = j.value("hysteresis_low_threshold", c.hysteresis_low_threshold);
  c.connectivity = j.value("connectivity", c.connectivity);
  c.validate();
  return c;
}

/// One component removed by a heuristic, for the provenance record.
struct DroppedComponent {
  std::uint8_t cls = 0;
  std::string rule;
  std::size_t voxels = 0;
  Index3 first_voxel{};
  double contact_mm2 = 0.0;
};

inline nlohmann::ordered_json to_json(const DroppedComponent& d) {
  nlohmann::ordered_json j;
  j["class"] = std::string(tissue_name(d.cls));
  j["rule"] = d.rule;
  j["voxels"] = d.voxels;
  j["first_voxel"] = {d.first_voxel[0], d.first_voxel[1], d.first_voxel[2]};
  j["contact_mm2"] = d.contact_mm2;
  return j;
}

namespace detail {

constexpr std::size_t kTumor = code(Tissue::tumor);
constexpr std::size_t kVessel = code(Tissue::vasculature);

/// Sets the tumor channel of one voxel to zero and spreads its mass over the
/// other channels in proportion to their current values (to adipose when they
/// are all zero).
inline void zero_tumor_channel(std::span<float> p) {
  double rest = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c)
    if (c != kTumor) rest += p[c];
  p[kTumor] = 0.0f;
  if (rest > 0.0) {
    for (std::size_t c = 0; c < kNumClasses; ++c)
      if (c != kTumor) p[c] = static_cast<float>(p[c] / rest);
  } else {
    p[code(Tissue::adipose)] = 1.0f;
  }
}

inline Index3 first_voxel_of(const ComponentSet& cs, std::size_t id) {
  const auto& g = cs.ids.grid();
  const auto& lo = cs.bboxes[id - 1];
  // Scan from the bbox corner; the first hit in scan order is the component's seed.
  for (std::size_t z = lo[0][2]; z <= lo[1][2]; ++z)
    for (std::size_t y = lo[0][1]; y <= lo[1][1]; ++y)
      for (std::size_t x = lo[0][0]; x <= lo[1][0]; ++x)
        if (cs.ids.at(g.linear(x, y, z)) == static_cast<std::int32_t>(id)) return {x, y, z};
  return lo[0];
}

// Classes a dropped component may be reassigned to. None of them is subject to
// a contact rule, so reassignment never invalidates a rule already applied.
inline constexpr std::array<std::uint8_t, 4> kReassignTargets{
    code(Tissue::adipose), code(Tissue::gland), code(Tissue::vasculature), code(Tissue::chest)};

inline std::uint8_t runner_up(const ProbMap* probs, std::size_t voxel) {
  if (!probs) return code(Tissue::adipose);
  std::uint8_t best = kReassignTargets[0];
  for (auto c : kReassignTargets)
    if (probs->at(voxel, c) > probs->at(voxel, best)) best = c;
  return best;
}

} // namespace detail

/// Replaces the tumor channel with the tumor model's probability and rescales the
/// six other channels to share the remaining mass in their original proportions.
inline ProbMap merge_probabilities(const ProbMap& multi, const ScalarVolume& tumor_prob) {
  require_prob_map(multi);
  if (tumor_prob.channels() != 1) throw InvalidArgument("tumor probability must be a scalar volume");
  require_same_grid(multi, tumor_prob, "merge_probabilities");
  ProbMap out = multi;
  for (std::size_t i = 0; i < multi.voxel_count(); ++i) {
    const float t_in = tumor_prob.at(i);
    if (t_in == multi.at(i, detail::kTumor)) continue;
    const double t = std::clamp(static_cast<double>(t_in), 0.0, 1.0);
    auto p = out.voxel(i);
    double rest = 0.0;
    for (std::size_t c = 0; c < kNumClasses; ++c)
      if (c != detail::kTumor) rest += p[c];
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      if (c == detail::kTumor) continue;
      p[c] = static_cast<float>(rest > 0.0 ? p[c] * (1.0 - t) / rest : (1.0 - t) / 6.0);
    }
    p[detail::kTumor] = static_cast<float>(t);
  }
  return out;
}

/// tumor := max(tumor - vasculature, 0), then renormalize the voxel to sum 1.
inline ProbMap suppress_vasculature(const ProbMap& p) {
  require_prob_map(p);
  ProbMap out = p;
  for (std::size_t i = 0; i < p.voxel_count(); ++i) {
    auto v = out.voxel(i);
    const float t = v[detail::kTumor];
    const float reduced = std::max(t - v[detail::kVessel], 0.0f);
    if (reduced == t) continue;
    v[detail::kTumor] = reduced;
    double sum = 0.0;
    for (float x : v) sum += x;
    for (auto& x : v) x = static_cast<float>(x / sum);
  }
  return out;
}

struct BoxSuppression {
  ProbMap probs;
  std::vector<DroppedComponent> dropped;
};

/// Zeroes tumor probability on every tumor-argmax component that has no voxel
/// (by center) inside any of the boxes. Components touching a box are kept whole.
inline BoxSuppression suppress_outside_box(const ProbMap& p, std::span<const Box3D> boxes, int connectivity = 26) {
  require_prob_map(p);
  const Grid& g = p.grid();
  Mask tumor(g, 1);
  for (std::size_t i = 0; i < g.voxel_count(); ++i)
    tumor.at(i) = argmax_class(p.voxel(i)) == detail::kTumor ? 1 : 0;
  const ComponentSet cs = connected_components(tumor, connectivity);

  std::vector<char> inside(cs.count + 1, 0);
  for (std::size_t i = 0; i < g.voxel_count(); ++i) {
    const auto id = cs.ids.at(i);
    if (id == 0 || inside[id]) continue;
    const Index3 c = g.coords(i);
    for (const auto& b : boxes)
      if (b.contains_voxel(g, c)) {
        inside[id] = 1;
        break;
      }
  }
  BoxSuppression out{p, {}};
  for (std::size_t i = 0; i < g.voxel_count(); ++i) {
    const auto id = cs.ids.at(i);
    if (id != 0 && !inside[id]) detail::zero_tumor_channel(out.probs.voxel(i));
  }
  for (std::size_t id = 1; id <= cs.count; ++id)
    if (!inside[id])
      out.dropped.push_back({code(Tissue::tumor), "outside_box", cs.voxel_counts[id - 1],
                             detail::first_voxel_of(cs, id), 0.0});
  return out;
}

inline BoxSuppression suppress_outside_box(const ProbMap& p, const Box3D& box, int connectivity = 26) {
  return suppress_outside_box(p, std::span<const Box3D>(&box, 1), connectivity);
}

struct ContactRuleResult {
  LabelMap labels;
  std::vector<DroppedComponent> dropped;
};

/// Drops, in order: air components not touching any image face, skin components
/// with no face contact with air, and tumor components whose face contact with
/// gland is below `min_contact_area_mm2`. Each rule sees the result of the
/// previous one. Dropped voxels take the most probable of adipose, gland,
/// vasculature and chest (adipose without probabilities).
inline ContactRuleResult apply_contact_rules(const LabelMap& labels, const HeuristicConfig& cfg,
                                             const ProbMap* probs = nullptr) {
  cfg.validate();
  require_label_map(labels);
  if (probs) {
    require_prob_map(*probs);
    require_same_grid(labels, *probs, "apply_contact_rules");
  }
  ContactRuleResult out{labels, {}};
  auto reassign = [&](const ComponentSet& cs, const std::vector<char>& drop) {
    for (std::size_t i = 0; i < out.labels.voxel_count(); ++i) {
      const auto id = cs.ids.at(i);
      if (id != 0 && drop[id]) out.labels.at(i) = detail::runner_up(probs, i);
    }
  };

  {
    const auto cs = class_components(out.labels, code(Tissue::air), cfg.connectivity);
    std::vector<char> drop(cs.count + 1, 0);
    for (std::size_t id = 1; id <= cs.count; ++id)
      if (!cs.touches_image_face(id)) {
        drop[id] = 1;
        out.dropped.push_back({code(Tissue::air), "air_not_touching_image_edge", cs.voxel_counts[id - 1],
                               detail::first_voxel_of(cs, id), 0.0});
      }
    reassign(cs, drop);
  }
  {
    const auto ca = contact_area(out.labels, code(Tissue::skin), code(Tissue::air), cfg.connectivity);
    std::vector<char> drop(ca.components.count + 1, 0);
    for (std::size_t id = 1; id <= ca.components.count; ++id)
      if (ca.area_mm2[id - 1] <= 0.0) {
        drop[id] = 1;
        out.dropped.push_back({code(Tissue::skin), "skin_not_touching_air", ca.components.voxel_counts[id - 1],
                               detail::first_voxel_of(ca.components, id), 0.0});
      }
    reassign(ca.components, drop);
  }
  {
    const auto ca = contact_area(out.labels, code(Tissue::tumor), code(Tissue::gland), cfg.connectivity);
    std::vector<char> drop(ca.components.count + 1, 0);
    for (std::size_t id = 1; id <= ca.components.count; ++id)
      if (ca.area_mm2[id - 1] < cfg.min_contact_area_mm2) {
        drop[id] = 1;
        out.dropped.push_back({code(Tissue::tumor), "tumor_gland_contact_below_minimum",
                               ca.components.voxel_counts[id - 1], detail::first_voxel_of(ca.components, id),
                               ca.area_mm2[id - 1]});
      }
    reassign(ca.components, drop);
  }
  return out;
}

/// Seed voxels plus every voxel within `hysteresis_radius_mm` (Euclidean, voxel
/// centers) of a seed whose tumor probability is at least the low threshold.
/// Seeds default to the voxels where tumor is the argmax class.
inline Mask hysteresis_tumor(const ProbMap& p, const HeuristicConfig& cfg, const Mask* seeds = nullptr) {
  cfg.validate();
  require_prob_map(p);
  Mask seed_mask(p.grid(), 1);
  if (seeds) {
    require_same_grid(p, *seeds, "hysteresis_tumor");
    seed_mask = *seeds;
  } else {
    for (std::size_t i = 0; i < p.voxel_count(); ++i)
      seed_mask.at(i) = argmax_class(p.voxel(i)) == detail::kTumor ? 1 : 0;
  }
  Mask out = seed_mask;
  if (std::none_of(seed_mask.data().begin(), seed_mask.data().end(), [](auto v) { return v != 0; })) return out;
  const auto d2 = squared_distance_transform(seed_mask);
  const double r2 = cfg.hysteresis_radius_mm * cfg.hysteresis_radius_mm * (1.0 + 1e-12);
  for (std::size_t i = 0; i < p.voxel_count(); ++i)
    if (!out.at(i) && d2.at(i) <= r2 && p.at(i, detail::kTumor) >= cfg.hysteresis_low_threshold) out.at(i) = 1;
  return out;
}

struct HeuristicsProvenance {
  std::vector<Box3D> boxes;
  std::vector<DroppedComponent> box_suppressed;
  std::vector<DroppedComponent> contact_dropped;
  std::size_t hysteresis_added_voxels = 0;
  std::vector<DroppedComponent> final_pass_dropped;
};

inline nlohmann::ordered_json to_json(const HeuristicsProvenance& p) {
  auto list = [](const std::vector<DroppedComponent>& v) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (const auto& d : v) a.push_back(to_json(d));
    return a;
  };
  nlohmann::ordered_json j;
  j["boxes"] = nlohmann::ordered_json::array();
  for (const auto& b : p.boxes) j["boxes"].push_back(to_json(b));
  j["box_suppressed_components"] = list(p.box_suppressed);
  j["contact_rule_drops"] = list(p.contact_dropped);
  j["hysteresis_added_voxels"] = p.hysteresis_added_voxels;
  j["final_pass_drops"] = list(p.final_pass_dropped);
  return j;
}

struct HeuristicsResult {
  LabelMap labels;
  ProbMap probs;     // after vasculature suppression
  Mask tumor_mask;   // hysteresis output before the final contact pass
  HeuristicsProvenance provenance;
};

/// Called with each intermediate probability map: "merged", "box_suppressed", "vessel_suppressed".
using StageObserver = std::function<void(std::string_view stage, const ProbMap&)>;

/// Full post-processing chain:
///   merge -> box suppression -> vasculature suppression -> argmax
///   -> contact rules -> hysteresis (seeded by the surviving tumor)
///   -> tumor mask overrides labels -> contact rules once more.
/// The last pass re-checks contacts that hysteresis growth may have changed.
inline HeuristicsResult run_heuristics(const ProbMap& multi, const ScalarVolume& tumor_prob,
                                       std::span<const Box3D> boxes, const HeuristicConfig& cfg,
                                       const StageObserver& observe = {}) {
  cfg.validate();
  HeuristicsResult r;
  r.provenance.boxes.assign(boxes.begin(), boxes.end());

  ProbMap merged = merge_probabilities(multi, tumor_prob);
  if (observe) observe("merged", merged);
  auto boxed = suppress_outside_box(merged, boxes, cfg.connectivity);
  if (observe) observe("box_suppressed", boxed.probs);
  r.provenance.box_suppressed = std::move(boxed.dropped);
  r.probs = suppress_vasculature(boxed.probs);
  if (observe) observe("vessel_suppressed", r.probs);

  auto rules = apply_contact_rules(argmax_labels(r.probs), cfg, &r.probs);
  r.provenance.contact_dropped = std::move(rules.dropped);

  const Mask seeds = class_mask(rules.labels, code(Tissue::tumor));
  r.tumor_mask = hysteresis_tumor(r.probs, cfg, &seeds);
  LabelMap grown = rules.labels;
  for (std::size_t i = 0; i < grown.voxel_count(); ++i) {
    if (r.tumor_mask.at(i) && grown.at(i) != code(Tissue::tumor)) {
      grown.at(i) = code(Tissue::tumor);
      ++r.provenance.hysteresis_added_voxels;
    }
  }
  auto final_pass = apply_contact_rules(grown, cfg, &r.probs);
  r.provenance.final_pass_dropped = std::move(final_pass.dropped);
  r.labels = std::move(final_pass.labels);
  return r;
}

inline HeuristicsResult run_heuristics(const ProbMap& multi, const ScalarVolume& tumor_prob, const Box3D& box,
                                       const HeuristicConfig& cfg, const StageObserver& observe = {}) {
  return run_heuristics(multi, tumor_prob, std::span<const Box3D>(&box, 1), cfg, observe);
}

} // namespace bseg
