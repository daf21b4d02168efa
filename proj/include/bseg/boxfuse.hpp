#pragma once

// Fusion of scored 2D detector boxes (axial and sagittal MIPs) into a 3D tumor
// bounding box, with full-axis / half-axis fallbacks when a plane has no boxes.
//
// Coordinates are mm in the volume box frame (voxel i spans [i*s, (i+1)*s)).
// Axial boxes live in (x, y), sagittal boxes in (y, z).

#include <fstream>
#include <optional>
#include <sstream>

#include "bseg/mip.hpp"

namespace bseg {

struct Box2D {
  std::array<double, 2> min{0.0, 0.0};
  std::array<double, 2> max{0.0, 0.0};

  double center(int axis) const { return 0.5 * (min[axis] + max[axis]); }
  bool operator==(const Box2D&) const = default;
};

struct BoxProposal2D {
  Plane plane = Plane::axial;
  Box2D box;
  double score = 1.0;
  Laterality laterality = Laterality::left;
  std::string case_id;

  void validate() const {
    if (!(box.min[0] < box.max[0]) || !(box.min[1] < box.max[1]))
      throw InvalidArgument("box proposal needs min < max on both axes");
    if (!(score >= 0.0 && score <= 1.0)) throw InvalidArgument("box proposal score must lie in [0,1]");
  }
};

enum class AxisSource { fused, fallback_full_axis, fallback_half_axis };

inline std::string_view to_string(AxisSource s) {
  switch (s) {
  case AxisSource::fused: return "fused";
  case AxisSource::fallback_full_axis: return "fallback_full_axis";
  case AxisSource::fallback_half_axis: return "fallback_half_axis";
  }
  return "?";
}

struct Box3D {
  Vec3 min_mm{0.0, 0.0, 0.0};
  Vec3 max_mm{0.0, 0.0, 0.0};
  std::array<AxisSource, 3> provenance{AxisSource::fused, AxisSource::fused, AxisSource::fused};
  // Set when axial and sagittal y-intervals were both present but disjoint.
  bool low_confidence = false;
  Side side = Side::left;

  /// Voxel membership uses the voxel center.
  bool contains_voxel(const Grid& g, const Index3& v) const {
    for (int a = 0; a < 3; ++a) {
      const double c = g.center_mm(a, v[a]);
      if (c < min_mm[a] || c > max_mm[a]) return false;
    }
    return true;
  }
};

namespace detail {

inline std::optional<Box2D> weighted_edge_average(const std::vector<const BoxProposal2D*>& props) {
  if (props.empty()) return std::nullopt;
  double total = 0.0;
  for (const auto* p : props) total += p->score;
  // All-zero scores carry no ranking information; fall back to a plain mean.
  const bool uniform = !(total > 0.0);
  Box2D out{{0.0, 0.0}, {0.0, 0.0}};
  for (const auto* p : props) {
    const double w = uniform ? 1.0 / static_cast<double>(props.size()) : p->score / total;
    for (int a = 0; a < 2; ++a) {
      out.min[a] += w * p->box.min[a];
      out.max[a] += w * p->box.max[a];
    }
  }
  return out;
}

inline void require_plane(const std::vector<BoxProposal2D>& props, Plane plane) {
  for (const auto& p : props) {
    if (p.plane != plane)
      throw InvalidArgument("expected only " + std::string(to_string(plane)) + " proposals");
    p.validate();
  }
}

} // namespace detail

/// Score-weighted edge average of the axial proposals centered in the diseased half.
inline std::optional<Box2D> fuse_axial(const std::vector<BoxProposal2D>& props, Side side, const Vec3& extent_mm) {
  detail::require_plane(props, Plane::axial);
  const auto [lo, hi] = side_mm_range(side, extent_mm[0]);
  std::vector<const BoxProposal2D*> kept;
  for (const auto& p : props) {
    const double cx = p.box.center(0);
    const bool inside = side == Side::left ? (cx >= lo && cx < hi) : (cx >= lo && cx <= hi);
    if (inside) kept.push_back(&p);
  }
  return detail::weighted_edge_average(kept);
}

inline double interval_overlap(double a_lo, double a_hi, double b_lo, double b_hi) {
  return std::min(a_hi, b_hi) - std::max(a_lo, b_lo);
}

/// Score-weighted edge average of the sagittal proposals whose y-interval
/// overlaps the fused axial box (all of them when there is no axial box).
inline std::optional<Box2D> fuse_sagittal(const std::vector<BoxProposal2D>& props,
                                          const std::optional<Box2D>& axial_box) {
  detail::require_plane(props, Plane::sagittal);
  std::vector<const BoxProposal2D*> kept;
  for (const auto& p : props) {
    if (!axial_box || interval_overlap(p.box.min[0], p.box.max[0], axial_box->min[1], axial_box->max[1]) > 0.0)
      kept.push_back(&p);
  }
  return detail::weighted_edge_average(kept);
}

/// Combines the fused boxes into 3D. y averages both planes when both exist; x
/// comes from the axial box, z from the sagittal box. Missing planes fall back
/// to the whole imaging axis, or to the diseased half along x.
inline Box3D assemble_box3d(const std::optional<Box2D>& axial, const std::optional<Box2D>& sagittal,
                            const Vec3& extent_mm, Side side) {
  Box3D b;
  b.side = side;
  auto full = [&](int a) {
    b.min_mm[a] = 0.0;
    b.max_mm[a] = extent_mm[a];
    b.provenance[a] = AxisSource::fallback_full_axis;
  };
  auto half_x = [&] {
    std::tie(b.min_mm[0], b.max_mm[0]) = side_mm_range(side, extent_mm[0]);
    b.provenance[0] = AxisSource::fallback_half_axis;
  };

  if (axial) {
    b.min_mm[0] = axial->min[0];
    b.max_mm[0] = axial->max[0];
  } else {
    half_x();
  }

  if (axial && sagittal) {
    b.min_mm[1] = 0.5 * (axial->min[1] + sagittal->min[0]);
    b.max_mm[1] = 0.5 * (axial->max[1] + sagittal->max[0]);
    b.low_confidence =
        interval_overlap(axial->min[1], axial->max[1], sagittal->min[0], sagittal->max[0]) <= 0.0;
  } else if (axial) {
    b.min_mm[1] = axial->min[1];
    b.max_mm[1] = axial->max[1];
  } else if (sagittal) {
    b.min_mm[1] = sagittal->min[0];
    b.max_mm[1] = sagittal->max[0];
  } else {
    full(1);
  }

  if (sagittal) {
    b.min_mm[2] = sagittal->min[1];
    b.max_mm[2] = sagittal->max[1];
  } else {
    full(2);
  }

  // Keep the box inside the volume; a detector box entirely off-volume degrades to the fallback.
  for (int a = 0; a < 3; ++a) {
    b.min_mm[a] = std::clamp(b.min_mm[a], 0.0, extent_mm[a]);
    b.max_mm[a] = std::clamp(b.max_mm[a], 0.0, extent_mm[a]);
    if (!(b.min_mm[a] < b.max_mm[a])) {
      if (a == 0)
        half_x();
      else
        full(a);
    }
  }
  return b;
}

/// One box per diseased side. Sagittal proposals are matched to a side by their
/// laterality tag (a bilateral tag matches both).
inline std::vector<Box3D> fuse_case(const std::vector<BoxProposal2D>& props, Laterality laterality,
                                    const Vec3& extent_mm) {
  std::vector<BoxProposal2D> axial;
  for (const auto& p : props)
    if (p.plane == Plane::axial) axial.push_back(p);
  std::vector<Box3D> boxes;
  for (Side s : sides_of(laterality)) {
    std::vector<BoxProposal2D> sagittal;
    for (const auto& p : props) {
      const bool tag_matches = p.laterality == Laterality::bilateral ||
                               (s == Side::left) == (p.laterality == Laterality::left);
      if (p.plane == Plane::sagittal && tag_matches) sagittal.push_back(p);
    }
    const auto ax = fuse_axial(axial, s, extent_mm);
    const auto sg = fuse_sagittal(sagittal, ax);
    boxes.push_back(assemble_box3d(ax, sg, extent_mm, s));
  }
  return boxes;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::ordered_json to_json(const BoxProposal2D& p) {
  nlohmann::ordered_json j;
  j["plane"] = std::string(to_string(p.plane));
  j["bbox_mm"] = {p.box.min[0], p.box.min[1], p.box.max[0], p.box.max[1]};
  j["score"] = p.score;
  j["case_id"] = p.case_id;
  j["laterality"] = std::string(to_string(p.laterality));
  return j;
}

inline BoxProposal2D proposal_from_json(const nlohmann::ordered_json& j) {
  BoxProposal2D p;
  try {
    p.plane = parse_plane(j.at("plane").get<std::string>());
    const auto& bb = j.at("bbox_mm");
    if (bb.size() != 4) throw FormatError("bbox_mm must have four entries");
    p.box.min = {bb[0].get<double>(), bb[1].get<double>()};
    p.box.max = {bb[2].get<double>(), bb[3].get<double>()};
    p.score = j.at("score").get<double>();
    p.case_id = j.value("case_id", std::string{});
    p.laterality = parse_laterality(j.at("laterality").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("proposal: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("proposal: ") + e.what());
  }
  try {
    p.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("proposal: ") + e.what());
  }
  return p;
}

/// Reads a JSON-lines proposal file; blank lines are skipped. When `case_id` is
/// non-empty only matching proposals are returned.
inline std::vector<BoxProposal2D> read_proposals(const fs::path& path, const std::string& case_id = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<BoxProposal2D> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto p = proposal_from_json(nlohmann::ordered_json::parse(line));
      if (case_id.empty() || p.case_id == case_id) out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void write_proposals(const std::vector<BoxProposal2D>& props, const fs::path& path) {
  std::string text;
  for (const auto& p : props) text += to_json(p).dump() + "\n";
  detail::save_text_file(path, text);
}

inline nlohmann::ordered_json to_json(const Box3D& b) {
  nlohmann::ordered_json j;
  j["side"] = std::string(to_string(b.side));
  j["min_mm"] = {b.min_mm[0], b.min_mm[1], b.min_mm[2]};
  j["max_mm"] = {b.max_mm[0], b.max_mm[1], b.max_mm[2]};
  j["provenance"] = {std::string(to_string(b.provenance[0])), std::string(to_string(b.provenance[1])),
                     std::string(to_string(b.provenance[2]))};
  j["low_confidence"] = b.low_confidence;
  return j;
}

} // namespace bseg
