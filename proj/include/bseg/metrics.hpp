#pragma once

#include <cstdio>
#include <optional>

#include <json.hpp>

#include "bseg/components.hpp"
#include "bseg/distance.hpp"

namespace bseg {

/// 100 * 2|P & G| / (|P| + |G|); 100 when both are empty.
inline double dice(const LabelMap& pred, const LabelMap& gt, std::uint8_t cls) {
  require_same_grid(pred, gt, "dice");
  std::size_t p = 0, g = 0, both = 0;
  for (std::size_t i = 0; i < pred.voxel_count(); ++i) {
    const bool a = pred.at(i) == cls, b = gt.at(i) == cls;
    p += a;
    g += b;
    both += a && b;
  }
  if (p + g == 0) return 100.0;
  return 100.0 * 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

/// Voxels of the mask with at least one face neighbor outside it. Neighbors
/// beyond the image border count as outside.
inline Mask surface_voxels(const Mask& m) {
  const Grid& g = m.grid();
  const auto& d = g.dims;
  Mask s(g, 1);
  for (std::size_t z = 0; z < d[2]; ++z)
    for (std::size_t y = 0; y < d[1]; ++y)
      for (std::size_t x = 0; x < d[0]; ++x) {
        if (!m(x, y, z)) continue;
        const bool border = x == 0 || y == 0 || z == 0 || x + 1 == d[0] || y + 1 == d[1] || z + 1 == d[2];
        const bool edge = border || !m(x - 1, y, z) || !m(x + 1, y, z) || !m(x, y - 1, z) || !m(x, y + 1, z) ||
                          !m(x, y, z - 1) || !m(x, y, z + 1);
        if (edge) s(x, y, z) = 1;
      }
  return s;
}

/// Pooled symmetric surface distances (mm): for every surface voxel of either
/// mask, the distance to the nearest surface voxel of the other.
inline std::vector<double> symmetric_surface_distances(const Mask& a, const Mask& b) {
  require_same_grid(a, b, "surface distance");
  const Mask sa = surface_voxels(a), sb = surface_voxels(b);
  const bool a_empty = std::none_of(sa.data().begin(), sa.data().end(), [](auto v) { return v != 0; });
  const bool b_empty = std::none_of(sb.data().begin(), sb.data().end(), [](auto v) { return v != 0; });
  if (a_empty || b_empty) throw UndefinedResult("surface distance undefined for an empty mask");
  const auto da = squared_distance_transform(sa), db = squared_distance_transform(sb);
  std::vector<double> out;
  for (std::size_t i = 0; i < sa.voxel_count(); ++i) {
    if (sa.at(i)) out.push_back(std::sqrt(db.at(i)));
    if (sb.at(i)) out.push_back(std::sqrt(da.at(i)));
  }
  return out;
}

/// Linear-interpolated percentile (0..100) of a sample, as numpy's default.
inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw UndefinedResult("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

/// Robust Hausdorff distance: the `q`-th percentile of the pooled symmetric
/// surface distances. Throws UndefinedResult if either mask lacks the class.
inline double robust_hausdorff(const LabelMap& pred, const LabelMap& gt, std::uint8_t cls, double q = 95.0) {
  require_same_grid(pred, gt, "robust_hausdorff");
  return percentile(symmetric_surface_distances(class_mask(pred, cls), class_mask(gt, cls)), q);
}

inline double hausdorff(const LabelMap& pred, const LabelMap& gt, std::uint8_t cls) {
  const auto d = symmetric_surface_distances(class_mask(pred, cls), class_mask(gt, cls));
  return *std::max_element(d.begin(), d.end());
}

/// Predicted tumor components (26-connected) with no voxel on ground-truth tumor.
inline std::size_t fp_component_count(const LabelMap& pred, const LabelMap& gt, int connectivity = 26) {
  require_same_grid(pred, gt, "fp_component_count");
  const auto cs = class_components(pred, code(Tissue::tumor), connectivity);
  std::vector<char> hit(cs.count + 1, 0);
  for (std::size_t i = 0; i < pred.voxel_count(); ++i) {
    const auto id = cs.ids.at(i);
    if (id != 0 && gt.at(i) == code(Tissue::tumor)) hit[id] = 1;
  }
  return static_cast<std::size_t>(std::count(hit.begin() + 1, hit.end(), 0));
}

// ---------------------------------------------------------------------------
// Reports

/// Reported tissue columns, in table order.
inline constexpr std::array<Tissue, 6> kReportedTissues{Tissue::tumor, Tissue::adipose, Tissue::gland,
                                                         Tissue::vasculature, Tissue::skin, Tissue::chest};

struct MetricReport {
  std::string case_id;
  std::array<double, kNumClasses> dice_percent{};
  std::array<std::optional<double>, kNumClasses> rhd_mm{};
  std::size_t fp_tumor_components = 0;
};

inline MetricReport evaluate_case(const std::string& case_id, const LabelMap& pred, const LabelMap& gt) {
  require_same_grid(pred, gt, "evaluate_case");
  MetricReport r;
  r.case_id = case_id;
  for (std::uint8_t c = 0; c < kNumClasses; ++c) {
    r.dice_percent[c] = dice(pred, gt, c);
    try {
      r.rhd_mm[c] = robust_hausdorff(pred, gt, c);
    } catch (const UndefinedResult&) {
      r.rhd_mm[c] = std::nullopt;
    }
  }
  r.fp_tumor_components = fp_component_count(pred, gt);
  return r;
}

inline nlohmann::ordered_json to_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["case_id"] = r.case_id;
  nlohmann::ordered_json d, h;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    d[std::string(kTissueNames[c])] = r.dice_percent[c];
    h[std::string(kTissueNames[c])] = r.rhd_mm[c] ? nlohmann::ordered_json(*r.rhd_mm[c]) : nullptr;
  }
  j["dice_percent"] = d;
  j["rhd_mm"] = h;
  j["fp_tumor_components"] = r.fp_tumor_components;
  return j;
}

struct MeanStdErr {
  double mean = 0.0;
  double std_err = 0.0;
  std::size_t n = 0;
};

/// Mean and standard error of the mean (sample standard deviation / sqrt(n)).
inline MeanStdErr mean_std_err(std::span<const double> v) {
  MeanStdErr m;
  m.n = v.size();
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.std_err = std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
  }
  return m;
}

struct AggregateReport {
  std::array<MeanStdErr, kNumClasses> dice;
  std::array<MeanStdErr, kNumClasses> rhd;  // over cases where defined
  MeanStdErr fp_tumor_components;
  std::size_t cases = 0;
};

inline AggregateReport aggregate(std::span<const MetricReport> reports) {
  AggregateReport a;
  a.cases = reports.size();
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    std::vector<double> d, h;
    for (const auto& r : reports) {
      d.push_back(r.dice_percent[c]);
      if (r.rhd_mm[c]) h.push_back(*r.rhd_mm[c]);
    }
    a.dice[c] = mean_std_err(d);
    a.rhd[c] = mean_std_err(h);
  }
  std::vector<double> fp;
  for (const auto& r : reports) fp.push_back(static_cast<double>(r.fp_tumor_components));
  a.fp_tumor_components = mean_std_err(fp);
  return a;
}

inline nlohmann::ordered_json to_json(const AggregateReport& a) {
  auto stat = [](const MeanStdErr& m) {
    nlohmann::ordered_json j;
    j["mean"] = m.mean;
    j["std_err"] = m.std_err;
    j["n"] = m.n;
    return j;
  };
  nlohmann::ordered_json j;
  j["cases"] = a.cases;
  nlohmann::ordered_json d, h;
  for (Tissue t : kReportedTissues) {
    d[std::string(kTissueNames[code(t)])] = stat(a.dice[code(t)]);
    h[std::string(kTissueNames[code(t)])] = stat(a.rhd[code(t)]);
  }
  j["dice_percent"] = d;
  j["rhd_mm"] = h;
  j["fp_tumor_components"] = stat(a.fp_tumor_components);
  return j;
}

/// Aligned text table: one row of mean (std. err) per metric, tissue columns in report order.
inline std::string format_table(const AggregateReport& a) {
  static constexpr std::array<std::string_view, 6> headers{"Tumor", "Adipose", "Gland", "Vascular", "Skin", "Chest"};
  auto cell = [](const MeanStdErr& m) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f (%.1f)", m.mean, m.std_err);
    return std::string(buf);
  };
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.insert(0, w - s.size(), ' ');
    return s;
  };
  constexpr std::size_t w0 = 14, w = 14;
  std::string out = pad("Metric", w0);
  for (auto h : headers) out += " |" + pad(std::string(h), w);
  out += "\n" + std::string(w0 + headers.size() * (w + 2), '-') + "\n";
  out += pad("Dice %", w0);
  for (Tissue t : kReportedTissues) out += " |" + pad(cell(a.dice[code(t)]), w);
  out += "\n" + pad("RHD95 mm", w0);
  for (Tissue t : kReportedTissues) out += " |" + pad(cell(a.rhd[code(t)]), w);
  out += "\n";
  char fp[96];
  std::snprintf(fp, sizeof fp, "FP tumor components per case: %.2f (%.2f), cases: %zu\n", a.fp_tumor_components.mean,
                a.fp_tumor_components.std_err, a.cases);
  return out + fp;
}

} // namespace bseg
