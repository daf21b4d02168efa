#pragma once

#include <string>

#include "bseg/volume_io.hpp"

namespace bseg {

enum class Timepoint { pre = 0, early = 1, late = 2 };

inline constexpr std::array<std::string_view, 3> kTimepointNames{"pre", "early", "late"};

/// Per-patient input set: three co-registered DCE timepoints plus laterality.
/// A default-constructed (empty) volume marks a missing timepoint.
struct CaseBundle {
  std::string case_id;
  Laterality laterality = Laterality::left;
  std::array<ScalarVolume, 3> timepoints;

  ScalarVolume& operator[](Timepoint t) { return timepoints[static_cast<int>(t)]; }
  const ScalarVolume& operator[](Timepoint t) const { return timepoints[static_cast<int>(t)]; }

  /// Throws naming the first missing timepoint.
  void require_complete() const {
    for (int t = 0; t < 3; ++t)
      if (timepoints[t].empty())
        throw InvalidArgument("case " + case_id + ": missing " + std::string(kTimepointNames[t]) +
                              " timepoint");
  }

  void require_same_grid() const {
    require_complete();
    for (int t = 1; t < 3; ++t)
      if (!timepoints[t].grid().same_sampling(timepoints[0].grid()))
        throw GridMismatch("case " + case_id + ": timepoints are on different grids");
  }
};

/// Reads `<dir>/case.json` ({"case_id", "laterality"}) and `<dir>/{pre,early,late}`.
/// A missing timepoint file leaves that slot empty; callers decide whether that is fatal.
inline CaseBundle read_case(const fs::path& dir) {
  const auto meta = detail::load_json_file(dir / "case.json");
  CaseBundle b;
  try {
    b.case_id = meta.at("case_id").get<std::string>();
    b.laterality = parse_laterality(meta.at("laterality").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "case.json").string() + ": " + e.what());
  }
  for (int t = 0; t < 3; ++t) {
    const fs::path p = dir / kTimepointNames[t];
    if (fs::exists(header_path(p))) b.timepoints[t] = read_volume_as<float>(p);
  }
  return b;
}

inline void write_case_meta(const fs::path& dir, const std::string& case_id, Laterality lat) {
  nlohmann::ordered_json meta;
  meta["case_id"] = case_id;
  meta["laterality"] = std::string(to_string(lat));
  detail::save_text_file(dir / "case.json", meta.dump(2) + "\n");
}

inline void write_case(const CaseBundle& b, const fs::path& dir) {
  write_case_meta(dir, b.case_id, b.laterality);
  for (int t = 0; t < 3; ++t)
    if (!b.timepoints[t].empty()) write_volume(b.timepoints[t], dir / kTimepointNames[t]);
}

} // namespace bseg
