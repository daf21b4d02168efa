#pragma once

// Case-directory driver behind the command-line tool. Every command works on a
// directory of case folders and writes one output folder per case, so cases run
// independently on a bounded number of threads.

#include <atomic>
#include <thread>

#include "bseg/boxfuse.hpp"
#include "bseg/calib.hpp"
#include "bseg/heuristics.hpp"
#include "bseg/metrics.hpp"
#include "bseg/mip.hpp"
#include "bseg/registration.hpp"
#include "bseg/resample.hpp"
#include "bseg/synth/degrade.hpp"
#include "bseg/synth/phantom.hpp"

namespace bseg {

struct PipelineConfig {
  fs::path input_dir;
  fs::path output_dir;
  fs::path gt_dir;                        // evaluate only
  std::optional<Laterality> laterality;   // overrides case.json
  HeuristicConfig heuristics;
  std::optional<double> temperature;      // applied when a case ships logits only
  double target_spacing_mm = 1.0;
  double mip_window_mm = 10.0;
  int jobs = 1;
  std::size_t phantom_count = 4;
  std::uint64_t seed = 0;
  synth::PhantomSpec phantom;
  synth::DegradationSpec degradation;
  std::size_t calibration_samples = 100000;
  int ece_bins = 15;
  nlohmann::ordered_json source = nlohmann::ordered_json::object();  // config as loaded

  void validate() const {
    if (jobs < 1) throw InvalidArgument("jobs must be at least 1");
    if (!(target_spacing_mm > 0.0)) throw InvalidArgument("target spacing must be positive");
    if (!(mip_window_mm > 0.0)) throw InvalidArgument("MIP window must be positive");
    if (temperature && !(*temperature > 0.0)) throw InvalidArgument("temperature must be positive");
    if (ece_bins < 1) throw InvalidArgument("need at least one ECE bin");
    heuristics.validate();
  }
};

inline PipelineConfig pipeline_config_from_json(const nlohmann::ordered_json& j) {
  PipelineConfig c;
  try {
    c.source = j;
    if (j.contains("input_dir")) c.input_dir = j.at("input_dir").get<std::string>();
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("gt_dir")) c.gt_dir = j.at("gt_dir").get<std::string>();
    if (j.contains("laterality")) c.laterality = parse_laterality(j.at("laterality").get<std::string>());
    if (j.contains("heuristics")) c.heuristics = heuristic_config_from_json(j.at("heuristics"));
    if (j.contains("temperature") && !j.at("temperature").is_null()) c.temperature = j.at("temperature").get<double>();
    c.target_spacing_mm = j.value("target_spacing_mm", c.target_spacing_mm);
    c.mip_window_mm = j.value("mip_window_mm", c.mip_window_mm);
    c.jobs = j.value("jobs", c.jobs);
    c.phantom_count = j.value("phantom_count", c.phantom_count);
    c.seed = j.value("seed", c.seed);
    if (j.contains("phantom")) c.phantom = synth::phantom_spec_from_json(j.at("phantom"));
    if (j.contains("degradation")) c.degradation = synth::degradation_spec_from_json(j.at("degradation"));
    c.calibration_samples = j.value("calibration_samples", c.calibration_samples);
    c.ece_bins = j.value("ece_bins", c.ece_bins);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline PipelineConfig load_pipeline_config(const fs::path& path) {
  return pipeline_config_from_json(detail::load_json_file(path));
}

/// Outcome of one command: exit code 0 iff every case completed.
struct RunReport {
  int exit_code = 0;
  std::vector<std::string> failed_cases;
  std::vector<std::string> messages;  // in case order
};

namespace detail {

/// Input and precondition problems exit with 2, anything else with 1.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
      dynamic_cast<const InvalidArgument*>(&e) || dynamic_cast<const GridMismatch*>(&e))
    return 2;
  return 1;
}

/// Case folders (those holding case.json) under `dir`, sorted by name. A folder
/// that is itself a case is returned alone.
inline std::vector<fs::path> case_dirs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(dir.string() + ": not a directory");
  if (fs::exists(dir / "case.json")) return {dir};
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && fs::exists(e.path() / "case.json")) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

/// Runs `fn(i)` for i in [0, n) on up to `jobs` threads. Returns per-item error
/// text and exit code; an empty string means success.
template <typename Fn>
std::vector<std::pair<std::string, int>> parallel_cases(std::size_t n, int jobs, Fn&& fn) {
  std::vector<std::pair<std::string, int>> status(n, {"", 0});
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (const std::exception& e) {
        status[i] = {e.what(), exit_code_for(e)};
      }
    }
  };
  const auto threads = static_cast<std::size_t>(std::max(1, std::min<int>(jobs, static_cast<int>(n))));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return status;
}

inline RunReport collect(const std::vector<std::string>& names, const std::vector<std::pair<std::string, int>>& status) {
  RunReport r;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (status[i].first.empty()) continue;
    r.failed_cases.push_back(names[i]);
    r.messages.push_back("case " + names[i] + ": " + status[i].first);
    r.exit_code = std::max(r.exit_code, status[i].second);
  }
  return r;
}

inline void write_json(const fs::path& p, const nlohmann::ordered_json& j) { save_text_file(p, j.dump(2) + "\n"); }

inline std::vector<std::string> names_of(const std::vector<fs::path>& dirs) {
  std::vector<std::string> out;
  for (const auto& d : dirs) out.push_back(d.filename().string());
  return out;
}

inline void require_output_dir(const PipelineConfig& c) {
  if (c.output_dir.empty()) throw InvalidArgument("an output directory is required");
  fs::create_directories(c.output_dir);
}

} // namespace detail

// ---------------------------------------------------------------------------
// prepare: resample to isotropic spacing, register post-contrast timepoints to
// pre-contrast, write the prepared bundle and its MIPs.

inline void prepare_case(const fs::path& in, const fs::path& out, const PipelineConfig& c) {
  CaseBundle b = read_case(in);
  if (c.laterality) b.laterality = *c.laterality;
  b.require_complete();
  for (auto& tp : b.timepoints) tp = resample_isotropic(tp, c.target_spacing_mm);
  b.require_same_grid();

  nlohmann::ordered_json reg;
  for (Timepoint t : {Timepoint::early, Timepoint::late}) {
    auto r = register_phase_correlation(b[Timepoint::pre], b[t]);
    reg[std::string(kTimepointNames[static_cast<int>(t)])] = {r.shift[0], r.shift[1], r.shift[2]};
    b[t] = std::move(r.registered);
  }

  fs::create_directories(out);
  write_case(b, out);
  detail::write_json(out / "registration.json", nlohmann::ordered_json{{"shift_voxels", reg}});
  for (const auto& mip : make_mips(b, c.mip_window_mm)) {
    std::string name = "mip_" + std::string(to_string(mip.plane));
    if (mip.plane == Plane::sagittal) name += "_" + std::string(to_string(mip.laterality));
    write_mip(mip, out / name);
  }
}

inline RunReport cmd_prepare(const PipelineConfig& c) {
  const auto dirs = detail::case_dirs(c.input_dir);
  detail::require_output_dir(c);
  const auto names = detail::names_of(dirs);
  const auto status = detail::parallel_cases(dirs.size(), c.jobs, [&](std::size_t i) {
    prepare_case(dirs[i], c.output_dir / names[i], c);
  });
  return detail::collect(names, status);
}

// ---------------------------------------------------------------------------
// segment: fuse boxes, run the heuristics, write labels and provenance.

inline void segment_case(const fs::path& in, const fs::path& out, const PipelineConfig& c) {
  const auto meta = detail::load_json_file(in / "case.json");
  const std::string case_id = meta.value("case_id", in.filename().string());
  const Laterality lat = c.laterality ? *c.laterality : parse_laterality(meta.value("laterality", std::string("left")));

  nlohmann::ordered_json inputs;
  ProbMap multi;
  if (fs::exists(header_path(in / "multi_prob"))) {
    multi = read_volume_as<float>(in / "multi_prob");
    inputs["multi"] = "multi_prob";
  } else if (fs::exists(header_path(in / "logits"))) {
    if (!c.temperature) throw InvalidArgument("logits given without a temperature");
    multi = softmax_with_temperature(read_volume_as<float>(in / "logits"), *c.temperature);
    inputs["multi"] = "logits";
    inputs["temperature"] = *c.temperature;
  } else {
    throw IoError((in / "multi_prob.json").string() + ": no multi-tissue probabilities or logits");
  }
  const ScalarVolume tumor = read_volume_as<float>(in / "tumor_prob");
  require_same_grid(multi, tumor, "segment");

  std::vector<BoxProposal2D> props;
  if (fs::exists(in / "proposals.jsonl")) props = read_proposals(in / "proposals.jsonl", case_id);
  inputs["proposals"] = props.size();

  const auto boxes = fuse_case(props, lat, multi.grid().extent_mm());
  const auto result = run_heuristics(multi, tumor, std::span<const Box3D>(boxes), c.heuristics);

  fs::create_directories(out);
  write_volume(result.labels, out / "labels");
  nlohmann::ordered_json box_json = nlohmann::ordered_json::array();
  for (const auto& b : boxes) box_json.push_back(to_json(b));
  detail::write_json(out / "box3d.json", box_json);

  nlohmann::ordered_json prov;
  prov["case_id"] = case_id;
  prov["laterality"] = std::string(to_string(lat));
  prov["inputs"] = inputs;
  prov["heuristics"] = to_json(c.heuristics);
  bool fallback = false;
  for (const auto& b : boxes)
    for (auto s : b.provenance) fallback = fallback || s != AxisSource::fused;
  prov["box_fallback_used"] = fallback;
  const auto& hp = result.provenance;
  prov["suppressed_components"] = hp.box_suppressed.size() + hp.contact_dropped.size() + hp.final_pass_dropped.size();
  prov["decisions"] = to_json(hp);
  detail::write_json(out / "provenance.json", prov);
}

inline RunReport cmd_segment(const PipelineConfig& c) {
  const auto dirs = detail::case_dirs(c.input_dir);
  detail::require_output_dir(c);
  const auto names = detail::names_of(dirs);
  const auto status = detail::parallel_cases(dirs.size(), c.jobs, [&](std::size_t i) {
    segment_case(dirs[i], c.output_dir / names[i], c);
  });
  return detail::collect(names, status);
}

// ---------------------------------------------------------------------------
// evaluate: per-case metrics of <input_dir>/<case>/labels against
// <gt_dir>/<case>/gt, plus the aggregate table.

inline RunReport cmd_evaluate(const PipelineConfig& c) {
  if (c.gt_dir.empty()) throw InvalidArgument("evaluate needs a ground-truth directory");
  auto list = [](const fs::path& dir, const char* stem) {
    if (!fs::is_directory(dir)) throw IoError(dir.string() + ": not a directory");
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_directory() && fs::exists(header_path(e.path() / stem))) out.push_back(e.path().filename().string());
    std::sort(out.begin(), out.end());
    return out;
  };
  const auto pred_cases = list(c.input_dir, "labels");
  const auto gt_cases = list(c.gt_dir, "gt");
  for (const auto& p : pred_cases)
    if (!std::binary_search(gt_cases.begin(), gt_cases.end(), p))
      throw IoError("case " + p + ": no ground truth under " + c.gt_dir.string());
  for (const auto& g : gt_cases)
    if (!std::binary_search(pred_cases.begin(), pred_cases.end(), g))
      throw IoError("case " + g + ": no prediction under " + c.input_dir.string());
  if (pred_cases.empty()) throw IoError(c.input_dir.string() + ": no cases to evaluate");
  detail::require_output_dir(c);

  std::vector<MetricReport> reports(pred_cases.size());
  const auto status = detail::parallel_cases(pred_cases.size(), c.jobs, [&](std::size_t i) {
    const auto pred = read_volume_as<std::uint8_t>(c.input_dir / pred_cases[i] / "labels");
    const auto gt = read_volume_as<std::uint8_t>(c.gt_dir / pred_cases[i] / "gt");
    reports[i] = evaluate_case(pred_cases[i], pred, gt);
  });
  RunReport r = detail::collect(pred_cases, status);
  if (r.exit_code != 0) return r;

  std::string lines;
  for (const auto& rep : reports) lines += to_json(rep).dump() + "\n";
  detail::save_text_file(c.output_dir / "metrics.jsonl", lines);
  const auto agg = aggregate(reports);
  detail::write_json(c.output_dir / "aggregate.json", to_json(agg));
  const std::string table = format_table(agg);
  detail::save_text_file(c.output_dir / "table.txt", table);
  r.messages.push_back(table);
  return r;
}

// ---------------------------------------------------------------------------
// phantom: synthetic cases with ground truth and simulated model outputs.

inline std::string phantom_case_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "case_%03zu", i);
  return buf;
}

inline void write_phantom_case(const fs::path& out, const std::string& case_id, const synth::PhantomSpec& ps,
                               const synth::DegradationSpec& ds) {
  const auto ph = synth::generate_phantom(ps, case_id);
  const auto mo = synth::simulate_model_outputs(ph.labels, ds, case_id);
  fs::create_directories(out);
  write_case(ph.bundle, out);
  write_volume(ph.labels, out / "gt");
  write_volume(mo.multi, out / "multi_prob");
  write_volume(mo.logits, out / "logits");
  write_volume(mo.tumor_prob, out / "tumor_prob");
  write_proposals(mo.proposals, out / "proposals.jsonl");
}

inline RunReport cmd_phantom(const PipelineConfig& c) {
  detail::require_output_dir(c);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < c.phantom_count; ++i) names.push_back(phantom_case_name(i));
  const auto status = detail::parallel_cases(names.size(), c.jobs, [&](std::size_t i) {
    synth::PhantomSpec ps = c.phantom;
    ps.seed = c.seed + i;
    synth::DegradationSpec ds = c.degradation;
    ds.seed = (c.seed + i) ^ 0x9E3779B97F4A7C15ull;
    write_phantom_case(c.output_dir / names[i], names[i], ps, ds);
  });
  return detail::collect(names, status);
}

// ---------------------------------------------------------------------------
// calibrate: fit one temperature over the logits and ground truth of all cases.

inline RunReport cmd_calibrate(const PipelineConfig& c) {
  const auto dirs = detail::case_dirs(c.input_dir);
  if (dirs.empty()) throw IoError(c.input_dir.string() + ": no cases to calibrate on");
  detail::require_output_dir(c);
  const auto names = detail::names_of(dirs);
  const std::size_t per_case = std::max<std::size_t>(1, c.calibration_samples / dirs.size());
  std::vector<CalibrationSamples> parts(dirs.size());
  const auto status = detail::parallel_cases(dirs.size(), c.jobs, [&](std::size_t i) {
    const auto logits = read_volume_as<float>(dirs[i] / "logits");
    const auto gt = read_volume_as<std::uint8_t>(dirs[i] / "gt");
    parts[i] = sample_voxels(logits, gt, per_case, c.seed + i);
  });
  RunReport r = detail::collect(names, status);
  if (r.exit_code != 0) return r;

  CalibrationSamples all;
  for (const auto& p : parts) {
    all.logits.insert(all.logits.end(), p.logits.begin(), p.logits.end());
    all.labels.insert(all.labels.end(), p.labels.begin(), p.labels.end());
  }
  TemperatureSearch search;
  search.n_bins = c.ece_bins;
  const double t = fit_temperature(all, search);
  nlohmann::ordered_json j;
  j["temperature"] = t;
  j["ece_before"] = ece_at_temperature(all, 1.0, c.ece_bins);
  j["ece_after"] = ece_at_temperature(all, t, c.ece_bins);
  j["samples"] = all.size();
  detail::write_json(c.output_dir / "calibration.json", j);
  nlohmann::ordered_json cfg = c.source;
  cfg["temperature"] = t;
  detail::write_json(c.output_dir / "config.json", cfg);
  char buf[96];
  std::snprintf(buf, sizeof buf, "temperature %.6g (ECE %.4f -> %.4f)", t, j["ece_before"].get<double>(),
                j["ece_after"].get<double>());
  r.messages.push_back(buf);
  return r;
}

} // namespace bseg
