// Command-line driver: prepare, segment, evaluate, phantom, calibrate.

#include <iostream>

#include <CLI11.hpp>

#include "bseg/pipeline.hpp"

namespace {

struct Overrides {
  std::string config;
  std::string input, output, gt, laterality;
  std::optional<int> jobs;
  std::optional<double> temperature;
  std::optional<std::size_t> count;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("-c,--config", o.config, "Pipeline config JSON");
  sub->add_option("-i,--input", o.input, "Input directory (a case folder or a folder of cases)");
  sub->add_option("-o,--output", o.output, "Output directory");
  sub->add_option("-j,--jobs", o.jobs, "Cases processed in parallel")->check(CLI::PositiveNumber);
}

bseg::PipelineConfig resolve(const Overrides& o) {
  bseg::PipelineConfig c = o.config.empty() ? bseg::PipelineConfig{} : bseg::load_pipeline_config(o.config);
  if (!o.input.empty()) c.input_dir = o.input;
  if (!o.output.empty()) c.output_dir = o.output;
  if (!o.gt.empty()) c.gt_dir = o.gt;
  if (!o.laterality.empty()) c.laterality = bseg::parse_laterality(o.laterality);
  if (o.jobs) c.jobs = *o.jobs;
  if (o.temperature) c.temperature = *o.temperature;
  if (o.count) c.phantom_count = *o.count;
  if (o.seed) c.seed = *o.seed;
  c.validate();
  return c;
}

int report(const bseg::RunReport& r) {
  for (const auto& m : r.messages) (r.exit_code ? std::cerr : std::cout) << m << (m.ends_with('\n') ? "" : "\n");
  if (!r.failed_cases.empty()) {
    std::cerr << "failed cases:";
    for (const auto& c : r.failed_cases) std::cerr << ' ' << c;
    std::cerr << '\n';
  }
  return r.exit_code;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Post-processing pipeline for breast DCE-MRI segmentation"};
  app.require_subcommand(1);
  Overrides o;

  auto* prepare = app.add_subcommand("prepare", "Resample, register and project case bundles");
  add_common(prepare, o);
  prepare->add_option("--laterality", o.laterality, "Override laterality (left, right, bilateral)");

  auto* segment = app.add_subcommand("segment", "Fuse boxes and apply tissue heuristics");
  add_common(segment, o);
  segment->add_option("--laterality", o.laterality, "Override laterality (left, right, bilateral)");
  segment->add_option("-t,--temperature", o.temperature, "Temperature for cases that provide logits")
      ->check(CLI::PositiveNumber);

  auto* evaluate = app.add_subcommand("evaluate", "Score predicted label maps against ground truth");
  add_common(evaluate, o);
  evaluate->add_option("-g,--gt", o.gt, "Ground-truth directory");

  auto* phantom = app.add_subcommand("phantom", "Generate synthetic cases");
  add_common(phantom, o);
  phantom->add_option("-n,--count", o.count, "Number of cases");
  phantom->add_option("-s,--seed", o.seed, "Base seed");

  auto* calibrate = app.add_subcommand("calibrate", "Fit a softmax temperature");
  add_common(calibrate, o);
  calibrate->add_option("-s,--seed", o.seed, "Voxel sampling seed");

  CLI11_PARSE(app, argc, argv);

  try {
    const bseg::PipelineConfig c = resolve(o);
    if (prepare->parsed()) return report(bseg::cmd_prepare(c));
    if (segment->parsed()) return report(bseg::cmd_segment(c));
    if (evaluate->parsed()) return report(bseg::cmd_evaluate(c));
    if (phantom->parsed()) return report(bseg::cmd_phantom(c));
    if (calibrate->parsed()) return report(bseg::cmd_calibrate(c));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return bseg::detail::exit_code_for(e);
  }
  return 1;
}
