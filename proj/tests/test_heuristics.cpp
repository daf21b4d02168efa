#include <random>

#include <gtest/gtest.h>

#include "bseg/heuristics.hpp"
#include "bseg/synth/degrade.hpp"
#include "bseg/synth/phantom.hpp"
#include "oracles.hpp"

using namespace bseg;

namespace {

constexpr auto kAir = code(Tissue::air), kSkin = code(Tissue::skin), kAdipose = code(Tissue::adipose),
               kGland = code(Tissue::gland), kVessel = code(Tissue::vasculature), kTumor = code(Tissue::tumor),
               kChest = code(Tissue::chest);

Grid grid(std::size_t nx, std::size_t ny, std::size_t nz) {
  Grid g;
  g.dims = {nx, ny, nz};
  return g;
}

ProbMap single_voxel(std::array<float, 7> p) {
  ProbMap m(grid(1, 1, 1), kNumClasses);
  for (std::size_t c = 0; c < 7; ++c) m.at(0, c) = p[c];
  return m;
}

void fill_box(LabelMap& l, Index3 lo, Index3 hi, std::uint8_t v) {
  for (std::size_t z = lo[2]; z < hi[2]; ++z)
    for (std::size_t y = lo[1]; y < hi[1]; ++y)
      for (std::size_t x = lo[0]; x < hi[0]; ++x) l(x, y, z) = v;
}

Box3D box(Vec3 lo, Vec3 hi) {
  Box3D b;
  b.min_mm = lo;
  b.max_mm = hi;
  return b;
}

} // namespace

TEST(Merge, FixedPointWhenTumorMatches) {
  const auto m = single_voxel({0.1f, 0.1f, 0.2f, 0.2f, 0.1f, 0.25f, 0.05f});
  EXPECT_EQ(merge_probabilities(m, extract_channel(m, kTumor)), m);
}

TEST(Merge, ProportionalRenormalization) {
  const auto m = single_voxel({0.5f, 0.5f, 0, 0, 0, 0, 0});
  ScalarVolume t(grid(1, 1, 1), 1, 0.4f);
  const auto out = merge_probabilities(m, t);
  EXPECT_NEAR(out.at(0, 0), 0.3, 1e-6);
  EXPECT_NEAR(out.at(0, 1), 0.3, 1e-6);
  EXPECT_NEAR(out.at(0, kTumor), 0.4, 1e-6);
  t.at(0) = 1.0f;
  const auto full = merge_probabilities(m, t);
  for (std::size_t c = 0; c < 7; ++c) EXPECT_EQ(full.at(0, c), c == kTumor ? 1.0f : 0.0f);
}

TEST(Merge, GridMismatch) {
  EXPECT_THROW(merge_probabilities(single_voxel({1, 0, 0, 0, 0, 0, 0}), ScalarVolume(grid(2, 1, 1))), GridMismatch);
}

TEST(SuppressVasculature, HandArithmetic) {
  const auto out = suppress_vasculature(single_voxel({0, 0, 0, 0, 0.3f, 0.6f, 0.1f}));
  EXPECT_NEAR(out.at(0, kTumor), 0.3 / 0.7, 1e-6);
  EXPECT_NEAR(out.at(0, kVessel), 0.3 / 0.7, 1e-6);
  EXPECT_NEAR(out.at(0, kChest), 0.1 / 0.7, 1e-6);
  const auto clamp = suppress_vasculature(single_voxel({0, 0, 0.2f, 0, 0.5f, 0.3f, 0}));
  EXPECT_EQ(clamp.at(0, kTumor), 0.0f);
  const auto none = single_voxel({0.2f, 0, 0.2f, 0, 0, 0.6f, 0});
  EXPECT_EQ(suppress_vasculature(none), none);
}

TEST(SuppressVasculature, NeverRaisesTumor) {
  std::mt19937_64 rng(1);
  ProbMap p(grid(6, 6, 6), kNumClasses);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (std::size_t i = 0; i < p.voxel_count(); ++i) {
    float s = 0.0f;
    for (std::size_t c = 0; c < 7; ++c) s += (p.at(i, c) = u(rng));
    for (std::size_t c = 0; c < 7; ++c) p.at(i, c) /= s;
  }
  const auto out = suppress_vasculature(p);
  EXPECT_LE(max_sum_deviation(out), 1e-5);
  for (std::size_t i = 0; i < p.voxel_count(); ++i) EXPECT_LE(out.at(i, kTumor), p.at(i, kTumor) + 1e-6f);
}

TEST(SuppressOutsideBox, KeepsStraddlingDropsOutside) {
  LabelMap l(grid(20, 10, 10), 1, kAdipose);
  fill_box(l, {2, 2, 2}, {6, 6, 6}, kTumor);     // straddles the box edge at x = 4 mm
  fill_box(l, {14, 2, 2}, {17, 5, 5}, kTumor);   // entirely outside
  const auto p = one_hot(l);
  const auto r = suppress_outside_box(p, box({0, 0, 0}, {4, 10, 10}));
  ASSERT_EQ(r.dropped.size(), 1u);
  EXPECT_EQ(r.dropped[0].voxels, 27u);
  const auto labels = argmax_labels(r.probs);
  EXPECT_EQ(labels(5, 5, 5), kTumor);
  EXPECT_NE(labels(15, 3, 3), kTumor);
  EXPECT_LE(max_sum_deviation(r.probs), 1e-6);
  EXPECT_EQ(suppress_outside_box(p, box({0, 0, 0}, {20, 10, 10})).probs, p);
}

TEST(ConnectedComponents, Basics) {
  Mask m(grid(8, 8, 8), 1, 0);
  EXPECT_EQ(connected_components(m).count, 0u);
  for (std::size_t z = 0; z < 2; ++z)
    for (std::size_t y = 0; y < 2; ++y)
      for (std::size_t x = 0; x < 2; ++x) {
        m(x, y, z) = 1;
        m(x + 4, y + 4, z + 4) = 1;
      }
  const auto cs = connected_components(m);
  EXPECT_EQ(cs.count, 2u);
  EXPECT_EQ(cs.voxel_counts, (std::vector<std::size_t>{8, 8}));
  EXPECT_EQ(cs.ids(0, 0, 0), 1);  // scan order

  Mask e(grid(3, 3, 1), 1, 0);
  e(0, 0, 0) = e(1, 1, 0) = 1;
  EXPECT_EQ(connected_components(e, 26).count, 1u);
  EXPECT_EQ(connected_components(e, 6).count, 2u);
}

TEST(ContactArea, FaceCounting) {
  LabelMap l(grid(10, 10, 3), 1, kAdipose);
  EXPECT_TRUE(contact_area(l, kTumor, kGland).area_mm2.empty());
  l(0, 0, 0) = kTumor;
  l(1, 0, 0) = kGland;
  EXPECT_DOUBLE_EQ(contact_area(l, kTumor, kGland).area_mm2.at(0), 1.0);

  LabelMap slab(grid(10, 10, 3), 1, kAdipose);
  fill_box(slab, {1, 1, 0}, {9, 9, 1}, kGland);
  fill_box(slab, {1, 1, 1}, {9, 9, 2}, kTumor);
  // The tumor slab also touches nothing but adipose sideways.
  EXPECT_DOUBLE_EQ(contact_area(slab, kTumor, kGland).area_mm2.at(0), 64.0);
  EXPECT_THROW(contact_area(slab, 9, kGland), InvalidArgument);
}

TEST(ContactArea, AnisotropicFaces) {
  Grid g = grid(2, 1, 1);
  g.spacing_mm = {3.0, 0.5, 2.0};
  LabelMap l(g, 1, kTumor);
  l(1, 0, 0) = kGland;
  EXPECT_DOUBLE_EQ(contact_area(l, kTumor, kGland).area_mm2.at(0), 1.0);
}

TEST(ContactRules, DropsInteriorAirAndLooseSkin) {
  LabelMap l(grid(12, 12, 12), 1, kAir);
  fill_box(l, {2, 2, 2}, {10, 10, 10}, kSkin);
  fill_box(l, {3, 3, 3}, {9, 9, 9}, kAdipose);
  l(5, 5, 5) = kAir;   // enclosed bubble
  l(7, 7, 7) = kSkin;  // skin fleck without air
  const auto r = apply_contact_rules(l, HeuristicConfig{});
  EXPECT_EQ(r.labels(5, 5, 5), kAdipose);
  EXPECT_EQ(r.labels(7, 7, 7), kAdipose);
  EXPECT_EQ(r.labels(0, 0, 0), kAir);
  EXPECT_EQ(r.labels(2, 2, 2), kSkin);
  EXPECT_EQ(r.dropped.size(), 2u);
}

TEST(ContactRules, TumorContactBoundary) {
  for (int faces : {63, 64}) {
    LabelMap l(grid(12, 12, 4), 1, kAdipose);
    // Tumor 8x8x1 slab; gland underneath covering `faces` of its 64 bottom faces.
    fill_box(l, {1, 1, 2}, {9, 9, 3}, kTumor);
    int placed = 0;
    for (std::size_t y = 1; y < 9; ++y)
      for (std::size_t x = 1; x < 9; ++x)
        if (placed++ < faces) l(x, y, 1) = kGland;
    const auto r = apply_contact_rules(l, HeuristicConfig{});
    EXPECT_EQ(r.labels(4, 4, 2) == kTumor, faces == 64) << faces;
  }
}

TEST(ContactRules, ReassignsToMostProbableAllowedClass) {
  LabelMap l(grid(6, 6, 6), 1, kAdipose);
  l(3, 3, 3) = kTumor;
  ProbMap p(l.grid(), kNumClasses);
  for (std::size_t i = 0; i < p.voxel_count(); ++i) p.at(i, kAdipose) = 1.0f;
  const auto vi = l.grid().linear(3, 3, 3);
  p.at(vi, kAdipose) = 0.1f;
  p.at(vi, kTumor) = 0.5f;
  p.at(vi, kSkin) = 0.25f;  // not an allowed target
  p.at(vi, kChest) = 0.15f;
  const auto r = apply_contact_rules(l, HeuristicConfig{}, &p);
  EXPECT_EQ(r.labels(3, 3, 3), kChest);
}

TEST(Hysteresis, ShellIncludedFarVoxelExcluded) {
  const Grid g = grid(21, 21, 21);
  ProbMap p(g, kNumClasses);
  for (std::size_t i = 0; i < p.voxel_count(); ++i) p.at(i, kAdipose) = 1.0f;
  auto set_tumor = [&](std::size_t x, std::size_t y, std::size_t z, float t) {
    const auto i = g.linear(x, y, z);
    p.at(i, kAdipose) = 1.0f - t;
    p.at(i, kTumor) = t;
  };
  for (std::size_t z = 6; z < 15; ++z)
    for (std::size_t y = 6; y < 15; ++y)
      for (std::size_t x = 6; x < 15; ++x) {
        const bool core = x >= 8 && x < 13 && y >= 8 && y < 13 && z >= 8 && z < 13;
        set_tumor(x, y, z, core ? 0.9f : 0.3f);
      }
  set_tumor(20, 10, 10, 0.9f);  // confident but 8 mm from the nearest seed
  const HeuristicConfig cfg;
  Mask none(g, 1, 0);
  EXPECT_EQ(hysteresis_tumor(p, cfg, &none), none);

  Mask seeds(g, 1, 0);
  for (std::size_t z = 8; z < 13; ++z)
    for (std::size_t y = 8; y < 13; ++y)
      for (std::size_t x = 8; x < 13; ++x) seeds(x, y, z) = 1;
  const auto h = hysteresis_tumor(p, cfg, &seeds);
  EXPECT_EQ(h(6, 10, 10), 1);     // 2 mm shell, prob 0.3
  EXPECT_EQ(h(20, 10, 10), 0);    // prob 0.9 but 8 mm from the seed
  EXPECT_EQ(h(6, 6, 6), 1);       // corner of the shell at sqrt(12) mm
  for (std::size_t i = 0; i < g.voxel_count(); ++i)
    if (seeds.at(i)) EXPECT_EQ(h.at(i), 1);
}

TEST(RunHeuristics, PhantomFixedPointAndIdempotence) {
  synth::PhantomSpec ps;
  ps.seed = 3;
  const auto ph = synth::generate_phantom(ps);
  const auto mo = synth::simulate_model_outputs(ph.labels, synth::DegradationSpec{});
  const auto boxes = fuse_case(mo.proposals, ps.laterality, ph.labels.grid().extent_mm());
  const auto r = run_heuristics(mo.multi, mo.tumor_prob, std::span<const Box3D>(boxes), HeuristicConfig{});
  EXPECT_EQ(r.labels, ph.labels);
  const auto again = one_hot(r.labels);
  const auto r2 = run_heuristics(again, extract_channel(again, kTumor), std::span<const Box3D>(boxes), HeuristicConfig{});
  EXPECT_EQ(r2.labels, r.labels);
}

TEST(RunHeuristics, VesselLeakRemovedFromCenterlines) {
  synth::PhantomSpec ps;
  ps.seed = 8;
  const auto ph = synth::generate_phantom(ps);
  synth::DegradationSpec d;
  d.vessel_leak_fraction = 1.0;
  d.seed = 4;
  const auto mo = synth::simulate_model_outputs(ph.labels, d);
  std::size_t leaked = 0;
  const auto pre = argmax_labels(mo.multi);
  for (std::size_t i = 0; i < pre.voxel_count(); ++i) leaked += ph.vessel_centerlines.at(i) && pre.at(i) == kTumor;
  ASSERT_GT(leaked, 0u);
  const auto boxes = fuse_case(mo.proposals, ps.laterality, ph.labels.grid().extent_mm());
  const auto r = run_heuristics(mo.multi, mo.tumor_prob, std::span<const Box3D>(boxes), HeuristicConfig{});
  for (std::size_t i = 0; i < r.labels.voxel_count(); ++i)
    if (ph.vessel_centerlines.at(i)) ASSERT_NE(r.labels.at(i), kTumor);
}

TEST(RunHeuristics, FalsePositivesNeverIncrease) {
  for (std::uint64_t seed : {21u, 22u}) {
    synth::PhantomSpec ps;
    ps.seed = seed;
    const auto ph = synth::generate_phantom(ps);
    synth::DegradationSpec d;
    d.seed = seed;
    d.fp_blob_count = 10;
    d.label_smoothing = 0.1;
    d.label_noise_sigma = 0.5;
    d.detector_jitter_mm = 3.0;
    const auto mo = synth::simulate_model_outputs(ph.labels, d);
    const auto boxes = fuse_case(mo.proposals, ps.laterality, ph.labels.grid().extent_mm());
    const auto r = run_heuristics(mo.multi, mo.tumor_prob, std::span<const Box3D>(boxes), HeuristicConfig{});
    EXPECT_LE(oracle::fp_components(r.labels, ph.labels), oracle::fp_components(argmax_labels(mo.multi), ph.labels));
  }
}

TEST(HeuristicConfig, Validation) {
  HeuristicConfig c;
  c.hysteresis_low_threshold = 1.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.connectivity = 18;
  EXPECT_THROW(c.validate(), InvalidArgument);
  const auto j = to_json(HeuristicConfig{});
  EXPECT_EQ(heuristic_config_from_json(j).min_contact_area_mm2, 64.0);
}
