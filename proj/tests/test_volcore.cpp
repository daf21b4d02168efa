#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "bseg/case_bundle.hpp"
#include "bseg/registration.hpp"
#include "bseg/resample.hpp"
#include "test_util.hpp"

using namespace bseg;

namespace {

Grid grid(std::size_t nx, std::size_t ny, std::size_t nz, double s = 1.0) {
  Grid g;
  g.dims = {nx, ny, nz};
  g.spacing_mm = {s, s, s};
  return g;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

} // namespace

TEST(VolumeIo, HeaderEchoesDims) {
  TempDir dir;
  Volume<std::uint8_t> v(grid(4, 4, 4), 1, 3);
  write_volume(v, dir.path / "cube");
  const auto back = read_volume_as<std::uint8_t>(dir.path / "cube");
  EXPECT_EQ(back.dims(), (Index3{4, 4, 4}));
  EXPECT_EQ(back, v);
}

TEST(VolumeIo, TruncatedRawIsRejected) {
  TempDir dir;
  write_volume(Volume<std::uint8_t>(grid(4, 4, 4)), dir.path / "v");
  fs::resize_file(dir.path / "v.raw", 63);
  EXPECT_THROW(read_volume(dir.path / "v"), FormatError);
}

TEST(VolumeIo, MissingFileIsIoError) {
  TempDir dir;
  EXPECT_THROW(read_volume(dir.path / "absent"), IoError);
}

TEST(VolumeIo, ZeroFloatVolumeWritesZeroBytes) {
  TempDir dir;
  write_volume(Volume<float>(grid(2, 2, 2)), dir.path / "z");
  const auto raw = slurp(dir.path / "z.raw");
  ASSERT_EQ(raw.size(), 32u);
  EXPECT_TRUE(std::all_of(raw.begin(), raw.end(), [](char c) { return c == 0; }));
}

TEST(VolumeIo, RejectsBadHeaders) {
  TempDir dir;
  write_volume(Volume<float>(grid(2, 2, 2)), dir.path / "h");
  auto patch = [&](const std::string& from, const std::string& to) {
    auto text = slurp(dir.path / "h.json");
    const auto pos = text.find(from);
    ASSERT_NE(pos, std::string::npos);
    text.replace(pos, from.size(), to);
    std::ofstream(dir.path / "bad.json") << text;
    fs::copy_file(dir.path / "h.raw", dir.path / "bad.raw", fs::copy_options::overwrite_existing);
  };
  patch("\"f32\"", "\"f64\"");
  EXPECT_THROW(read_volume(dir.path / "bad"), FormatError);
  patch("\"LR_AP_SI\"", "\"RAS\"");
  EXPECT_THROW(read_volume(dir.path / "bad"), FormatError);
}

TEST(VolumeIo, RandomRoundTripIsByteExact) {
  TempDir dir;
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<std::size_t> side(1, 9), ch(1, 7);
    Grid g = grid(side(rng), side(rng), side(rng));
    g.spacing_mm = {0.5 + trial * 0.1, 1.25, 3.0};
    g.origin_mm = {-10.0, 2.5, trial * 1.0};
    const fs::path a = dir.path / "a", b = dir.path / "b";
    if (trial % 2) {
      Volume<float> v(g, ch(rng));
      std::normal_distribution<float> n(0.0f, 100.0f);
      for (auto& x : v.buffer()) x = n(rng);
      write_volume(v, a);
      EXPECT_EQ(read_volume_as<float>(a), v);
    } else {
      Volume<std::uint8_t> v(g, ch(rng));
      std::uniform_int_distribution<int> n(0, 255);
      for (auto& x : v.buffer()) x = static_cast<std::uint8_t>(n(rng));
      write_volume(v, a);
      EXPECT_EQ(read_volume_as<std::uint8_t>(a), v);
    }
    write_volume(read_volume(a), b);
    EXPECT_EQ(slurp(dir.path / "a.json"), slurp(dir.path / "b.json"));
    EXPECT_EQ(slurp(dir.path / "a.raw"), slurp(dir.path / "b.raw"));
  }
}

TEST(Resample, IdentityAtTargetSpacing) {
  Volume<float> v(grid(5, 4, 3));
  std::mt19937 rng(1);
  for (auto& x : v.buffer()) x = std::uniform_real_distribution<float>(-5, 5)(rng);
  EXPECT_EQ(resample_isotropic(v, 1.0), v);
}

TEST(Resample, RampAtTwoMillimeters) {
  Grid g;
  g.dims = {2, 1, 1};
  g.spacing_mm = {2.0, 1.0, 1.0};
  Volume<float> v(g, 1, std::vector<float>{0.0f, 10.0f});
  const auto r = resample_isotropic(v, 1.0);
  ASSERT_EQ(r.dims(), (Index3{3, 1, 1}));
  EXPECT_FLOAT_EQ(r.at(0), 0.0f);
  EXPECT_FLOAT_EQ(r.at(1), 5.0f);
  EXPECT_FLOAT_EQ(r.at(2), 10.0f);
}

TEST(Resample, OutputLengthFormula) {
  EXPECT_EQ(resampled_length(64, 2.0, 1.0), 127u);
  for (std::size_t n = 2; n < 40; ++n)
    for (double s : {0.7, 1.3, 2.0, 3.3}) {
      // Largest count of 1 mm steps that stays inside the input extent.
      std::size_t ref = 0;
      while (double(ref) <= double(n - 1) * s + 1e-9) ++ref;
      EXPECT_EQ(resampled_length(n, s, 1.0), ref) << n << " " << s;
    }
}

TEST(Resample, ExactOnAffineFields) {
  Grid g;
  g.dims = {6, 5, 4};
  g.spacing_mm = {2.0, 1.5, 3.0};
  Volume<double> v(g);
  auto f = [](double x, double y, double z) { return 3.0 + 0.5 * x - 2.0 * y + 0.25 * z; };
  for (std::size_t z = 0; z < 4; ++z)
    for (std::size_t y = 0; y < 5; ++y)
      for (std::size_t x = 0; x < 6; ++x) v(x, y, z) = f(x * 2.0, y * 1.5, z * 3.0);
  const auto r = resample_isotropic(v, 1.0);
  for (std::size_t z = 0; z < r.dims()[2]; ++z)
    for (std::size_t y = 0; y < r.dims()[1]; ++y)
      for (std::size_t x = 0; x < r.dims()[0]; ++x) EXPECT_NEAR(r(x, y, z), f(x, y, z), 1e-9);
}

TEST(Resample, SingleSampleAxisNeedsMatchingSpacing) {
  Grid g;
  g.dims = {4, 4, 1};
  g.spacing_mm = {1.0, 1.0, 2.0};
  EXPECT_THROW(resample_isotropic(Volume<float>(g), 1.0), InvalidArgument);
}

TEST(Registration, IdentityHasZeroShift) {
  std::mt19937_64 rng(3);
  const auto v = test::blobs(rng, 24);
  EXPECT_EQ(register_phase_correlation(v, v).shift, (Shift3{0, 0, 0}));
}

TEST(Registration, RecoversCircularRoll) {
  std::mt19937_64 rng(4);
  const auto v = test::blobs(rng, 24);
  const Shift3 s{3, -2, 1};
  const auto r = register_phase_correlation(v, test::roll(v, s));
  EXPECT_EQ(r.shift, s);
  // Registered volume agrees with the fixed one wherever the zero fill did not reach.
  for (std::size_t z = 0; z < 23; ++z)
    for (std::size_t y = 2; y < 24; ++y)
      for (std::size_t x = 0; x < 21; ++x) EXPECT_EQ(r.registered(x, y, z), v(x, y, z));
}

TEST(Registration, AllZeroInputIsDegenerate) {
  Volume<float> zero(grid(8, 8, 8));
  std::mt19937_64 rng(1);
  EXPECT_THROW(register_phase_correlation(zero, test::blobs(rng, 8)), DegenerateInput);
}

TEST(Registration, DimsMustMatch) {
  EXPECT_THROW(register_phase_correlation(Volume<float>(grid(8, 8, 8), 1, 1.0f), Volume<float>(grid(8, 8, 4), 1, 1.0f)),
               GridMismatch);
}

TEST(CaseBundle, MissingTimepointIsNamed) {
  TempDir dir;
  CaseBundle b;
  b.case_id = "c1";
  b[Timepoint::pre] = Volume<float>(grid(3, 3, 3));
  b[Timepoint::early] = Volume<float>(grid(3, 3, 3));
  write_case(b, dir.path);
  const auto back = read_case(dir.path);
  try {
    back.require_complete();
    FAIL() << "expected an error";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("late"), std::string::npos);
  }
}
