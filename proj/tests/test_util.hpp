#pragma once

#include <cstdlib>
#include <random>
#include <string>

#include "bseg/registration.hpp"
#include "bseg/volume_io.hpp"

/// Scratch directory removed on destruction.
struct TempDir {
  bseg::fs::path path;
  TempDir() {
    std::string tmpl = (bseg::fs::temp_directory_path() / "bseg_test_XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    bseg::fs::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

namespace test {

/// Sum of random Gaussian blobs on an n^3 grid at 1 mm.
inline bseg::ScalarVolume blobs(std::mt19937_64& rng, std::size_t n, int count = 12) {
  bseg::Grid g;
  g.dims = {n, n, n};
  bseg::ScalarVolume v(g, 1, 0.0f);
  std::uniform_real_distribution<double> u(0.0, double(n)), r(n / 16.0 + 1.0, n / 6.0 + 1.0), amp(0.5, 1.5);
  for (int b = 0; b < count; ++b) {
    const double cx = u(rng), cy = u(rng), cz = u(rng), s = r(rng), a = amp(rng);
    for (std::size_t z = 0; z < n; ++z)
      for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
          const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy) + (z - cz) * (z - cz);
          v(x, y, z) += static_cast<float>(a * std::exp(-d2 / (2 * s * s)));
        }
  }
  return v;
}

/// Circular shift: out(x + s mod n) = v(x).
inline bseg::ScalarVolume roll(const bseg::ScalarVolume& v, const bseg::Shift3& s) {
  bseg::ScalarVolume out(v.grid(), 1);
  const auto& d = v.dims();
  auto wrap = [](std::size_t i, long k, std::size_t n) {
    const long m = (static_cast<long>(i) + k) % static_cast<long>(n);
    return static_cast<std::size_t>(m < 0 ? m + static_cast<long>(n) : m);
  };
  for (std::size_t z = 0; z < d[2]; ++z)
    for (std::size_t y = 0; y < d[1]; ++y)
      for (std::size_t x = 0; x < d[0]; ++x) out(wrap(x, s[0], d[0]), wrap(y, s[1], d[1]), wrap(z, s[2], d[2])) = v(x, y, z);
  return out;
}

} // namespace test
