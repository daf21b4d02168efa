#pragma once

#include <array>
#include <complex>
#include <memory>
#include <mutex>

#include <fftw3.h>

#include "bseg/volume.hpp"

namespace bseg {

using Shift3 = std::array<long, 3>;

template <typename T>
struct Registration {
  Shift3 shift{0, 0, 0};  // voxels; moving ~= fixed circularly rolled by shift
  Volume<T> registered;   // moving translated by -shift, zero fill
};

namespace detail {

// FFTW planning is not thread-safe; execution is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

class FftwBuffer {
public:
  explicit FftwBuffer(std::size_t bytes) : ptr_(fftw_malloc(bytes)) {
    if (!ptr_) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(ptr_); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  template <typename U>
  U* as() const {
    return static_cast<U*>(ptr_);
  }

private:
  void* ptr_;
};

class FftwPlan {
public:
  explicit FftwPlan(fftw_plan p) : plan_(p) {
    if (!plan_) throw Error("FFTW plan creation failed");
  }
  ~FftwPlan() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan_);
  }
  FftwPlan(const FftwPlan&) = delete;
  FftwPlan& operator=(const FftwPlan&) = delete;
  void execute() const { fftw_execute(plan_); }

private:
  fftw_plan plan_;
};

/// Forward real-to-complex transform of a scalar volume.
template <typename T>
std::vector<std::complex<double>> forward_spectrum(const Volume<T>& v) {
  const auto& d = v.dims();
  const int n0 = static_cast<int>(d[2]), n1 = static_cast<int>(d[1]), n2 = static_cast<int>(d[0]);
  const std::size_t half = d[0] / 2 + 1;
  const std::size_t n_spec = d[2] * d[1] * half;
  FftwBuffer in(sizeof(double) * v.voxel_count());
  FftwBuffer out(sizeof(fftw_complex) * n_spec);
  std::unique_ptr<FftwPlan> plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = std::make_unique<FftwPlan>(
        fftw_plan_dft_r2c_3d(n0, n1, n2, in.as<double>(), out.as<fftw_complex>(), FFTW_ESTIMATE));
  }
  double* src = in.as<double>();
  for (std::size_t i = 0; i < v.voxel_count(); ++i) src[i] = static_cast<double>(v.at(i));
  plan->execute();
  std::vector<std::complex<double>> spec(n_spec);
  const fftw_complex* o = out.as<fftw_complex>();
  for (std::size_t i = 0; i < n_spec; ++i) spec[i] = {o[i][0], o[i][1]};
  return spec;
}

inline std::vector<double> inverse_spectrum(const std::vector<std::complex<double>>& spec, const Index3& d) {
  const int n0 = static_cast<int>(d[2]), n1 = static_cast<int>(d[1]), n2 = static_cast<int>(d[0]);
  const std::size_t n_real = d[0] * d[1] * d[2];
  FftwBuffer in(sizeof(fftw_complex) * spec.size());
  FftwBuffer out(sizeof(double) * n_real);
  std::unique_ptr<FftwPlan> plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = std::make_unique<FftwPlan>(
        fftw_plan_dft_c2r_3d(n0, n1, n2, in.as<fftw_complex>(), out.as<double>(), FFTW_ESTIMATE));
  }
  fftw_complex* c = in.as<fftw_complex>();
  for (std::size_t i = 0; i < spec.size(); ++i) {
    c[i][0] = spec[i].real();
    c[i][1] = spec[i].imag();
  }
  plan->execute();
  const double* r = out.as<double>();
  return std::vector<double>(r, r + n_real);
}

inline long wrap_signed(std::size_t idx, std::size_t n) {
  const auto i = static_cast<long>(idx);
  return i > static_cast<long>(n / 2) ? i - static_cast<long>(n) : i;
}

} // namespace detail

/// Translates `v` so that out(x) = v(x + shift); samples falling outside are zero.
template <typename T>
Volume<T> translate(const Volume<T>& v, const Shift3& shift) {
  Volume<T> out(v.grid(), v.channels(), T{});
  const auto& d = v.dims();
  for (std::size_t z = 0; z < d[2]; ++z) {
    const long sz = static_cast<long>(z) + shift[2];
    if (sz < 0 || sz >= static_cast<long>(d[2])) continue;
    for (std::size_t y = 0; y < d[1]; ++y) {
      const long sy = static_cast<long>(y) + shift[1];
      if (sy < 0 || sy >= static_cast<long>(d[1])) continue;
      for (std::size_t x = 0; x < d[0]; ++x) {
        const long sx = static_cast<long>(x) + shift[0];
        if (sx < 0 || sx >= static_cast<long>(d[0])) continue;
        for (std::size_t c = 0; c < v.channels(); ++c)
          out(x, y, z, c) = v(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy),
                              static_cast<std::size_t>(sz), c);
      }
    }
  }
  return out;
}

/// Integer-voxel translation between two scalar volumes by phase correlation:
/// the peak of the inverse transform of the normalized cross-power spectrum.
/// Ties resolve to the first peak in x-fastest scan order.
template <typename T>
Registration<T> register_phase_correlation(const Volume<T>& fixed, const Volume<T>& moving) {
  if (fixed.channels() != 1 || moving.channels() != 1)
    throw InvalidArgument("phase correlation needs scalar volumes");
  if (fixed.dims() != moving.dims()) throw GridMismatch("phase correlation: dims differ");
  auto all_zero = [](const Volume<T>& v) {
    return std::all_of(v.data().begin(), v.data().end(), [](T x) { return x == T{}; });
  };
  if (all_zero(fixed) || all_zero(moving)) throw DegenerateInput("phase correlation: all-zero input");

  const auto f = detail::forward_spectrum(fixed);
  const auto m = detail::forward_spectrum(moving);
  std::vector<std::complex<double>> cross(f.size());
  double peak_mag = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) peak_mag = std::max(peak_mag, std::abs(f[i]) * std::abs(m[i]));
  const double floor_mag = peak_mag * 1e-12;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const std::complex<double> r = std::conj(f[i]) * m[i];
    const double mag = std::abs(r);
    cross[i] = mag > floor_mag ? r / mag : std::complex<double>{};
  }
  const auto corr = detail::inverse_spectrum(cross, fixed.dims());
  std::size_t best = 0;
  for (std::size_t i = 1; i < corr.size(); ++i)
    if (corr[i] > corr[best]) best = i;

  const Index3 at = fixed.grid().coords(best);
  Registration<T> result;
  for (int a = 0; a < 3; ++a) result.shift[a] = detail::wrap_signed(at[a], fixed.dims()[a]);
  result.registered = translate(moving, result.shift);
  return result;
}

} // namespace bseg
