#pragma once

// Temperature scaling of multi-tissue logits, fitted to minimize expected
// calibration error.

#include <random>

#include "bseg/volume.hpp"

namespace bseg {

/// Softmax of l / T, computed in double with the max subtracted.
inline std::array<double, kNumClasses> softmax(std::span<const float> logits, double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgument("temperature must be positive");
  std::array<double, kNumClasses> p{};
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < kNumClasses; ++c) mx = std::max(mx, logits[c] / temperature);
  double sum = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    p[c] = std::exp(logits[c] / temperature - mx);
    sum += p[c];
  }
  for (auto& v : p) v /= sum;
  return p;
}

inline ProbMap softmax_with_temperature(const LogitMap& logits, double temperature) {
  if (logits.channels() != kNumClasses) throw InvalidArgument("logit map must have 7 channels");
  if (!(temperature > 0.0)) throw InvalidArgument("temperature must be positive");
  ProbMap out(logits.grid(), kNumClasses);
  for (std::size_t i = 0; i < logits.voxel_count(); ++i) {
    const auto p = softmax(logits.voxel(i), temperature);
    for (std::size_t c = 0; c < kNumClasses; ++c) out.at(i, c) = static_cast<float>(p[c]);
  }
  return out;
}

/// Confidence-binned calibration error over (confidence, correct) pairs:
/// sum over equal-width bins of |bin|/N * |accuracy - mean confidence|.
inline double ece(std::span<const double> confidence, std::span<const std::uint8_t> correct, int n_bins = 15) {
  if (confidence.size() != correct.size()) throw InvalidArgument("ece: size mismatch");
  if (confidence.empty()) throw DegenerateInput("ece: no samples");
  if (n_bins < 1) throw InvalidArgument("ece: need at least one bin");
  std::vector<double> conf_sum(n_bins, 0.0), hits(n_bins, 0.0), count(n_bins, 0.0);
  for (std::size_t i = 0; i < confidence.size(); ++i) {
    const int b = std::clamp(static_cast<int>(confidence[i] * n_bins), 0, n_bins - 1);
    conf_sum[b] += confidence[i];
    hits[b] += correct[i] ? 1.0 : 0.0;
    count[b] += 1.0;
  }
  const double n = static_cast<double>(confidence.size());
  double total = 0.0;
  for (int b = 0; b < n_bins; ++b) {
    if (count[b] == 0.0) continue;
    total += (count[b] / n) * std::abs(hits[b] / count[b] - conf_sum[b] / count[b]);
  }
  return total;
}

inline double ece(const ProbMap& p, const LabelMap& labels, int n_bins = 15) {
  require_prob_map(p);
  require_same_grid(p, labels, "ece");
  std::vector<double> conf(p.voxel_count());
  std::vector<std::uint8_t> ok(p.voxel_count());
  for (std::size_t i = 0; i < p.voxel_count(); ++i) {
    const auto v = p.voxel(i);
    const auto best = argmax_class(v);
    conf[i] = v[best];
    ok[i] = best == labels.at(i);
  }
  return ece(conf, ok, n_bins);
}

/// Flat per-sample logits (7 per sample) with their reference class.
struct CalibrationSamples {
  std::vector<float> logits;
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const float> sample(std::size_t i) const {
    return std::span<const float>(logits).subspan(i * kNumClasses, kNumClasses);
  }
  void push_back(std::span<const float> l, std::uint8_t label) {
    logits.insert(logits.end(), l.begin(), l.end());
    labels.push_back(label);
  }
};

/// Uniform random subset of voxels without replacement (all voxels when the
/// volume is smaller than `max_samples`), in ascending voxel order.
inline CalibrationSamples sample_voxels(const LogitMap& logits, const LabelMap& labels,
                                        std::size_t max_samples = 100000, std::uint64_t seed = 0) {
  if (logits.channels() != kNumClasses) throw InvalidArgument("logit map must have 7 channels");
  require_same_grid(logits, labels, "sample_voxels");
  const std::size_t n = logits.voxel_count();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (n > max_samples) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < max_samples; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(max_samples);
    std::sort(idx.begin(), idx.end());
  }
  CalibrationSamples s;
  s.logits.reserve(idx.size() * kNumClasses);
  s.labels.reserve(idx.size());
  for (auto i : idx) s.push_back(logits.voxel(i), labels.at(i));
  return s;
}

inline double ece_at_temperature(const CalibrationSamples& s, double temperature, int n_bins = 15) {
  std::vector<double> conf(s.size());
  std::vector<std::uint8_t> ok(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto p = softmax(s.sample(i), temperature);
    const auto best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    conf[i] = p[best];
    ok[i] = best == s.labels[i];
  }
  return ece(conf, ok, n_bins);
}

struct TemperatureSearch {
  double log_t_min = -3.0;
  double log_t_max = 3.0;
  int grid_points = 61;
  int refine_iterations = 40;
  int n_bins = 15;
};

/// Temperature minimizing ECE: a grid over log T followed by golden-section
/// refinement around the best grid point. T = 1 is always a candidate, so the
/// fitted ECE never exceeds the uncalibrated one.
inline double fit_temperature(const CalibrationSamples& s, const TemperatureSearch& search = {}) {
  if (s.size() == 0) throw DegenerateInput("fit_temperature: no samples");
  if (s.logits.size() != s.size() * kNumClasses) throw InvalidArgument("fit_temperature: malformed samples");
  const bool multi_class = std::any_of(s.labels.begin(), s.labels.end(), [&](auto l) { return l != s.labels[0]; });
  if (!multi_class) throw DegenerateInput("fit_temperature: labels contain a single class");
  if (search.grid_points < 2 || !(search.log_t_max > search.log_t_min))
    throw InvalidArgument("fit_temperature: bad search range");

  auto objective = [&](double log_t) { return ece_at_temperature(s, std::exp(log_t), search.n_bins); };
  const double step = (search.log_t_max - search.log_t_min) / (search.grid_points - 1);
  // Moves away from T = 1 need a real improvement, not rounding noise; exact
  // one-hot logits would otherwise drift to the edge of the search range.
  constexpr double kMinGain = 1e-6;
  double best_log_t = 0.0;
  double best = objective(0.0);
  for (int i = 0; i < search.grid_points; ++i) {
    const double lt = search.log_t_min + i * step;
    const double e = objective(lt);
    if (e < best - (best_log_t == 0.0 ? kMinGain : 0.0)) {
      best = e;
      best_log_t = lt;
    }
  }

  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = std::max(search.log_t_min, best_log_t - step);
  double b = std::min(search.log_t_max, best_log_t + step);
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double fc = objective(c), fd = objective(d);
  for (int it = 0; it < search.refine_iterations; ++it) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = objective(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = objective(d);
    }
  }
  const double refined = fc <= fd ? c : d;
  const double refined_e = std::min(fc, fd);
  if (refined_e < best - (best_log_t == 0.0 ? kMinGain : 0.0)) best_log_t = refined;
  return std::exp(best_log_t);
}

} // namespace bseg
