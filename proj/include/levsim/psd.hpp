#pragma once

#include <fftw3.h>

#include <cmath>
#include <cstddef>
#include <mutex>
#include <stdexcept>
#include <vector>

#include "levsim/constants.hpp"

namespace levsim {

/// One-sided power spectral density, units [x^2/Hz].
struct Psd {
  std::vector<double> freq;
  std::vector<double> density;
  double df = 0.0;

  std::size_t size() const { return freq.size(); }

  /// Integrated power over [f_lo, f_hi] (inclusive bin centers).
  double band_power(double f_lo, double f_hi) const {
    double p = 0.0;
    for (std::size_t i = 0; i < freq.size(); ++i)
      if (freq[i] >= f_lo && freq[i] <= f_hi) p += density[i] * df;
    return p;
  }

  double total_power() const { return band_power(0.0, freq.empty() ? 0.0 : freq.back()); }
};

namespace detail {

// FFTW plan creation is not thread safe.
inline std::mutex& fftw_mutex() {
  static std::mutex m;
  return m;
}

inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 0.5 * (1.0 - std::cos(2.0 * pi * i / n));
  return w;
}

} // namespace detail

/// Welch periodogram: Hann window, 50% overlap, mean removed per segment,
/// normalized so that sum(density)*df equals the signal variance (Parseval).
inline Psd welch_psd(const std::vector<double>& x, double sample_rate, std::size_t segment_length) {
  if (segment_length < 8) throw std::invalid_argument("welch_psd: segment too short");
  if (x.size() < segment_length) throw std::invalid_argument("welch_psd: signal shorter than segment");
  if (!(sample_rate > 0.0)) throw std::invalid_argument("welch_psd: sample_rate must be > 0");

  const std::size_t n = segment_length;
  const std::size_t hop = n / 2;
  const std::size_t nseg = (x.size() - n) / hop + 1;
  const std::size_t nbin = n / 2 + 1;
  const std::vector<double> win = detail::hann_window(n);
  double wss = 0.0;  // window sum of squares
  for (double w : win) wss += w * w;

  std::vector<double> in(n);
  std::vector<fftw_complex> out(nbin);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(detail::fftw_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), out.data(), FFTW_ESTIMATE);
  }

  Psd psd;
  psd.df = sample_rate / n;
  psd.freq.resize(nbin);
  psd.density.assign(nbin, 0.0);
  for (std::size_t k = 0; k < nbin; ++k) psd.freq[k] = k * psd.df;

  for (std::size_t s = 0; s < nseg; ++s) {
    const double* seg = x.data() + s * hop;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += seg[i];
    mean /= n;
    for (std::size_t i = 0; i < n; ++i) in[i] = (seg[i] - mean) * win[i];
    fftw_execute(plan);
    for (std::size_t k = 0; k < nbin; ++k) {
      const double p = out[k][0] * out[k][0] + out[k][1] * out[k][1];
      const double one_sided = (k == 0 || k == n / 2) ? 1.0 : 2.0;
      psd.density[k] += one_sided * p / (sample_rate * wss);
    }
  }
  {
    std::lock_guard<std::mutex> lock(detail::fftw_mutex());
    fftw_destroy_plan(plan);
  }
  for (auto& d : psd.density) d /= nseg;
  return psd;
}

} // namespace levsim
