#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "levsim/dynamics.hpp"
#include "levsim/psd.hpp"
#include "levsim/vec3.hpp"

namespace levsim {

/// A spectral peak: power-weighted centroid frequency and baseline-subtracted
/// integrated area. `found == false` marks an absent peak (frequency and area
/// are then zero) so downstream fits can skip the chunk.
struct PeakEstimate {
  double frequency = 0.0;
  double area = 0.0;      // units of signal^2 (PSD integrated over the peak)
  double baseline = 0.0;  // local flank-median density level
  bool found = false;
};

struct PeakOptions {
  std::size_t half_width = 12;     // bins integrated on each side of the maximum
  std::size_t flank_width = 24;    // bins of flank used for the median baseline
  double prominence = 5.0;         // peak maximum must exceed prominence * baseline
};

/// Locate the dominant peak inside [f_lo, f_hi] of a one-sided PSD.
inline PeakEstimate find_peak(const Psd& psd, double f_lo, double f_hi,
                              const PeakOptions& opt = {}) {
  if (!(f_lo < f_hi)) throw std::invalid_argument("find_peak: empty band");
  std::size_t lo = psd.size(), hi = 0;
  for (std::size_t i = 0; i < psd.size(); ++i) {
    if (psd.freq[i] >= f_lo && lo == psd.size()) lo = i;
    if (psd.freq[i] <= f_hi) hi = i;
  }
  if (lo >= hi) throw std::invalid_argument("find_peak: band contains no bins");

  std::size_t imax = lo;
  for (std::size_t i = lo; i <= hi; ++i)
    if (psd.density[i] > psd.density[imax]) imax = i;

  // Median of the flanks just outside the integration window.
  std::vector<double> flank;
  const std::size_t w = opt.half_width;
  for (std::size_t k = 1; k <= opt.flank_width; ++k) {
    if (imax >= w + k) flank.push_back(psd.density[imax - w - k]);
    if (imax + w + k < psd.size()) flank.push_back(psd.density[imax + w + k]);
  }
  PeakEstimate peak;
  if (flank.empty()) return peak;
  std::nth_element(flank.begin(), flank.begin() + flank.size() / 2, flank.end());
  peak.baseline = flank[flank.size() / 2];

  if (psd.density[imax] < opt.prominence * peak.baseline) return peak;  // not found

  const std::size_t a = (imax > w) ? imax - w : 0;
  const std::size_t b = std::min(imax + w, psd.size() - 1);
  double power = 0.0, moment = 0.0;
  for (std::size_t i = a; i <= b; ++i) {
    const double excess = psd.density[i] - peak.baseline;
    if (excess <= 0.0) continue;
    power += excess;
    moment += excess * psd.freq[i];
  }
  if (power <= 0.0) return peak;
  peak.frequency = moment / power;
  peak.area = power * psd.df;
  peak.found = true;
  return peak;
}

/// Per-mode frequency search bands [f_lo, f_hi].
using ModeBands = std::array<std::array<double, 2>, 3>;

/// One analysis chunk: start time and the three mode peaks.
struct ChunkResult {
  double t_start = 0.0;
  std::array<PeakEstimate, 3> peaks;

  bool complete() const { return peaks[0].found && peaks[1].found && peaks[2].found; }
  double total_area() const { return peaks[0].area + peaks[1].area + peaks[2].area; }
};

/// Split a signal into consecutive chunks and extract the three mode peaks
/// from each chunk's Welch PSD. With harmonic_veto > 0, a peak that lands
/// within that distance of twice another mode's measured fundamental is
/// rejected: the quadratic pickup makes second harmonics, and a strongly
/// pulled mode can drag its harmonic into a neighbouring search band.
inline std::vector<ChunkResult> chunk_analysis(const std::vector<double>& x, double sample_rate,
                                               double chunk_seconds, const ModeBands& bands,
                                               std::size_t segment_length,
                                               const PeakOptions& opt = {},
                                               double harmonic_veto = 0.0) {
  const std::size_t chunk_n = static_cast<std::size_t>(chunk_seconds * sample_rate);
  if (chunk_n < segment_length)
    throw std::invalid_argument("chunk_analysis: chunk shorter than a PSD segment");
  std::vector<ChunkResult> out;
  for (std::size_t start = 0; start + chunk_n <= x.size(); start += chunk_n) {
    std::vector<double> chunk(x.begin() + start, x.begin() + start + chunk_n);
    const Psd psd = welch_psd(chunk, sample_rate, segment_length);
    ChunkResult res;
    res.t_start = start / sample_rate;
    for (int m = 0; m < 3; ++m) res.peaks[m] = find_peak(psd, bands[m][0], bands[m][1], opt);
    if (harmonic_veto > 0.0)
      for (int m = 0; m < 3; ++m)
        for (int k = 0; k < 3; ++k)
          if (k != m && res.peaks[m].found && res.peaks[k].found &&
              std::abs(res.peaks[m].frequency - 2.0 * res.peaks[k].frequency) < harmonic_veto)
            res.peaks[m].found = false;
    out.push_back(res);
  }
  return out;
}

/// Keep complete chunks whose *other*-mode areas sit below the given
/// percentile: studying mode i, chunks where the remaining modes ran hot are
/// dropped (their pulling contaminates the f_i vs A_i relation).
inline std::vector<ChunkResult> filter_chunks(const std::vector<ChunkResult>& chunks,
                                              int active_mode, double quiet_percentile = 0.30) {
  if (!(quiet_percentile > 0.0 && quiet_percentile <= 1.0))
    throw std::invalid_argument("filter_chunks: percentile must be in (0, 1]");
  if (active_mode < 0 || active_mode > 2)
    throw std::invalid_argument("filter_chunks: active_mode must be 0, 1 or 2");
  std::vector<ChunkResult> complete;
  for (const auto& c : chunks)
    if (c.complete()) complete.push_back(c);
  if (complete.empty())
    throw std::runtime_error("filter_chunks: no complete chunks; loosen the percentile");
  double cutoff[3];
  for (int j = 0; j < 3; ++j) {
    if (j == active_mode) continue;
    std::vector<double> areas;
    for (const auto& c : complete) areas.push_back(c.peaks[j].area);
    std::sort(areas.begin(), areas.end());
    const auto k = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(quiet_percentile * areas.size())));
    cutoff[j] = areas[k - 1];
  }
  std::vector<ChunkResult> out;
  for (const auto& c : complete) {
    bool quiet = true;
    for (int j = 0; j < 3; ++j)
      if (j != active_mode && c.peaks[j].area > cutoff[j]) quiet = false;
    if (quiet) out.push_back(c);
  }
  if (out.empty()) throw std::runtime_error("filter_chunks: empty selection; loosen the percentile");
  return out;
}

/// Multilinear frequency-pulling fit: across chunks, regress each mode
/// frequency on the three peak areas, f_i = f_i0 + sum_j slope_ij A_j.
struct PullingFit {
  Mat3 slopes;       // [Hz / area-unit]
  Vec3 intercepts;   // [Hz]
};

inline PullingFit fit_pulling_slopes(const std::vector<ChunkResult>& chunks) {
  if (chunks.size() < 5) throw std::invalid_argument("fit_pulling_slopes: need >= 5 chunks");
  const std::size_t n = chunks.size();
  Eigen::MatrixXd A(n, 4);
  for (std::size_t r = 0; r < n; ++r) {
    for (int j = 0; j < 3; ++j) A(r, j) = chunks[r].peaks[j].area;
    A(r, 3) = 1.0;
  }
  PullingFit fit;
  for (int i = 0; i < 3; ++i) {
    Eigen::VectorXd f(n);
    for (std::size_t r = 0; r < n; ++r) f(r) = chunks[r].peaks[i].frequency;
    const Eigen::VectorXd beta = A.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(f);
    for (int j = 0; j < 3; ++j) fit.slopes(i, j) = beta(j);
    fit.intercepts[i] = beta(3);
  }
  return fit;
}

/// Predicted pulling coefficients c_ij = d f_i / d<r_j^2> from a quartic
/// model: c_ii = 3 gamma_ii / (2 pi omega_i), c_ij = 2 gamma_ij / (2 pi
/// omega_i). Slopes against peak areas then satisfy slope_ij = c_ij eta_j.
inline Mat3 pulling_coefficients(const Mat3& gamma, const Vec3& omega) {
  Mat3 c;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      c(i, j) = ((i == j) ? 3.0 : 2.0) * gamma(i, j) / (2.0 * pi * omega[i]);
  return c;
}

/// Per-column least squares over the three cells: eta_j such that
/// slope_ij ~ c_ij eta_j. This is the calibration-free efficiency estimate.
inline Vec3 efficiencies_from_slopes(const Mat3& slopes, const Mat3& coeff) {
  Vec3 eta;
  for (int j = 0; j < 3; ++j) {
    double num = 0.0, den = 0.0;
    for (int i = 0; i < 3; ++i) {
      num += coeff(i, j) * slopes(i, j);
      den += coeff(i, j) * coeff(i, j);
    }
    if (den == 0.0) throw std::domain_error("efficiencies_from_slopes: zero pulling column");
    eta[j] = num / den;
  }
  return eta;
}

/// Through-origin quadratic fit A_h = R A_f^2 over (fundamental, harmonic)
/// peak-area pairs.
inline double harmonic_quadratic_fit(const std::vector<std::array<double, 2>>& pairs) {
  double num = 0.0, den = 0.0;
  for (const auto& p : pairs) {
    num += p[1] * p[0] * p[0];
    den += p[0] * p[0] * p[0] * p[0];
  }
  if (den == 0.0) throw std::invalid_argument("harmonic_quadratic_fit: all fundamentals zero");
  return num / den;
}

/// Normalized autocorrelation of the per-mode mechanical energy fluctuation,
/// E_i(t) = m (v_i^2 + omega_i^2 r_i^2) / 2, out to max_lag samples.
/// Lags are in units of `block` samples: the per-sample energy is block-mean
/// decimated first, which keeps the cost bounded for long traces (the energy
/// envelope varies on the damping timescale, far slower than the sampling).
inline std::vector<double> energy_autocorrelation(const Trajectory& traj, double mass, double omega,
                                                  int axis, std::size_t max_lag,
                                                  std::size_t block = 1) {
  if (block == 0) throw std::invalid_argument("energy_autocorrelation: block must be >= 1");
  const std::size_t n = traj.size() / block;
  if (max_lag >= n) throw std::invalid_argument("energy_autocorrelation: lag exceeds trace");
  std::vector<double> e(n, 0.0);
  for (std::size_t k = 0; k < n * block; ++k) {
    const double x = traj.positions[k][axis], v = traj.velocities[k][axis];
    e[k / block] += 0.5 * mass * (v * v + omega * omega * x * x) / block;
  }
  double mean = 0.0;
  for (double val : e) mean += val;
  mean /= n;
  for (auto& val : e) val -= mean;
  std::vector<double> acf(max_lag + 1);
  for (std::size_t lag = 0; lag <= max_lag; ++lag) {
    double s = 0.0;
    for (std::size_t k = 0; k + lag < n; ++k) s += e[k] * e[k + lag];
    acf[lag] = s / (n - lag);
  }
  const double var = acf[0];
  if (var <= 0.0) throw std::domain_error("energy_autocorrelation: zero variance");
  for (auto& val : acf) val /= var;
  return acf;
}

/// Exponential decay time from a normalized autocorrelation: log-linear fit
/// over the lags where acf stays above `floor`.
inline double autocorrelation_decay_time(const std::vector<double>& acf, double dt,
                                         double floor = 0.1) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t n = 0;
  for (std::size_t lag = 0; lag < acf.size(); ++lag) {
    if (acf[lag] <= floor) break;
    const double t = lag * dt, y = std::log(acf[lag]);
    sx += t;
    sy += y;
    sxx += t * t;
    sxy += t * y;
    ++n;
  }
  if (n < 3) throw std::runtime_error("autocorrelation_decay_time: decay too fast to fit");
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  if (slope >= 0.0) throw std::runtime_error("autocorrelation_decay_time: no decay");
  return -1.0 / slope;
}

/// Quality factor from the energy autocorrelation time: energy relaxes at
/// gamma = omega / Q, so Q = omega * tau.
inline double quality_from_energy_decay(const Trajectory& traj, double mass, double omega, int axis,
                                        double max_lag_seconds) {
  auto lag = static_cast<std::size_t>(max_lag_seconds * traj.sample_rate);
  const std::size_t block = std::max<std::size_t>(1, lag / 2000);
  lag /= block;
  const auto acf = energy_autocorrelation(traj, mass, omega, axis, lag, block);
  return omega * autocorrelation_decay_time(acf, block / traj.sample_rate);
}

struct Histogram {
  std::vector<double> edges;   // size nbins + 1
  std::vector<double> counts;  // size nbins

  double total() const {
    double t = 0;
    for (double c : counts) t += c;
    return t;
  }
};

inline Histogram make_histogram(const std::vector<double>& samples, double lo, double hi,
                                std::size_t nbins) {
  if (!(lo < hi) || nbins == 0) throw std::invalid_argument("make_histogram: bad range");
  Histogram h;
  h.edges.resize(nbins + 1);
  h.counts.assign(nbins, 0.0);
  for (std::size_t i = 0; i <= nbins; ++i) h.edges[i] = lo + (hi - lo) * i / nbins;
  for (double s : samples) {
    if (s < lo || s >= hi) continue;
    const auto bin = static_cast<std::size_t>((s - lo) / (hi - lo) * nbins);
    h.counts[std::min(bin, nbins - 1)] += 1.0;
  }
  return h;
}

/// Two-sample sup-CDF (Kolmogorov-Smirnov) distance.
inline double sup_cdf_distance(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("sup_cdf_distance: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;  // consume ties on both sides
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

/// Mean mechanical energy per mode over a trajectory [J].
inline Vec3 mode_energies(const Trajectory& traj, double mass, const Vec3& omega) {
  Vec3 e{};
  for (std::size_t k = 0; k < traj.size(); ++k)
    for (int i = 0; i < 3; ++i) {
      const double x = traj.positions[k][i], v = traj.velocities[k][i];
      e[i] += 0.5 * mass * (v * v + omega[i] * omega[i] * x * x);
    }
  for (int i = 0; i < 3; ++i) e[i] /= traj.size();
  return e;
}

} // namespace levsim
