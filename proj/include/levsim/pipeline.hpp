#pragma once

#include <json.hpp>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "levsim/analysis.hpp"
#include "levsim/config.hpp"
#include "levsim/dynamics.hpp"
#include "levsim/fieldmodel.hpp"
#include "levsim/potential.hpp"
#include "levsim/transduction.hpp"

namespace levsim {

inline Mat3 to_mat3(const GammaMatrix& g) {
  Mat3 m;
  m.m = g.g;
  return m;
}

struct StageError : std::runtime_error {
  std::string stage;
  StageError(const std::string& stage_, const std::string& msg)
      : std::runtime_error(stage_ + ": " + msg), stage(stage_) {}
};

/// Trap characterization: equilibrium, frequencies, geometric factors, lift.
struct TrapReport {
  Vec3 field_zero;     // |B| minimum [m]
  Vec3 equilibrium;    // gravity-shifted minimum [m]
  Vec3 omega;          // at the field zero, magnetic only [rad/s]
  Vec3 zeta;           // geometric factors
  double lift_force = 0.0;  // F_z on the surface-resting particle at 0.8 A [N]
};

inline TrapReport characterize_trap(const MasterConfig& cfg) {
  TrapReport rep;
  try {
    rep.field_zero = find_trap_center(cfg.geometry, cfg.search_box);
    rep.equilibrium = find_equilibrium(cfg.geometry, cfg.particle, cfg.search_box);
    rep.omega = trap_frequencies(cfg.geometry, cfg.particle, cfg.search_box);
    rep.zeta = geometric_factors(cfg.geometry, cfg.search_box);
    CoilAssembly lifted = cfg.geometry;
    lifted.current = 0.8;
    const Vec3 rest{0.0, 0.0, cfg.surface_z + cfg.particle.radius};
    rep.lift_force = diamagnet_force(lifted, cfg.particle, rest).z;
  } catch (const std::exception& e) {
    throw StageError("characterize_trap", e.what());
  }
  return rep;
}

/// Sample diamagnet + gravity forces about the equilibrium and fit the quartic
/// potential model.
inline PotentialFit fit_trap_potential(const MasterConfig& cfg, const Vec3& equilibrium) {
  try {
    const double mg = cfg.particle.mass() * g_earth;
    std::vector<std::pair<Vec3, Vec3>> samples;
    const int n = cfg.fit.grid_points;
    const double h = cfg.fit.box_half;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
          const Vec3 r{equilibrium.x - h + 2.0 * h * i / (n - 1.0),
                       equilibrium.y - h + 2.0 * h * j / (n - 1.0),
                       equilibrium.z - h + 2.0 * h * k / (n - 1.0)};
          Vec3 F = diamagnet_force(cfg.geometry, cfg.particle, r);
          F.z -= mg;
          samples.push_back({r, F});
        }
    return fit_potential(samples, cfg.particle.mass(), equilibrium, cfg.fit.validity_radius);
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError("fit_potential", e.what());
  }
}

/// Per-mode fundamental and second-harmonic search bands [Hz] predicted from
/// the fitted model (the FEM-window role), shifted by the mean expected pull.
struct PredictedBands {
  ModeBands fundamental;
  ModeBands harmonic;
};

inline PredictedBands predict_bands(const PotentialModel& model, const Vec3& target_rms,
                                    const AnalysisOptions& opt) {
  const Vec3 msq{target_rms.x * target_rms.x, target_rms.y * target_rms.y,
                 target_rms.z * target_rms.z};
  const Vec3 pull = frequency_pull(model, msq);
  PredictedBands bands;
  for (int i = 0; i < 3; ++i) {
    const double f = (model.omega[i] + pull[i]) / (2.0 * pi);
    bands.fundamental[i] = {f - opt.band_halfwidth_hz, f + opt.band_halfwidth_hz};
    bands.harmonic[i] = {2.0 * f - opt.harmonic_halfwidth_hz, 2.0 * f + opt.harmonic_halfwidth_hz};
  }
  // Neighbouring fundamentals must not share frequencies: clip at midpoints.
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      if (i == j) continue;
      const double fi = (model.omega[i] + pull[i]) / (2.0 * pi);
      const double fj = (model.omega[j] + pull[j]) / (2.0 * pi);
      const double mid = 0.5 * (fi + fj);
      if (fi < fj && bands.fundamental[i][1] > mid) bands.fundamental[i][1] = mid;
      if (fi > fj && bands.fundamental[i][0] < mid) bands.fundamental[i][0] = mid;
    }
  return bands;
}

/// Per-cell pulling study as in the measurement protocol: for target mode j,
/// restrict to chunks where the other modes are quiet, then regress every f_i
/// on A_j alone.
struct PullingStudy {
  Mat3 slopes;         // d f_i / d A_j [Hz per signal^2]
  Mat3 intercepts;     // [Hz]
  std::array<int, 3> chunks_used{};
};

inline PullingStudy pulling_study(const std::vector<ChunkResult>& chunks, double quiet_percentile) {
  PullingStudy study;
  for (int j = 0; j < 3; ++j) {
    const auto quiet = filter_chunks(chunks, j, quiet_percentile);
    if (quiet.size() < 5)
      throw StageError("fit_pulling",
                       "fewer than 5 quiet chunks for mode " + std::to_string(j));
    study.chunks_used[j] = static_cast<int>(quiet.size());
    for (int i = 0; i < 3; ++i) {
      double sa = 0, sf = 0, saa = 0, saf = 0;
      for (const auto& c : quiet) {
        sa += c.peaks[j].area;
        sf += c.peaks[i].frequency;
        saa += c.peaks[j].area * c.peaks[j].area;
        saf += c.peaks[j].area * c.peaks[i].frequency;
      }
      const double n = static_cast<double>(quiet.size());
      const double den = n * saa - sa * sa;
      if (den <= 0.0)
        throw StageError("fit_pulling", "singular regression in cell (" + std::to_string(i) + "," +
                                            std::to_string(j) + ")");
      study.slopes(i, j) = (n * saf - sa * sf) / den;
      study.intercepts(i, j) = (sf - study.slopes(i, j) * sa) / n;
    }
  }
  return study;
}

struct ReproduceResult {
  TrapReport trap;
  PotentialFit fit;
  Vec3 drive_psd;             // tuned white-noise force PSD [N^2/Hz]
  Trajectory trajectory;
  VoltageTrace voltage;
  PredictedBands bands;
  std::vector<ChunkResult> chunks;
  PullingStudy pulling;
  Vec3 eta;                   // fitted pickup efficiencies [m^2/V^2]
  Vec3 eta_true;              // from the transfer chain, for comparison
  Vec3 mode_energy;           // [J]
  std::array<double, 3> tau_energy{};   // energy correlation times [s]
  std::array<double, 3> quality{};      // Q = omega * tau
  std::array<double, 3> hist_distance{};  // observed-vs-model sup-CDF gap
  std::array<Histogram, 3> observed_hist;
  std::array<Histogram, 3> model_hist;
};

/// Full chain: characterize -> fit -> tune -> integrate -> transduce ->
/// chunk -> pulling fit -> histograms -> energy statistics.
inline ReproduceResult reproduce(const MasterConfig& cfg) {
  ReproduceResult out;
  out.trap = characterize_trap(cfg);
  out.fit = fit_trap_potential(cfg, out.trap.equilibrium);
  const PotentialModel& model = out.fit.model;

  try {
    SimConfig tune_cfg = cfg.sim;
    out.drive_psd = steady_state_tune(model, tune_cfg, cfg.target_rms,
                                      std::min(cfg.sim.duration, 120.0));
  } catch (const std::exception& e) {
    throw StageError("steady_state_tune", e.what());
  }

  try {
    SimConfig run = cfg.sim;
    run.drive_psd = out.drive_psd;
    out.trajectory = integrate(model, run);
  } catch (const std::exception& e) {
    throw StageError("integrate", e.what());
  }

  try {
    out.voltage = transduce(cfg.pickup, cfg.chain, out.trajectory, cfg.pickup_noise,
                            cfg.sim.rng_seed ^ 0x9e3779b97f4a7c15ULL);
  } catch (const std::exception& e) {
    throw StageError("transduce", e.what());
  }

  out.bands = predict_bands(model, cfg.target_rms, cfg.analysis);
  try {
    const auto seg =
        static_cast<std::size_t>(cfg.analysis.segment_seconds * cfg.sim.sample_rate);
    out.chunks = chunk_analysis(out.voltage.volts, cfg.sim.sample_rate,
                                cfg.analysis.chunk_seconds, out.bands.fundamental, seg, {},
                                cfg.analysis.harmonic_halfwidth_hz);
  } catch (const std::exception& e) {
    throw StageError("chunk_analysis", e.what());
  }

  out.pulling = pulling_study(out.chunks, cfg.analysis.quiet_percentile);
  // Both slopes and coefficients are in Hz per (their respective) squared
  // amplitude, so the per-column ratio directly yields eta [m^2/V^2].
  const Mat3 coeff = pulling_coefficients(to_mat3(pulling_matrix(model)), model.omega);
  out.eta = efficiencies_from_slopes(out.pulling.slopes, coeff);
  for (int i = 0; i < 3; ++i) out.eta_true[i] = pickup_efficiency(cfg.pickup, cfg.chain, i);

  out.mode_energy = mode_energies(out.trajectory, model.mass, model.omega);
  for (int i = 0; i < 3; ++i) {
    try {
      out.quality[i] = quality_from_energy_decay(out.trajectory, model.mass, model.omega[i], i,
                                                 std::min(cfg.sim.duration / 10.0, 400.0));
      out.tau_energy[i] = out.quality[i] / model.omega[i];
    } catch (const std::exception&) {
      out.quality[i] = 0.0;  // too little data for this mode; report as absent
      out.tau_energy[i] = 0.0;
    }
  }

  // Observed histograms vs the pulling-model overlay: apply Eq. (3) with the
  // fitted eta to each chunk's areas.
  const std::vector<ChunkResult> complete = [&] {
    std::vector<ChunkResult> v;
    for (const auto& c : out.chunks)
      if (c.complete()) v.push_back(c);
    return v;
  }();
  if (complete.size() >= 5) {
    for (int i = 0; i < 3; ++i) {
      std::vector<double> observed, modeled;
      for (const auto& c : complete) {
        observed.push_back(c.peaks[i].frequency);
        Vec3 msq;
        for (int j = 0; j < 3; ++j) msq[j] = std::max(0.0, out.eta[j] * c.peaks[j].area);
        const Vec3 pull = frequency_pull(model, msq);
        modeled.push_back((model.omega[i] + pull[i]) / (2.0 * pi));
      }
      // Model curves carry the fitted-vs-true frequency offset; center both
      // samples so the comparison is about distribution shape.
      double mo = 0, mm = 0;
      for (double v : observed) mo += v;
      for (double v : modeled) mm += v;
      mo /= observed.size();
      mm /= modeled.size();
      for (double& v : modeled) v += mo - mm;
      out.hist_distance[i] = sup_cdf_distance(observed, modeled);
      double lo = 1e300, hi = -1e300;
      for (double v : observed) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      for (double v : modeled) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      const double pad = 1e-3 * (hi - lo) + 1e-9;
      out.observed_hist[i] =
          make_histogram(observed, lo - pad, hi + pad, cfg.analysis.histogram_bins);
      out.model_hist[i] = make_histogram(modeled, lo - pad, hi + pad, cfg.analysis.histogram_bins);
    }
  }
  return out;
}

inline nlohmann::json trap_report_json(const TrapReport& t) {
  auto v3 = [](const Vec3& v) { return nlohmann::json::array({v.x, v.y, v.z}); };
  return {{"field_zero_m", v3(t.field_zero)},
          {"equilibrium_m", v3(t.equilibrium)},
          {"frequency_hz", v3((1.0 / (2.0 * pi)) * t.omega)},
          {"zeta", v3(t.zeta)},
          {"lift_force_n_at_0p8a", t.lift_force}};
}

} // namespace levsim
