#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "levsim/constants.hpp"
#include "levsim/potential.hpp"
#include "levsim/vec3.hpp"

namespace levsim {

struct SinusoidalDrive {
  int axis = 0;
  double force_amplitude = 0.0;  // [N]
  double frequency = 0.0;        // [Hz]
  double phase = 0.0;            // [rad]
};

struct SimConfig {
  double timestep = 0.0;       // integration step [s]
  double duration = 0.0;       // [s]
  double sample_rate = 0.0;    // output rate [Hz]
  Vec3 quality_factors;        // Q_i per axis
  Vec3 drive_psd;              // one-sided white force-noise PSD per axis [N^2/Hz]
  std::vector<SinusoidalDrive> drives;
  std::uint64_t rng_seed = 0;
  Vec3 initial_position;       // displacement from the potential origin [m]
  Vec3 initial_velocity;       // [m/s]

  void validate(const Vec3& omega) const {
    const double wmax = std::max({omega.x, omega.y, omega.z});
    if (!(timestep > 0.0) || timestep * wmax >= 0.1)
      throw std::invalid_argument("SimConfig: require timestep * max(omega) < 0.1");
    if (!(sample_rate >= 10.0 * wmax / (2.0 * pi)))
      throw std::invalid_argument("SimConfig: require sample_rate >= 10 * max(omega)/2pi");
    for (int i = 0; i < 3; ++i)
      if (!(quality_factors[i] > 0.0))
        throw std::invalid_argument("SimConfig: quality factors must be > 0");
    if (!(duration > 0.0)) throw std::invalid_argument("SimConfig: duration must be > 0");
  }
};

struct Trajectory {
  double sample_rate = 0.0;    // [Hz]
  std::vector<Vec3> positions;   // [m]
  std::vector<Vec3> velocities;  // [m/s]

  std::size_t size() const { return positions.size(); }
  double duration() const { return positions.size() / sample_rate; }
};

struct IntegrationError : std::runtime_error {
  double time;
  IntegrationError(const std::string& msg, double t) : std::runtime_error(msg), time(t) {}
};

/// Integrate m r'' = F(r) - (m w_i / Q_i) r_i' + F_drive(t) + F_noise(t).
///
/// Scheme: velocity-Verlet splitting with an exact Ornstein-Uhlenbeck
/// substep for damping + noise between the two half-kicks (deterministic
/// part is order 2, the noise enters with the exact sqrt-dt statistics).
/// Deterministic for a fixed seed; output decimated to config.sample_rate.
inline Trajectory integrate(const PotentialModel& model, const SimConfig& config) {
  model.validate();
  config.validate(model.omega);

  const double dt = config.timestep;
  const double per_sample = 1.0 / (config.sample_rate * dt);
  const auto stride = static_cast<std::int64_t>(std::llround(per_sample));
  if (stride < 1 || std::abs(per_sample - static_cast<double>(stride)) > 1e-9 * per_sample)
    throw std::invalid_argument("SimConfig: 1/(sample_rate*timestep) must be a whole number");

  const auto nsteps = static_cast<std::int64_t>(std::llround(config.duration / dt));
  const auto nsamples = nsteps / stride;

  const ForceTables tables(model);
  const double mass = model.mass;

  // Per-axis OU coefficients: v -> c1 v + c2 xi.
  Vec3 c1, c2;
  for (int i = 0; i < 3; ++i) {
    const double gamma = model.omega[i] / config.quality_factors[i];
    c1[i] = std::exp(-gamma * dt);
    const double var =
        config.drive_psd[i] / (2.0 * mass * mass) * (1.0 - c1[i] * c1[i]) / (2.0 * gamma);
    c2[i] = std::sqrt(std::max(0.0, var));
  }

  std::mt19937_64 rng(config.rng_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const bool noisy = config.drive_psd.x > 0 || config.drive_psd.y > 0 || config.drive_psd.z > 0;

  const double u_scale =
      0.5 * mass *
      (model.omega.x * model.omega.x + model.omega.y * model.omega.y +
       model.omega.z * model.omega.z) / 3.0;
  const double v2 = config.initial_velocity.norm2();
  const double u0 = potential_energy(model, config.initial_position) + 0.5 * mass * v2;
  // Expected steady-state energy under the white-noise drive, S Q / (4 m w).
  double e_drive = 0.0;
  for (int i = 0; i < 3; ++i)
    e_drive += config.drive_psd[i] * config.quality_factors[i] / (4.0 * mass * model.omega[i]);
  const double energy_cap =
      1e3 * std::max({u0, e_drive, u_scale * std::max(config.initial_position.norm2(), 1e-12)});
  const double escape2 = model.validity_radius > 0
                             ? model.validity_radius * model.validity_radius
                             : std::numeric_limits<double>::infinity();

  Trajectory out;
  out.sample_rate = config.sample_rate;
  out.positions.reserve(nsamples);
  out.velocities.reserve(nsamples);

  Vec3 r = config.initial_position;
  Vec3 v = config.initial_velocity;
  Vec3 a = tables.accel(r);

  auto drive_accel = [&](double t) {
    Vec3 da{};
    for (const auto& d : config.drives)
      da[d.axis] += d.force_amplitude / mass *
                    std::sin(2.0 * pi * d.frequency * t + d.phase);
    return da;
  };

  for (std::int64_t step = 0; step < nsteps; ++step) {
    const double t = step * dt;
    Vec3 atot = a;
    if (!config.drives.empty()) atot += drive_accel(t);

    // half kick
    v += (0.5 * dt) * atot;
    // half drift
    r += (0.5 * dt) * v;
    // OU damping + noise substep
    for (int i = 0; i < 3; ++i) {
      v[i] *= c1[i];
      if (noisy) v[i] += c2[i] * normal(rng);
    }
    // half drift
    r += (0.5 * dt) * v;
    // half kick at new position
    a = tables.accel(r);
    Vec3 atot2 = a;
    if (!config.drives.empty()) atot2 += drive_accel(t + dt);
    v += (0.5 * dt) * atot2;

    if (!std::isfinite(r.x) || !std::isfinite(r.y) || !std::isfinite(r.z))
      throw IntegrationError("integrate: non-finite state (reduce timestep)", t);
    if (r.norm2() > escape2)
      throw IntegrationError("integrate: particle left the validity radius at t=" +
                                 std::to_string(t),
                             t);
    if ((step & 1023) == 0) {
      const double e = potential_energy(model, r) + 0.5 * mass * v.norm2();
      if (e > energy_cap)
        throw IntegrationError("integrate: energy blow-up (reduce timestep)", t);
    }

    if ((step + 1) % stride == 0) {
      out.positions.push_back(r);
      out.velocities.push_back(v);
    }
  }
  return out;
}

/// Per-axis running mean of squared displacement about the running mean
/// position, over non-overlapping windows of the given length.
struct MeanSquareSeries {
  double window = 0.0;        // [s]
  double dt = 0.0;            // spacing of entries [s] (= window)
  std::vector<Vec3> values;   // <r_i^2> per window
};

inline MeanSquareSeries mean_square_amplitudes(const Trajectory& traj, double window) {
  const auto wlen = static_cast<std::size_t>(std::llround(window * traj.sample_rate));
  if (wlen < 2 || wlen > traj.size())
    throw std::invalid_argument("mean_square_amplitudes: window longer than trajectory");
  MeanSquareSeries out;
  out.window = window;
  out.dt = wlen / traj.sample_rate;
  const std::size_t nwin = traj.size() / wlen;
  out.values.reserve(nwin);
  for (std::size_t w = 0; w < nwin; ++w) {
    Vec3 mean{}, msq{};
    for (std::size_t k = 0; k < wlen; ++k) mean += traj.positions[w * wlen + k];
    mean *= 1.0 / wlen;
    for (std::size_t k = 0; k < wlen; ++k) {
      const Vec3 d = traj.positions[w * wlen + k] - mean;
      msq += {d.x * d.x, d.y * d.y, d.z * d.z};
    }
    msq *= 1.0 / wlen;
    out.values.push_back(msq);
  }
  return out;
}

/// Whole-trajectory mean square displacement about the mean, per axis.
inline Vec3 total_mean_square(const Trajectory& traj) {
  Vec3 mean{};
  for (const auto& p : traj.positions) mean += p;
  mean *= 1.0 / traj.size();
  Vec3 msq{};
  for (const auto& p : traj.positions) {
    const Vec3 d = p - mean;
    msq += {d.x * d.x, d.y * d.y, d.z * d.z};
  }
  return (1.0 / traj.size()) * msq;
}

/// White-noise drive levels that bring the simulated RMS displacements to the
/// targets within 20%. Seeds from the analytic fluctuation-dissipation balance
/// <r^2> = S_F Q / (4 m^2 w^3) and rescales iteratively (<= 10 iterations).
inline Vec3 steady_state_tune(const PotentialModel& model, SimConfig config,
                              const Vec3& target_rms, double probe_duration = 0.0) {
  for (int i = 0; i < 3; ++i)
    if (target_rms[i] < 0.0)
      throw std::invalid_argument("steady_state_tune: targets must be >= 0");
  if (target_rms.norm2() == 0.0) return {0, 0, 0};

  Vec3 psd;
  for (int i = 0; i < 3; ++i) {
    const double w = model.omega[i];
    psd[i] = 4.0 * model.mass * model.mass * w * w * w * target_rms[i] * target_rms[i] /
             config.quality_factors[i];
  }

  if (probe_duration > 0.0) config.duration = probe_duration;
  config.drives.clear();
  config.initial_position = {0, 0, 0};
  config.initial_velocity = {0, 0, 0};

  for (int iter = 0; iter < 10; ++iter) {
    config.drive_psd = psd;
    config.rng_seed = config.rng_seed * 6364136223846793005ULL + 1442695040888963407ULL;
    const Trajectory traj = integrate(model, config);
    const Vec3 msq = total_mean_square(traj);
    bool ok = true;
    for (int i = 0; i < 3; ++i) {
      if (target_rms[i] <= 0.0) {
        psd[i] = 0.0;
        continue;
      }
      const double rms = std::sqrt(msq[i]);
      const double ratio = rms / target_rms[i];
      if (ratio < 0.8 || ratio > 1.2) ok = false;
      psd[i] /= ratio * ratio;
    }
    if (ok) return config.drive_psd;
  }
  throw std::runtime_error("steady_state_tune: no convergence within 10 iterations");
}

} // namespace levsim
