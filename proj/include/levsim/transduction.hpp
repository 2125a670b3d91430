#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "levsim/constants.hpp"
#include "levsim/dynamics.hpp"
#include "levsim/fieldmodel.hpp"
#include "levsim/potential.hpp"
#include "levsim/vec3.hpp"

namespace levsim {

/// Per-axis quadratic pickup response, referenced to the series-connected
/// pickup pair: phi = sum_i u_i r_i^2 + v_i r_i + w, in units of phi0.
struct PickupModel {
  Vec3 u;           // [phi0 / m^2]
  Vec3 v;           // [phi0 / m]
  double w = 0.0;   // [phi0]
};

/// Inductance ladder and flux-locked-loop constants.
struct TransferChain {
  double L_pickup = 0.0;      // [H]
  double L_input = 0.0;       // [H]
  double L_parasitic = 0.0;   // [H]
  double M_input = 0.0;       // [H]
  double M_Finput = 0.0;      // [H]
  double R_F = 0.0;           // [Ohm]
  double noise_floor = 0.0;   // [phi0 / sqrt(Hz)], referred to the SQUID input

  void validate() const {
    if (!(L_pickup > 0.0 && L_input > 0.0 && L_parasitic > 0.0))
      throw std::invalid_argument("TransferChain: inductances must be > 0");
    if (!(R_F > 0.0)) throw std::invalid_argument("TransferChain: R_F must be > 0");
  }

  /// phi_SQUID / phi_pickup = M_input / (L_pickup + L_input + L_parasitic).
  double transfer_ratio() const {
    const double denom = L_pickup + L_input + L_parasitic;
    if (denom == 0.0) throw std::domain_error("TransferChain: zero inductance sum");
    return M_input / denom;
  }

  /// FLL output volts per phi0 of SQUID flux, R_F / M_Finput * phi0.
  double volts_per_phi0() const { return R_F / M_Finput * phi0; }
};

struct VoltageTrace {
  double sample_rate = 0.0;
  std::vector<double> volts;
};

/// Pickup flux [phi0] along a trajectory.
inline std::vector<double> pickup_flux(const PickupModel& p, const Trajectory& traj) {
  std::vector<double> flux;
  flux.reserve(traj.size());
  for (const auto& r : traj.positions) {
    double f = p.w;
    for (int i = 0; i < 3; ++i) f += p.u[i] * r[i] * r[i] + p.v[i] * r[i];
    flux.push_back(f);
  }
  return flux;
}

/// Linear flux transfer from the pickup pair to the SQUID loop.
inline std::vector<double> flux_transfer(const TransferChain& chain, std::vector<double> flux) {
  const double k = chain.transfer_ratio();
  for (auto& f : flux) f *= k;
  return flux;
}

/// FLL conversion to volts; optional white flux noise at the SQUID input.
inline VoltageTrace squid_voltage(const TransferChain& chain, const std::vector<double>& phi_squid,
                                  double sample_rate, bool add_noise = false,
                                  std::uint64_t seed = 0) {
  VoltageTrace out;
  out.sample_rate = sample_rate;
  out.volts.reserve(phi_squid.size());
  const double k = chain.volts_per_phi0() / phi0;  // volts per phi0 unit
  if (!add_noise) {
    for (double f : phi_squid) out.volts.push_back(k * f * phi0);
    return out;
  }
  // White flux noise of one-sided PSD noise_floor^2 [phi0^2/Hz]: per-sample
  // sigma = noise_floor * sqrt(fs / 2).
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, chain.noise_floor * std::sqrt(sample_rate / 2.0));
  for (double f : phi_squid) out.volts.push_back(k * (f + normal(rng)) * phi0);
  return out;
}

/// Full chain: trajectory -> pickup flux -> SQUID flux -> volts.
inline VoltageTrace transduce(const PickupModel& pickup, const TransferChain& chain,
                              const Trajectory& traj, bool add_noise = false,
                              std::uint64_t seed = 0) {
  return squid_voltage(chain, flux_transfer(chain, pickup_flux(pickup, traj)), traj.sample_rate,
                       add_noise, seed);
}

/// Linear voltage response q_i = dV/dr_i [V/m] of the full chain.
inline double linear_response(const PickupModel& pickup, const TransferChain& chain, int axis) {
  return pickup.v[axis] * chain.transfer_ratio() * chain.volts_per_phi0();
}

/// Pickup efficiency eta_i = 1/q_i^2 [m^2/V^2]: <x_i^2> = eta_i A_fi for
/// spectral peak areas in V^2.
inline double pickup_efficiency(const PickupModel& pickup, const TransferChain& chain, int axis) {
  const double q = linear_response(pickup, chain, axis);
  if (q == 0.0) throw std::domain_error("pickup_efficiency: zero linear response");
  return 1.0 / (q * q);
}

/// R_i^PU = u_i^2 eta_i / (2 v_i^2): harmonic-to-squared-fundamental peak-area
/// ratio produced by the quadratic pickup response.
inline double second_harmonic_ratio_pickup(const PickupModel& pickup, double eta, int axis) {
  if (pickup.v[axis] == 0.0)
    throw std::domain_error("second_harmonic_ratio_pickup: v = 0, ratio undefined");
  const double u = pickup.u[axis];
  const double v = pickup.v[axis];
  return u * u * eta / (2.0 * v * v);
}

/// Pickup loop set for the geometric flux estimate.
struct PickupGeometry {
  std::vector<Loop> loops;  // polarity = series winding sense
};

/// Estimate the per-axis pickup response from geometry: the particle is an
/// ideal diamagnet point dipole m = -(3V/2mu0) B_trap(r), and the flux its
/// image couples into each pickup loop follows from reciprocity,
/// phi = B_loop(r; unit current) . m. Quadratic fits over a +/-5 um box per
/// axis give u_i, v_i, w.
inline PickupModel quadrupole_pickup_estimate(const CoilAssembly& trap, const ParticleSpec& particle,
                                              const PickupGeometry& pickup, const Vec3& center,
                                              double box_half = 5e-6) {
  if (pickup.loops.empty())
    throw std::invalid_argument("quadrupole_pickup_estimate: no pickup loops");

  auto flux_at = [&](const Vec3& displacement) {
    const Vec3 r = center + displacement;
    const Vec3 mdip = (-1.5 * particle.volume() / mu0) * field_at(trap, r).B;
    double f = 0.0;
    for (const auto& l : pickup.loops) f += dot(loop_field(l, 1.0, r).B, mdip);
    return f / phi0;
  };

  PickupModel model;
  model.w = flux_at({0, 0, 0});
  const int n = 11;
  for (int axis = 0; axis < 3; ++axis) {
    // least-squares quadratic fit of flux(d) along this axis
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0, sy = 0, sxy = 0, sx2y = 0;
    for (int k = 0; k < n; ++k) {
      const double d = -box_half + 2.0 * box_half * k / (n - 1.0);
      Vec3 disp{};
      disp[axis] = d;
      const double y = flux_at(disp);
      s0 += 1;
      s1 += d;
      s2 += d * d;
      s3 += d * d * d;
      s4 += d * d * d * d;
      sy += y;
      sxy += d * y;
      sx2y += d * d * y;
    }
    // Solve the 3x3 normal equations for [c, b, a] in y = a d^2 + b d + c.
    const double M[3][3] = {{s0, s1, s2}, {s1, s2, s3}, {s2, s3, s4}};
    const double rhs[3] = {sy, sxy, sx2y};
    double det = M[0][0] * (M[1][1] * M[2][2] - M[1][2] * M[2][1]) -
                 M[0][1] * (M[1][0] * M[2][2] - M[1][2] * M[2][0]) +
                 M[0][2] * (M[1][0] * M[2][1] - M[1][1] * M[2][0]);
    if (std::abs(det) < 1e-300)
      throw std::runtime_error("quadrupole_pickup_estimate: degenerate geometry");
    auto solve3 = [&](int col) {
      double A[3][3];
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) A[r][c] = (c == col) ? rhs[r] : M[r][c];
      return (A[0][0] * (A[1][1] * A[2][2] - A[1][2] * A[2][1]) -
              A[0][1] * (A[1][0] * A[2][2] - A[1][2] * A[2][0]) +
              A[0][2] * (A[1][0] * A[2][1] - A[1][1] * A[2][0])) /
             det;
    };
    model.v[axis] = solve3(1);
    model.u[axis] = solve3(2);
  }
  return model;
}

} // namespace levsim
