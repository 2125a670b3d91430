#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "levsim/transduction.hpp"
#include "oracles.hpp"

using namespace levsim;

namespace {

TransferChain chip_chain() {
  TransferChain c;
  c.L_pickup = 0.72e-9;
  c.L_input = 24e-9;
  c.L_parasitic = 33e-9;
  c.M_input = 0.87e-9;
  c.M_Finput = 38e-12;
  c.R_F = 10e3;
  c.noise_floor = 18e-3;
  return c;
}

Trajectory sinusoid_traj(int axis, double amp, double freq, double fs, double duration) {
  Trajectory t;
  t.sample_rate = fs;
  const std::size_t n = static_cast<std::size_t>(duration * fs);
  t.positions.reserve(n);
  t.velocities.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    Vec3 r{}, v{};
    r[axis] = amp * std::sin(2.0 * pi * freq * k / fs);
    v[axis] = amp * 2.0 * pi * freq * std::cos(2.0 * pi * freq * k / fs);
    t.positions.push_back(r);
    t.velocities.push_back(v);
  }
  return t;
}

// Single-bin DFT amplitude at exactly an integer number of cycles.
double tone_amplitude(const std::vector<double>& x, double freq, double fs) {
  double re = 0, im = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double ph = 2.0 * pi * freq * k / fs;
    re += x[k] * std::cos(ph);
    im += x[k] * std::sin(ph);
  }
  return 2.0 * std::hypot(re, im) / x.size();
}

} // namespace

TEST_CASE("transfer ratio and FLL gain match the chip constants") {
  const TransferChain c = chip_chain();
  c.validate();
  CHECK(c.transfer_ratio() == doctest::Approx(0.87 / 57.72).epsilon(1e-12));
  CHECK(c.transfer_ratio() == doctest::Approx(1.5073e-2).epsilon(1e-4));
  CHECK(c.volts_per_phi0() == doctest::Approx(10e3 / 38e-12 * phi0).epsilon(1e-12));
  CHECK(c.volts_per_phi0() == doctest::Approx(0.54417).epsilon(1e-4));
}

TEST_CASE("pickup flux evaluates the quadratic response exactly") {
  PickupModel p;
  p.u = {-7.5e9, -6.0e9, -3.7e9};  // phi0/m^2 (: mphi0/um^2 * 1e9)
  p.v = {64e3, 58e3, 2.8e6};       // phi0/m
  p.w = 0.25;
  Trajectory t;
  t.sample_rate = 1.0;
  t.positions = {{1e-6, -2e-6, 3e-6}, {0, 0, 0}};
  t.velocities = {{0, 0, 0}, {0, 0, 0}};
  const auto f = pickup_flux(p, t);
  const double expect = p.w + p.u[0] * 1e-12 + p.u[1] * 4e-12 + p.u[2] * 9e-12 + p.v[0] * 1e-6 -
                        p.v[1] * 2e-6 + p.v[2] * 3e-6;
  CHECK(f[0] == doctest::Approx(expect).epsilon(1e-14));
  CHECK(f[1] == doctest::Approx(p.w).epsilon(1e-14));
}

TEST_CASE("full chain is linear: volts = q * x for a small sinusoid") {
  const TransferChain chain = chip_chain();
  PickupModel p;
  p.u = {0, 0, 0};
  p.v = {64e3, 58e3, 2.8e6};
  for (int axis : {0, 1, 2}) {
    const double amp = 1e-6, freq = 50.0, fs = 6400.0;
    const auto traj = sinusoid_traj(axis, amp, freq, fs, 1.0);
    const auto volts = transduce(p, chain, traj).volts;
    const double q = linear_response(p, chain, axis);
    CHECK(tone_amplitude(volts, freq, fs) == doctest::Approx(q * amp).epsilon(1e-10));
  }
}

TEST_CASE("eta = 1/q^2 converts a voltage peak area back to <x^2>") {
  const TransferChain chain = chip_chain();
  PickupModel p;
  p.u = {0, 0, 0};
  p.v = {64e3, 58e3, 2.8e6};
  const double amp = 2e-6, freq = 40.0, fs = 5120.0;
  const auto traj = sinusoid_traj(0, amp, freq, fs, 1.0);
  const auto volts = transduce(p, chain, traj).volts;
  // Peak area of a sinusoid of amplitude A in V^2 is A_V^2/2; times eta it
  // must equal <x^2> = amp^2/2.
  const double Av = tone_amplitude(volts, freq, fs);
  const double eta = pickup_efficiency(p, chain, 0);
  CHECK(Av * Av / 2.0 * eta == doctest::Approx(amp * amp / 2.0).epsilon(1e-9));
}

TEST_CASE("quadratic response puts a second harmonic at the R^PU ratio") {
  const TransferChain chain = chip_chain();
  PickupModel p;
  p.u = {-7.5e9, 0, 0};
  p.v = {64e3, 1, 1};
  const double amp = 10e-6, freq = 40.0, fs = 5120.0;
  const auto traj = sinusoid_traj(0, amp, freq, fs, 1.0);
  const auto volts = transduce(p, chain, traj).volts;
  // x = A sin -> x^2 contributes a 2f tone of amplitude u A^2 / 2 (flux).
  const double A_f = tone_amplitude(volts, freq, fs);
  const double A_2f = tone_amplitude(volts, 2.0 * freq, fs);
  const double eta = pickup_efficiency(p, chain, 0);
  const double ratio = second_harmonic_ratio_pickup(p, eta, 0);  // [1/V^2]
  // Voltage peak areas: P_2f = R * P_f^2.
  const double P_f = A_f * A_f / 2.0;
  const double P_2f = A_2f * A_2f / 2.0;
  CHECK(P_2f == doctest::Approx(ratio * P_f * P_f).epsilon(1e-8));
}

TEST_CASE("R^PU magnitudes for the chip pickup parameters") {
  const TransferChain chain = chip_chain();
  PickupModel p;
  p.u = {-7.5e9, -6.0e9, -3.7e9};
  p.v = {64e3, 58e3, 2.8e6};
  const double Rx = second_harmonic_ratio_pickup(p, pickup_efficiency(p, chain, 0), 0);
  const double Ry = second_harmonic_ratio_pickup(p, pickup_efficiency(p, chain, 1), 1);
  const double Rz = second_harmonic_ratio_pickup(p, pickup_efficiency(p, chain, 2), 2);
  CHECK(Rx == doctest::Approx(2.5e4).epsilon(0.10));
  CHECK(Ry == doctest::Approx(2.3e4).epsilon(0.10));
  CHECK(Rz == doctest::Approx(1.6e-3).epsilon(0.10));
  PickupModel bad = p;
  bad.v[1] = 0.0;
  CHECK_THROWS_AS(second_harmonic_ratio_pickup(bad, 1.0, 1), std::domain_error);
}

TEST_CASE("white flux noise has the configured RMS and zero mean") {
  TransferChain chain = chip_chain();
  const double fs = 10000.0;
  std::vector<double> zeros(200000, 0.0);
  const auto trace = squid_voltage(chain, zeros, fs, true, 77);
  const double k = chain.volts_per_phi0();
  double mean = std::accumulate(trace.volts.begin(), trace.volts.end(), 0.0) / trace.volts.size();
  double var = 0.0;
  for (double v : trace.volts) var += (v - mean) * (v - mean);
  var /= trace.volts.size();
  // sigma_phi = noise_floor * sqrt(fs/2); in volts scaled by k.
  const double sigma_expect = chain.noise_floor * std::sqrt(fs / 2.0) * k;
  CHECK(std::abs(mean) < 5.0 * sigma_expect / std::sqrt((double)trace.volts.size()));
  CHECK(std::sqrt(var) == doctest::Approx(sigma_expect).epsilon(0.01));
  // Determinism: same seed, same trace.
  const auto again = squid_voltage(chain, zeros, fs, true, 77);
  CHECK(again.volts == trace.volts);
}

TEST_CASE("quadrupole pickup estimate reproduces a hand-built gradiometer") {
  // Anti-Helmholtz trap with a gradiometric pickup pair placed off-center
  // below the trap: v_z dominates v_x, v_y (axial symmetry) and w ~ 0 since
  // the dipole vanishes at the field zero.
  CoilAssembly trap;
  trap.loops = {{500e-6, -433e-6, 0, 0, +1}, {500e-6, 433e-6, 0, 0, -1}};
  trap.windings = 15;
  trap.current = 0.5;
  trap.reference_radius = 500e-6;
  ParticleSpec particle;
  particle.radius = 24e-6;
  particle.density = 11340.0;
  PickupGeometry pickup;
  pickup.loops = {{250e-6, 150e-6, 0, 0, +1}, {250e-6, 350e-6, 0, 0, -1}};

  const Vec3 center = find_trap_center(trap, SearchBox{{-1e-4, -1e-4, -1e-4}, {1e-4, 1e-4, 1e-4}});
  const PickupModel est = quadrupole_pickup_estimate(trap, particle, pickup, center);

  // Oracle: direct flux via the full (non-quadrupole) trap field through the
  // same reciprocity dipole, finite-difference first and second derivatives.
  auto flux = [&](const Vec3& d) {
    const Vec3 r = center + d;
    const FieldSample s = field_at(trap, r);
    const Vec3 mdip = (-1.5 * particle.volume() / mu0) * s.B;
    double f = 0.0;
    for (const auto& l : pickup.loops) f += dot(loop_field(l, 1.0, r).B, mdip);
    return f / phi0;
  };
  const double h = 1e-6;
  for (int axis = 0; axis < 3; ++axis) {
    Vec3 dp{}, dm{};
    dp[axis] = h;
    dm[axis] = -h;
    const double v_fd = (flux(dp) - flux(dm)) / (2 * h);
    // u is the quadratic coefficient, i.e. half the second derivative.
    const double u_fd = (flux(dp) - 2 * flux({0, 0, 0}) + flux(dm)) / (2 * h * h);
    // The fit differs from pointwise FD only by quartic terms over the box.
    if (std::abs(u_fd) > 1e-3 * phi0)
      CHECK(est.u[axis] == doctest::Approx(u_fd).epsilon(0.02));
    if (std::abs(v_fd) > 1e-9)
      CHECK(est.v[axis] == doctest::Approx(v_fd).epsilon(0.02));
  }
  // Gradiometric symmetry: z linear response far exceeds x, y.
  CHECK(std::abs(est.v[2]) > 100.0 * std::abs(est.v[0]));
  CHECK(std::abs(est.v[2]) > 100.0 * std::abs(est.v[1]));
  CHECK(std::abs(est.w) < 1e-6 * std::abs(est.v[2]) * 1e-6);

  PickupGeometry empty;
  CHECK_THROWS_AS(quadrupole_pickup_estimate(trap, particle, empty, center),
                  std::invalid_argument);
}
