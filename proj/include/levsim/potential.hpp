#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "levsim/constants.hpp"
#include "levsim/symtensor.hpp"
#include "levsim/vec3.hpp"

namespace levsim {

// Trap potential to quartic order about its minimum,
//   U = sum_i 1/2 m w_i^2 r_i^2
//     + sum_{ijk} m beta_ijk r_i r_j r_k
//     + sum_{ijkl} m gamma'_ijkl r_i r_j r_k r_l
// with the cubic and quartic sums running over all index tuples. Coefficients
// are stored in this convention only; converters below are explicit.

struct PotentialModel {
  double mass = 0.0;           // [kg]
  Vec3 omega;                  // [rad/s]
  Sym3 beta;                   // [s^-2 m^-1]
  Sym4 gamma_prime;            // [s^-2 m^-2]
  Vec3 origin;                 // expansion point [m]
  double validity_radius = 0.0;

  void validate() const {
    if (!(mass > 0.0)) throw std::invalid_argument("PotentialModel: mass must be > 0");
    for (int i = 0; i < 3; ++i)
      if (!(omega[i] > 0.0)) throw std::invalid_argument("PotentialModel: omega must be > 0");
  }
};

/// 3x3 symmetric quartic matrix of the frequency-pulling potential
/// U_pull = sum_ij m gamma_ij r_i^2 r_j^2.
struct GammaMatrix {
  std::array<double, 9> g{};
  double& operator()(int i, int j) { return g[3 * i + j]; }
  double operator()(int i, int j) const { return g[3 * i + j]; }
};

/// U(r) for displacement r from the expansion origin.
inline double potential_energy(const PotentialModel& m, const Vec3& r) {
  double u = 0.0;
  for (int i = 0; i < 3; ++i) u += 0.5 * m.omega[i] * m.omega[i] * r[i] * r[i];
  for (int i = 0; i <= 2; ++i)
    for (int j = i; j <= 2; ++j)
      for (int k = j; k <= 2; ++k)
        u += Sym3::multiplicity(i, j, k) * m.beta(i, j, k) * r[i] * r[j] * r[k];
  for (int i = 0; i <= 2; ++i)
    for (int j = i; j <= 2; ++j)
      for (int k = j; k <= 2; ++k)
        for (int l = k; l <= 2; ++l)
          u += Sym4::multiplicity(i, j, k, l) * m.gamma_prime(i, j, k, l) * r[i] * r[j] * r[k] *
               r[l];
  return m.mass * u;
}

/// F_i = -dU/dr_i, analytic.
inline Vec3 force(const PotentialModel& m, const Vec3& r) {
  Vec3 f;
  for (int a = 0; a < 3; ++a) {
    double s = m.omega[a] * m.omega[a] * r[a];
    // cubic: dU3/dr_a = 3 sum_{jk} beta_ajk r_j r_k  (tuple sum)
    double q = 0.0;
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) q += m.beta(a, j, k) * r[j] * r[k];
    s += 3.0 * q;
    // quartic: dU4/dr_a = 4 sum_{jkl} gamma'_ajkl r_j r_k r_l
    double c = 0.0;
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l) c += m.gamma_prime(a, j, k, l) * r[j] * r[k] * r[l];
    s += 4.0 * c;
    f[a] = -m.mass * s;
  }
  return f;
}

/// Flattened force-evaluation tables for the integrator hot loop.
struct ForceTables {
  double mass;
  std::array<double, 3> k2;                    // omega_i^2
  std::array<std::array<double, 9>, 3> bq;     // 3 * beta(a,j,k)
  std::array<std::array<double, 27>, 3> gq;    // 4 * gamma'(a,j,k,l)

  explicit ForceTables(const PotentialModel& m) : mass(m.mass) {
    for (int a = 0; a < 3; ++a) {
      k2[a] = m.omega[a] * m.omega[a];
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) bq[a][3 * j + k] = 3.0 * m.beta(a, j, k);
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k)
          for (int l = 0; l < 3; ++l) gq[a][9 * j + 3 * k + l] = 4.0 * m.gamma_prime(a, j, k, l);
    }
  }

  /// Acceleration F/m at displacement r.
  Vec3 accel(const Vec3& r) const {
    Vec3 out;
    for (int a = 0; a < 3; ++a) {
      double s = k2[a] * r[a];
      const auto& B = bq[a];
      const auto& G = gq[a];
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) {
          const double rjk = r[j] * r[k];
          s += B[3 * j + k] * rjk;
          for (int l = 0; l < 3; ++l) s += G[9 * j + 3 * k + l] * rjk * r[l];
        }
      out[a] = -s;
    }
    return out;
  }
};

/// Paper-convention reduction gamma_ii = gamma'_iiii, gamma_ij = gamma'_iijj / 3.
inline GammaMatrix gamma_from_gamma_prime(const PotentialModel& m) {
  GammaMatrix g;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      g(i, j) = (i == j) ? m.gamma_prime(i, i, i, i) : m.gamma_prime(i, i, j, j) / 3.0;
  return g;
}

/// Quartic matrix that makes U_pull = sum_ij m gamma_ij r_i^2 r_j^2 match the
/// stored tuple-sum expansion term by term: the r_i^2 r_j^2 coefficient of the
/// tuple sum is 6 gamma'_iijj, while the double sum contributes 2 gamma_ij,
/// hence gamma_ij = 3 gamma'_iijj. This is the matrix that closes the loop
/// with simulated dynamics.
inline GammaMatrix pulling_matrix(const PotentialModel& m) {
  GammaMatrix g;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      g(i, j) = (i == j) ? m.gamma_prime(i, i, i, i) : 3.0 * m.gamma_prime(i, i, j, j);
  return g;
}

/// Amplitude-dependent frequency shifts,
/// d w_i = 3 gamma_ii <r_i^2>/w_i + sum_{j!=i} 2 gamma_ij <r_j^2>/w_i.
inline Vec3 frequency_pull(const GammaMatrix& g, const Vec3& omega, const Vec3& mean_square) {
  for (int i = 0; i < 3; ++i)
    if (mean_square[i] < 0.0) throw std::invalid_argument("frequency_pull: <r^2> must be >= 0");
  Vec3 dw;
  for (int i = 0; i < 3; ++i) {
    double s = 3.0 * g(i, i) * mean_square[i];
    for (int j = 0; j < 3; ++j)
      if (j != i) s += 2.0 * g(i, j) * mean_square[j];
    dw[i] = s / omega[i];
  }
  return dw;
}

inline Vec3 frequency_pull(const PotentialModel& m, const Vec3& mean_square) {
  return frequency_pull(pulling_matrix(m), m.omega, mean_square);
}

/// Cubic coefficient in the single-axis convention U = ... + (1/3) m b x^3.
/// The stored tuple-sum coefficient beta_iii contributes m beta_iii x^3, so
/// b = 3 beta_iii.
inline double cubic_axis_coefficient(const PotentialModel& m, int axis) {
  return 3.0 * m.beta(axis, axis, axis);
}

/// Mean-square second-harmonic displacement from the trap cubic term:
/// <x_h^2> = b^2 <x_f^2>^2 / (18 w^4) with b the single-axis cubic coefficient.
inline double second_harmonic_msq_trap(const PotentialModel& m, int axis, double msq_fund) {
  const double b = cubic_axis_coefficient(m, axis);
  const double w = m.omega[axis];
  return b * b * msq_fund * msq_fund / (18.0 * w * w * w * w);
}

/// R_i^trap = b^2 eta_i / (18 w_i^4): ratio of harmonic to squared fundamental
/// spectral peak areas expected from trap anharmonicity alone.
inline double second_harmonic_ratio_trap(const PotentialModel& m, double eta, int axis) {
  const double b = cubic_axis_coefficient(m, axis);
  const double w = m.omega[axis];
  return b * b * eta / (18.0 * w * w * w * w);
}

struct PotentialFit {
  PotentialModel model;
  double rms_residual = 0.0;   // [N]
  double rms_force = 0.0;      // [N]
  double condition_number = 0.0;
};

/// Linear least-squares fit of the quartic potential to force samples.
/// Unknowns: w_i^2 (3), beta (10), gamma' (15). Positions are displacements
/// from `origin`; the force is linear in all coefficients.
inline PotentialFit fit_potential(const std::vector<std::pair<Vec3, Vec3>>& samples, double mass,
                                  const Vec3& origin = {}, double validity_radius = 0.0) {
  constexpr int ncoef = 28;
  const int ns = static_cast<int>(samples.size());
  if (3 * ns < ncoef)
    throw std::invalid_argument("fit_potential: need at least " + std::to_string((ncoef + 2) / 3) +
                                " samples");

  // Nondimensionalize positions by the largest displacement.
  double L = 0.0;
  for (const auto& [p, f] : samples) L = std::max(L, (p - origin).norm());
  if (!(L > 0.0)) throw std::invalid_argument("fit_potential: degenerate sample positions");

  // Column layout: [0..2] w_i^2; [3..12] beta entries; [13..27] gamma' entries.
  Eigen::MatrixXd A(3 * ns, ncoef);
  Eigen::VectorXd b(3 * ns);
  A.setZero();

  // d/dr_a of a monomial prod over multiset: count(a) * product with one a removed.
  auto dmono3 = [](const Vec3& r, int p, int q, int s, int a) {
    double d = 0.0;
    const int idx[3] = {p, q, s};
    for (int drop = 0; drop < 3; ++drop) {
      if (idx[drop] != a) continue;
      double prod = 1.0;
      for (int t = 0; t < 3; ++t)
        if (t != drop) prod *= r[idx[t]];
      d += prod;
    }
    return d;
  };
  auto dmono4 = [](const Vec3& r, int p, int q, int s, int w, int a) {
    double d = 0.0;
    const int idx[4] = {p, q, s, w};
    for (int drop = 0; drop < 4; ++drop) {
      if (idx[drop] != a) continue;
      double prod = 1.0;
      for (int t = 0; t < 4; ++t)
        if (t != drop) prod *= r[idx[t]];
      d += prod;
    }
    return d;
  };

  for (int n = 0; n < ns; ++n) {
    const Vec3 rp = (1.0 / L) * (samples[n].first - origin);
    for (int a = 0; a < 3; ++a) {
      const int row = 3 * n + a;
      b(row) = samples[n].second[a] / (mass * L);
      A(row, a) = -rp[a];
      int col = 3;
      for (int i = 0; i <= 2; ++i)
        for (int j = i; j <= 2; ++j)
          for (int k = j; k <= 2; ++k, ++col)
            A(row, col) = -Sym3::multiplicity(i, j, k) * dmono3(rp, i, j, k, a);
      for (int i = 0; i <= 2; ++i)
        for (int j = i; j <= 2; ++j)
          for (int k = j; k <= 2; ++k)
            for (int l = k; l <= 2; ++l, ++col)
              A(row, col) = -Sym4::multiplicity(i, j, k, l) * dmono4(rp, i, j, k, l, a);
    }
  }

  Eigen::BDCSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cond = sv(0) / sv(sv.size() - 1);
  if (sv(sv.size() - 1) < 1e-10 * sv(0)) {
    // Name the worst-determined coefficient direction.
    Eigen::VectorXd null = svd.matrixV().col(ncoef - 1);
    int worst = 0;
    null.cwiseAbs().maxCoeff(&worst);
    const char* group = worst < 3 ? "harmonic" : (worst < 13 ? "cubic" : "quartic");
    throw std::runtime_error(
        "fit_potential: rank-deficient design matrix; undetermined direction dominated by " +
        std::string(group) + " coefficient column " + std::to_string(worst));
  }
  const Eigen::VectorXd c = svd.solve(b);

  PotentialFit out;
  out.condition_number = cond;
  out.model.mass = mass;
  out.model.origin = origin;
  out.model.validity_radius = validity_radius > 0.0 ? validity_radius : L;
  for (int a = 0; a < 3; ++a) {
    if (c(a) <= 0.0)
      throw std::runtime_error("fit_potential: non-positive curvature along axis " +
                               std::to_string(a) + " (not a trap minimum)");
    out.model.omega[a] = std::sqrt(c(a));
  }
  {
    int col = 3;
    for (int i = 0; i <= 2; ++i)
      for (int j = i; j <= 2; ++j)
        for (int k = j; k <= 2; ++k, ++col) out.model.beta.at(i, j, k) = c(col) / L;
    for (int i = 0; i <= 2; ++i)
      for (int j = i; j <= 2; ++j)
        for (int k = j; k <= 2; ++k)
          for (int l = k; l <= 2; ++l, ++col)
            out.model.gamma_prime.at(i, j, k, l) = c(col) / (L * L);
  }

  const Eigen::VectorXd resid = A * c - b;
  out.rms_residual = mass * L * std::sqrt(resid.squaredNorm() / resid.size());
  out.rms_force = mass * L * std::sqrt(b.squaredNorm() / b.size());
  return out;
}

} // namespace levsim
