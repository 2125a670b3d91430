#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "levsim/constants.hpp"
#include "levsim/elliptic.hpp"
#include "levsim/vec3.hpp"

namespace levsim {

/// One circular filament loop. Coaxial stacks use x0 = y0 = 0; small lateral
/// offsets between coils break the x/y degeneracy of the trap.
struct Loop {
  double radius = 0.0;    // [m]
  double z = 0.0;         // axial position [m]
  double x0 = 0.0;        // lateral offset of the loop axis [m]
  double y0 = 0.0;        // [m]
  int polarity = +1;      // current sense, +1 or -1
};

struct CoilAssembly {
  std::vector<Loop> loops;
  int windings = 1;                // N, windings per physical coil
  double current = 0.0;            // I [A]
  double reference_radius = 0.0;   // R in the zeta normalization [m]

  void validate() const {
    if (loops.empty()) throw std::invalid_argument("CoilAssembly: no loops");
    for (const auto& l : loops) {
      if (!(l.radius > 0.0)) throw std::invalid_argument("CoilAssembly: loop radius must be > 0");
      if (l.polarity != 1 && l.polarity != -1)
        throw std::invalid_argument("CoilAssembly: polarity must be +1 or -1");
    }
    if (windings < 1) throw std::invalid_argument("CoilAssembly: windings must be >= 1");
    if (!(reference_radius > 0.0))
      throw std::invalid_argument("CoilAssembly: reference_radius must be > 0");
  }
};

struct ParticleSpec {
  double radius = 0.0;    // [m]
  double density = 0.0;   // [kg/m^3]

  double volume() const { return 4.0 / 3.0 * pi * radius * radius * radius; }
  double mass() const { return density * volume(); }

  /// Ideal-diamagnet treatment assumes penetration depth << radius.
  bool ideal_diamagnet_ok(double penetration_depth) const {
    return penetration_depth < 0.1 * radius;
  }

  void validate() const {
    if (!(radius > 0.0)) throw std::invalid_argument("ParticleSpec: radius must be > 0");
    if (!(density > 0.0)) throw std::invalid_argument("ParticleSpec: density must be > 0");
  }
};

struct FieldSample {
  Vec3 position;
  Vec3 B;          // [T]
  Mat3 jacobian;   // dB_i/dr_j [T/m]
};

namespace detail {

/// Field and in-plane derivatives of a single circular loop, cylindrical
/// components (B_rho, B_z) about the loop axis. Closed form in complete
/// elliptic integrals; derivatives generated symbolically from the same
/// expressions.
struct LoopFieldCyl {
  double Brho, Bz;
  double dBrho_drho, dBrho_dz, dBz_drho, dBz_dz;
};

inline LoopFieldCyl loop_field_cyl(double a, double I, double rho, double zeta) {
  LoopFieldCyl out{};
  const double C = mu0 * I / pi;

  if (rho < 1e-7 * a) {
    // Near-axis expansion from the on-axis solution B_z(z).
    const double s = a * a + zeta * zeta;
    const double s32 = std::pow(s, -1.5);
    const double Bz0 = 0.5 * mu0 * I * a * a * s32;
    const double Bp = -1.5 * mu0 * I * a * a * zeta * s32 / s;          // dBz/dz on axis
    const double Bpp = -1.5 * mu0 * I * a * a * s32 / s * (1.0 - 5.0 * zeta * zeta / s);
    out.Bz = Bz0;
    out.Brho = -0.5 * rho * Bp;
    out.dBrho_drho = -0.5 * Bp;
    out.dBrho_dz = -0.5 * rho * Bpp;
    out.dBz_drho = -0.5 * rho * Bpp;
    out.dBz_dz = Bp;
    return out;
  }

  const double r2 = rho * rho + zeta * zeta;
  const double alpha2 = a * a + r2 - 2.0 * a * rho;
  const double beta2 = a * a + r2 + 2.0 * a * rho;
  if (alpha2 < 1e-24 * beta2)
    throw std::domain_error("loop_field: evaluation point on the loop filament");
  const double m_v = 1.0 - alpha2 / beta2;
  const auto [Kv, Ev] = elliptic_ke(m_v);
  const double beta = std::sqrt(beta2);

  out.Brho = C * zeta / (2.0 * alpha2 * beta * rho) * ((a * a + r2) * Ev - alpha2 * Kv);
  out.Bz = C / (2.0 * alpha2 * beta) * ((a * a - r2) * Ev + alpha2 * Kv);

  // Generated expressions (sympy CSE) for the four cylindrical derivatives.
  const double x0 = rho * rho;
  const double x1 = Ev;
  const double x2 = rho * x1;
  const double x3 = Kv;
  const double x4 = a - rho;
  const double x5 = a * rho;
  const double x6 = 2 * x5;
  const double x7 = a * a;
  const double x8 = zeta * zeta;
  const double x9 = x0 + x8;
  const double x10 = x7 + x9;
  const double x11 = x10 - x6;
  const double x12 = x10 + x6;
  const double x13 = x12 * x12;
  const double x14 = m_v - 1;
  const double x15 = m_v * x14;
  const double x16 = x13 * x15;
  const double x17 = 2 * x16;
  const double x18 = x11 * x17;
  const double x19 = -x11 * x3;
  const double x20 = x1 * x10 + x19;
  const double x21 = x16 * x20;
  const double x22 = 2 * x21;
  const double x23 = x11 * x21;
  const double x24 = x11 * (a + rho);
  const double x25 = x12 * x15;
  const double x26 = x24 * x25;
  const double x27 = x14 * (x1 - x3);
  const double x28 = -x11 * (-x1 - x14 * x3);
  const double x29 = -x10 * x27 - x28;
  const double x30 = -x4;
  const double x31 = x11 * (x12 * x30 - x24);
  const double x32 = 0.5 * C / (m_v * (x11 * x11) * std::pow(x12, 2.5) * x14);
  const double x33 = x32 * zeta;
  const double x34 = 2 * m_v * x11 * x13 * x27;
  const double x35 = x11 * x25;
  const double x36 = -x7 + x9;
  const double x37 = -x1 * x36 - x19;
  const double x38 = x17 * x37;
  const double x39 = x27 * x36 + x28;
  out.dBrho_drho = x33 *
                   (rho * x18 * (x2 + x3 * x4) - rho * x20 * x26 + rho * x22 * x4 +
                    rho * x29 * x31 - x23) /
                   x0;
  out.dBrho_dz = x32 * (4 * x11 * x29 * x5 * x8 - x20 * x35 * x8 - x22 * x8 + x23 + x34 * x8) / rho;
  out.dBz_drho = x32 * (-x18 * (x2 - x3 * x30) - x26 * x37 + x31 * x39 + x38 * x4);
  out.dBz_dz = x33 * (4 * a * rho * x11 * x39 - x34 - x35 * x37 - x38);
  return out;
}

} // namespace detail

/// Field and jacobian of a single loop at a point given in global coordinates.
inline FieldSample loop_field(const Loop& loop, double current, const Vec3& r) {
  const double dx = r.x - loop.x0;
  const double dy = r.y - loop.y0;
  const double zeta = r.z - loop.z;
  const double rho = std::hypot(dx, dy);
  const double I = current * loop.polarity;

  const auto f = detail::loop_field_cyl(loop.radius, I, rho, zeta);

  FieldSample s;
  s.position = r;
  double c = 1.0, sn = 0.0;
  if (rho > 0.0) {
    c = dx / rho;
    sn = dy / rho;
  }
  s.B = {f.Brho * c, f.Brho * sn, f.Bz};

  const double Brho_over_rho = (rho > 1e-300) ? f.Brho / rho : f.dBrho_drho;
  Mat3& J = s.jacobian;
  J(0, 0) = c * c * f.dBrho_drho + sn * sn * Brho_over_rho;
  J(0, 1) = c * sn * (f.dBrho_drho - Brho_over_rho);
  J(0, 2) = c * f.dBrho_dz;
  J(1, 0) = J(0, 1);
  J(1, 1) = sn * sn * f.dBrho_drho + c * c * Brho_over_rho;
  J(1, 2) = sn * f.dBrho_dz;
  J(2, 0) = c * f.dBz_drho;
  J(2, 1) = sn * f.dBz_drho;
  J(2, 2) = f.dBz_dz;
  return s;
}

/// Total field of the assembly: exact superposition over loops.
inline FieldSample field_at(const CoilAssembly& assembly, const Vec3& r) {
  FieldSample total;
  total.position = r;
  for (const auto& loop : assembly.loops) {
    const FieldSample s = loop_field(loop, assembly.current, r);
    total.B += s.B;
    total.jacobian += s.jacobian;
  }
  return total;
}

/// Magnetic potential energy of an ideal-diamagnet sphere, U = 3V|B|^2/(4 mu0).
inline double magnetic_potential(const CoilAssembly& assembly, const ParticleSpec& particle,
                                 const Vec3& r) {
  const Vec3 B = field_at(assembly, r).B;
  return 3.0 * particle.volume() * B.norm2() / (4.0 * mu0);
}

/// F = -grad U, via the analytic jacobian: grad(|B|^2) = 2 J^T B.
inline Vec3 diamagnet_force(const CoilAssembly& assembly, const ParticleSpec& particle,
                            const Vec3& r) {
  const FieldSample s = field_at(assembly, r);
  const Mat3& J = s.jacobian;
  const Vec3 JtB = {dot(J.col(0), s.B), dot(J.col(1), s.B), dot(J.col(2), s.B)};
  const double k = -3.0 * particle.volume() / (2.0 * mu0);
  return k * JtB;
}

struct SearchBox {
  Vec3 lo;
  Vec3 hi;
  bool contains(const Vec3& r) const {
    return r.x >= lo.x && r.x <= hi.x && r.y >= lo.y && r.y <= hi.y && r.z >= lo.z && r.z <= hi.z;
  }
  Vec3 center() const { return 0.5 * (lo + hi); }
  Vec3 extent() const { return hi - lo; }
};

struct TrapNotFound : std::runtime_error {
  Vec3 last_iterate;
  TrapNotFound(const std::string& msg, Vec3 last) : std::runtime_error(msg), last_iterate(last) {}
};

namespace detail {

/// Nelder-Mead minimization of f over 3-D, constrained to the box by penalty.
template <class F>
inline Vec3 nelder_mead(F&& f, const SearchBox& box, Vec3 start, double scale, double xtol,
                        int max_iter = 4000) {
  auto eval = [&](const Vec3& r) {
    if (!box.contains(r)) return 1e300;
    return f(r);
  };
  std::array<Vec3, 4> pts = {start, start, start, start};
  pts[1].x += scale;
  pts[2].y += scale;
  pts[3].z += scale;
  std::array<double, 4> fv;
  for (int i = 0; i < 4; ++i) fv[i] = eval(pts[i]);

  for (int it = 0; it < max_iter; ++it) {
    // order
    std::array<int, 4> idx = {0, 1, 2, 3};
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fv[a] < fv[b]; });
    std::array<Vec3, 4> ps;
    std::array<double, 4> fs;
    for (int i = 0; i < 4; ++i) {
      ps[i] = pts[idx[i]];
      fs[i] = fv[idx[i]];
    }
    pts = ps;
    fv = fs;

    const double spread = (pts[3] - pts[0]).norm() + (pts[1] - pts[0]).norm() +
                          (pts[2] - pts[0]).norm();
    if (spread < xtol) return pts[0];

    const Vec3 centroid = (1.0 / 3.0) * (pts[0] + pts[1] + pts[2]);
    const Vec3 refl = centroid + (centroid - pts[3]);
    const double fr = eval(refl);
    if (fr < fv[0]) {
      const Vec3 exp_ = centroid + 2.0 * (centroid - pts[3]);
      const double fe = eval(exp_);
      if (fe < fr) {
        pts[3] = exp_;
        fv[3] = fe;
      } else {
        pts[3] = refl;
        fv[3] = fr;
      }
    } else if (fr < fv[2]) {
      pts[3] = refl;
      fv[3] = fr;
    } else {
      const Vec3 con = centroid + 0.5 * (pts[3] - centroid);
      const double fc = eval(con);
      if (fc < fv[3]) {
        pts[3] = con;
        fv[3] = fc;
      } else {
        for (int i = 1; i < 4; ++i) {
          pts[i] = pts[0] + 0.5 * (pts[i] - pts[0]);
          fv[i] = eval(pts[i]);
        }
      }
    }
  }
  throw TrapNotFound("nelder_mead: no convergence", pts[0]);
}

} // namespace detail

/// Locate the |B| minimum (trap center) inside the search box, 1 nm tolerance.
inline Vec3 find_trap_center(const CoilAssembly& assembly, const SearchBox& box) {
  auto f = [&](const Vec3& r) { return field_at(assembly, r).B.norm2(); };

  // Coarse grid scan to seed the simplex; the box may be far from the minimum.
  const int n = 9;
  Vec3 best = box.center();
  double fbest = f(best);
  const Vec3 ext = box.extent();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const Vec3 r = {box.lo.x + ext.x * i / (n - 1.0), box.lo.y + ext.y * j / (n - 1.0),
                        box.lo.z + ext.z * k / (n - 1.0)};
        const double v = f(r);
        if (v < fbest) {
          fbest = v;
          best = r;
        }
      }

  const double scale = 0.05 * std::max({ext.x, ext.y, ext.z});
  const Vec3 r0 = detail::nelder_mead(f, box, best, scale, 1e-9);

  // Reject boxes whose "minimum" sits on the boundary (no interior minimum).
  const double edge = 1e-8;
  const Vec3 e = box.extent();
  if (std::abs(r0.x - box.lo.x) < edge * e.x || std::abs(box.hi.x - r0.x) < edge * e.x ||
      std::abs(r0.y - box.lo.y) < edge * e.y || std::abs(box.hi.y - r0.y) < edge * e.y ||
      std::abs(r0.z - box.lo.z) < edge * e.z || std::abs(box.hi.z - r0.z) < edge * e.z)
    throw TrapNotFound("find_trap_center: minimum on search-box boundary", r0);
  return r0;
}

/// Field-magnitude gradients along the axes at the trap center, |J e_i|.
/// At the quadrupole zero these are the principal gradients entering the
/// trap-frequency formula.
inline Vec3 field_gradients(const CoilAssembly& assembly, const Vec3& center) {
  const Mat3 J = field_at(assembly, center).jacobian;
  return {J.col(0).norm(), J.col(1).norm(), J.col(2).norm()};
}

/// omega_i = grad_i B * sqrt(3 / (2 mu0 rho)).
inline Vec3 trap_frequencies(const CoilAssembly& assembly, const ParticleSpec& particle,
                             const SearchBox& box) {
  const Vec3 c = find_trap_center(assembly, box);
  const Vec3 g = field_gradients(assembly, c);
  const double k = std::sqrt(3.0 / (2.0 * mu0 * particle.density));
  return {g.x * k, g.y * k, g.z * k};
}

/// zeta_i = grad_i B * R^2 / (mu0 N I), dimensionless.
inline Vec3 geometric_factors(const CoilAssembly& assembly, const SearchBox& box) {
  const Vec3 c = find_trap_center(assembly, box);
  const Vec3 g = field_gradients(assembly, c);
  const double R = assembly.reference_radius;
  const double k = R * R / (mu0 * assembly.windings * std::abs(assembly.current));
  return {g.x * k, g.y * k, g.z * k};
}

/// Equilibrium of magnetic + gravitational potential. Used when expanding the
/// trap potential about the true (gravity-shifted) minimum.
inline Vec3 find_equilibrium(const CoilAssembly& assembly, const ParticleSpec& particle,
                             const SearchBox& box) {
  const double mg = particle.mass() * g_earth;
  auto f = [&](const Vec3& r) { return magnetic_potential(assembly, particle, r) + mg * r.z; };
  const Vec3 seed = find_trap_center(assembly, box);
  const double scale = 0.02 * std::max({box.extent().x, box.extent().y, box.extent().z});
  return detail::nelder_mead(f, box, seed, scale, 1e-10);
}

} // namespace levsim
