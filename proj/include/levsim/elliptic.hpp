#pragma once

#include <cmath>
#include <stdexcept>

namespace levsim {

/// Complete elliptic integrals K(m) and E(m) with parameter m = k^2,
/// evaluated together by arithmetic-geometric mean iteration (1e-12 relative).
struct EllipticKE {
  double K;
  double E;
};

inline EllipticKE elliptic_ke(double m) {
  if (m < 0.0 || m >= 1.0)
    throw std::domain_error("elliptic_ke: parameter m must be in [0, 1)");
  double a = 1.0;
  double b = std::sqrt(1.0 - m);
  // S accumulates sum_{n>=0} 2^(n-1) c_n^2 with c_0^2 = m.
  double S = 0.5 * m;
  double pow2 = 0.5;
  for (int n = 0; n < 64; ++n) {
    const double an = 0.5 * (a + b);
    const double bn = std::sqrt(a * b);
    const double cn = 0.5 * (a - b);
    pow2 *= 2.0;
    S += pow2 * cn * cn;
    a = an;
    b = bn;
    if (cn < 1e-15 * a) break;
  }
  const double K = 1.5707963267948966 / a;
  return {K, K * (1.0 - S)};
}

} // namespace levsim
