#pragma once

#include "hdd/types.hpp"

namespace hdd {

/// Running integrals monitored along a trajectory, all from time 0:
///   beta_psi      int beta psi(x)
///   speed_sq      int ||x'||^2
///   grad_comb_sq  int ||grad phi(x) + beta grad psi(x)||^2
///   inner_gradz   int <grad phi(z), x - z>
///   lemma_iii     int (phi(x) - phi(z) + (1 - k(1 + gamma lambda)/eps) beta psi(x))
/// The last two need a reference point z; they stay zero without one.
struct RunningIntegrals {
  double beta_psi = 0.0;
  double speed_sq = 0.0;
  double grad_comb_sq = 0.0;
  double inner_gradz = 0.0;
  double lemma_iii = 0.0;

  RunningIntegrals& operator+=(const RunningIntegrals& o) {
    beta_psi += o.beta_psi;
    speed_sq += o.speed_sq;
    grad_comb_sq += o.grad_comb_sq;
    inner_gradz += o.inner_gradz;
    lemma_iii += o.lemma_iii;
    return *this;
  }

  friend RunningIntegrals operator+(RunningIntegrals a, const RunningIntegrals& b) { return a += b; }

  friend RunningIntegrals operator*(double s, RunningIntegrals a) {
    a.beta_psi *= s;
    a.speed_sq *= s;
    a.grad_comb_sq *= s;
    a.inner_gradz *= s;
    a.lemma_iii *= s;
    return a;
  }

  bool finite() const {
    return std::isfinite(beta_psi) && std::isfinite(speed_sq) && std::isfinite(grad_comb_sq) &&
           std::isfinite(inner_gradz) && std::isfinite(lemma_iii);
  }
};

/// Reference data for the z-dependent integrands.
struct IntegralReference {
  Vector z;
  double phi_z = 0.0;
  Vector grad_phi_z;
  /// 1 - k (1 + gamma lambda) / epsilon
  double shrink = 1.0;
};

/// Pointwise integrand values (same layout as RunningIntegrals).
inline RunningIntegrals integrand_values(double beta, double phi, double psi, const Vector& x, const Vector& v,
                                         const Vector& grad_comb, const IntegralReference* ref) {
  RunningIntegrals f;
  f.beta_psi = beta * psi;
  f.speed_sq = v.squaredNorm();
  f.grad_comb_sq = grad_comb.squaredNorm();
  if (ref != nullptr) {
    f.inner_gradz = ref->grad_phi_z.dot(x - ref->z);
    f.lemma_iii = phi - ref->phi_z + ref->shrink * beta * psi;
  }
  return f;
}

}  // namespace hdd
