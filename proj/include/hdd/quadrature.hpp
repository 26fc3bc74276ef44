#pragma once

#include <cmath>
#include <stdexcept>

namespace hdd {

namespace detail {

template <class F>
double simpson_recurse(const F& f, double a, double b, double fa, double fm, double fb, double whole,
                       double tol, int depth, long& budget) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  budget -= 2;
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (!std::isfinite(delta)) return left + right;
  if (depth <= 0 || budget <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, budget) +
         simpson_recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, budget);
}

}  // namespace detail

/// Adaptive Simpson quadrature with Richardson correction. Refinement stops
/// once `max_evals` integrand evaluations are spent; a non-finite integrand
/// propagates into the result.
template <class F>
double adaptive_simpson(const F& f, double a, double b, double abs_tol = 1e-8, int max_depth = 50,
                        long max_evals = 2'000'000) {
  if (!(b >= a)) throw std::invalid_argument("adaptive_simpson: need a <= b");
  if (a == b) return 0.0;
  // Split into a few panels first so narrow features near the left end are not missed.
  constexpr int kPanels = 16;
  long budget = max_evals;
  double total = 0.0;
  const double width = (b - a) / kPanels;
  for (int i = 0; i < kPanels; ++i) {
    const double lo = a + i * width;
    const double hi = (i + 1 == kPanels) ? b : lo + width;
    const double flo = f(lo);
    const double fhi = f(hi);
    const double fm = f(0.5 * (lo + hi));
    const double whole = (hi - lo) / 6.0 * (flo + 4.0 * fm + fhi);
    total += detail::simpson_recurse(f, lo, hi, flo, fm, fhi, whole, abs_tol / kPanels, max_depth, budget);
  }
  return total;
}

}  // namespace hdd
