#pragma once

#include <functional>
#include <random>

#include "hdd/types.hpp"

namespace testing_support {

using hdd::Matrix;
using hdd::Vector;

inline Vector random_vector(std::mt19937_64& rng, int n, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

inline Matrix random_matrix(std::mt19937_64& rng, int r, int c) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = u(rng);
  return m;
}

inline Matrix random_psd(std::mt19937_64& rng, int n, int rank) {
  const Matrix B = random_matrix(rng, n, rank);
  return B * B.transpose();
}

// Central differences, step h, componentwise.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h = 1e-5) {
  Vector g(x.size());
  for (int i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    g(i) = (f(xp) - f(xm)) / (2 * h);
  }
  return g;
}

inline Vector fd_directional(const std::function<Vector(const Vector&)>& g, const Vector& x, const Vector& d,
                             double h = 1e-5) {
  return (g(x + h * d) - g(x - h * d)) / (2 * h);
}

}  // namespace testing_support
