#pragma once

#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace hdd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace hdd
