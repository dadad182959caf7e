#pragma once

// Random generators and finite-difference helpers shared by the test suites.

#include <cmath>
#include <functional>
#include <random>

#include "beetl/spd.hpp"

namespace beetl::testing {

using Rng = std::mt19937_64;

inline Matrix random_matrix(Rng& rng, Index rows, Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

inline Matrix random_symmetric(Rng& rng, Index n) {
  Matrix m = random_matrix(rng, n, n);
  return 0.5 * (m + m.transpose());
}

// SPD with log-eigenvalues spread in [-spread, spread].
inline SpdMatrix random_spd(Rng& rng, Index n, double spread = 1.0) {
  Matrix q = Eigen::HouseholderQR<Matrix>(random_matrix(rng, n, n)).householderQ();
  std::uniform_real_distribution<double> unif(-spread, spread);
  Vector l(n);
  for (Index i = 0; i < n; ++i) l(i) = std::exp(unif(rng));
  Matrix s = q * l.asDiagonal() * q.transpose();
  return SpdMatrix(0.5 * (s + s.transpose()));
}

inline Matrix random_invertible(Rng& rng, Index n) {
  return Matrix::Identity(n, n) + 0.3 * random_matrix(rng, n, n) / std::sqrt(static_cast<double>(n));
}

inline Matrix random_stiefel(Rng& rng, Index rows, Index cols) {
  Matrix q = Eigen::HouseholderQR<Matrix>(random_matrix(rng, rows, cols)).householderQ();
  return q.leftCols(cols);
}

// Central difference of a scalar function along a direction.
inline double directional_fd(const std::function<double(double)>& along, double step = 1e-5) {
  return (along(step) - along(-step)) / (2.0 * step);
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

}  // namespace beetl::testing
