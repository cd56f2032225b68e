#pragma once
// Shared helpers for the test suites: deterministic random matrices and a
// brute-force simplex grid used as an independent oracle.

#include <pgdm/common.hpp>

#include <functional>

namespace pgdm_test {

inline pgdm::Matrix random_matrix(pgdm::Rng& rng, int rows, int cols, double scale = 1.0) {
  pgdm::Matrix m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
  return m;
}

// Visit every point of the (k-1)-simplex on a grid with `steps` subdivisions.
inline void simplex_grid(int k, int steps,
                         const std::function<void(const pgdm::Vector&)>& fn,
                         pgdm::Vector& buf, int pos = 0, int remaining = -1) {
  if (remaining < 0) remaining = steps;
  if (pos == k - 1) {
    buf[pos] = double(remaining) / steps;
    fn(buf);
    return;
  }
  for (int i = 0; i <= remaining; ++i) {
    buf[pos] = double(i) / steps;
    simplex_grid(k, steps, fn, buf, pos + 1, remaining - i);
  }
}

// min over the grid of 0.5 * ||target - basis c||^2
inline double grid_min_objective(const pgdm::Vector& target, const pgdm::Matrix& basis,
                                 int steps) {
  double best = std::numeric_limits<double>::infinity();
  pgdm::Vector buf(basis.cols());
  simplex_grid(int(basis.cols()), steps, [&](const pgdm::Vector& c) {
    best = std::min(best, 0.5 * (target - basis * c).squaredNorm());
  }, buf);
  return best;
}

}  // namespace pgdm_test
