// Simplex projection and the FISTA least-squares solver, checked against
// brute-force oracles: dense grid search over the simplex for small arity,
// plus feasibility/determinism properties on random input.

#include <pgdm/simplex.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <functional>

using namespace pgdm;
using Catch::Approx;

namespace {

Matrix random_matrix(Rng& rng, int rows, int cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
  return m;
}

// Visit every point of the (k-1)-simplex on a grid with `steps` subdivisions.
void simplex_grid(int k, int steps, const std::function<void(const Vector&)>& fn,
                  Vector& buf, int pos = 0, int remaining = -1) {
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

double grid_min_sqdist(const Vector& v, int steps) {
  double best = std::numeric_limits<double>::infinity();
  Vector buf(v.size());
  simplex_grid(int(v.size()), steps, [&](const Vector& c) {
    best = std::min(best, (c - v).squaredNorm());
  }, buf);
  return best;
}

// min over the grid of 0.5 * ||target - basis c||^2
double grid_min_objective(const Vector& target, const Matrix& basis, int steps) {
  double best = std::numeric_limits<double>::infinity();
  Vector buf(basis.cols());
  simplex_grid(int(basis.cols()), steps, [&](const Vector& c) {
    best = std::min(best, 0.5 * (target - basis * c).squaredNorm());
  }, buf);
  return best;
}

}  // namespace

TEST_CASE("projection onto the simplex: hand cases") {
  SECTION("already on the simplex is a fixed point") {
    Vector v(3);
    v << 0.2, 0.5, 0.3;
    Vector p = project_to_simplex(v).coeffs;
    REQUIRE((p - v).lpNorm<Eigen::Infinity>() < 1e-15);
  }
  SECTION("uniform shift is removed") {
    Vector v = Vector::Constant(4, 1.25);
    Vector p = project_to_simplex(v).coeffs;
    for (int i = 0; i < 4; ++i) REQUIRE(p[i] == Approx(0.25).margin(1e-15));
  }
  SECTION("dominant coordinate collapses to a vertex") {
    Vector v(3);
    v << 10.0, 0.0, -5.0;
    Vector p = project_to_simplex(v).coeffs;
    REQUIRE(p[0] == Approx(1.0).margin(1e-12));
    REQUIRE(p[1] == Approx(0.0).margin(1e-12));
    REQUIRE(p[2] == Approx(0.0).margin(1e-12));
  }
  SECTION("size 1 always lands on the point simplex") {
    Vector v(1);
    v << -3.7;
    Vector p = project_to_simplex(v).coeffs;
    REQUIRE(p[0] == Approx(1.0));
  }
}

TEST_CASE("projection matches the simplex grid oracle") {
  Rng rng(2024);
  const int steps = 200;
  for (int d = 2; d <= 3; ++d) {
    for (int trial = 0; trial < 40; ++trial) {
      Vector v = 3.0 * rng.normal_vec(d);
      Vector p = project_to_simplex(v).coeffs;
      double proj_obj = (p - v).squaredNorm();
      double grid_obj = grid_min_sqdist(v, steps);
      // the true projection can only beat the best grid point, and the grid
      // can only exceed it by the squared grid pitch
      REQUIRE(proj_obj <= grid_obj + 1e-12);
      REQUIRE(grid_obj - proj_obj < 1e-2);
      REQUIRE(p.minCoeff() >= 0.0);
      REQUIRE(p.sum() == Approx(1.0).margin(1e-12));
    }
  }
}

TEST_CASE("projection properties hold on random high-dimensional input") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    int d = 1 + rng.uniform_int(40);
    Vector v = 5.0 * rng.normal_vec(d);
    Vector p = project_to_simplex(v).coeffs;
    REQUIRE(p.minCoeff() >= 0.0);
    REQUIRE(p.sum() == Approx(1.0).margin(1e-10));
    // nonexpansive with respect to any simplex point (here: a random vertex)
    Vector e = Vector::Zero(d);
    e[rng.uniform_int(d)] = 1.0;
    REQUIRE((p - e).norm() <= (v - e).norm() + 1e-12);
  }
}

TEST_CASE("projection is deterministic under coordinate ties") {
  Vector v = Vector::Constant(4, 0.7);
  Vector a = project_to_simplex(v).coeffs;
  Vector b = project_to_simplex(v).coeffs;
  REQUIRE((a - b).norm() == 0.0);
  for (int i = 0; i < 4; ++i) REQUIRE(a[i] == Approx(0.25).margin(1e-15));
}

TEST_CASE("SimplexVector::checked validates") {
  Vector good(3);
  good << 0.1, 0.2, 0.7;
  REQUIRE_NOTHROW(SimplexVector::checked(good));

  // harmless negative roundoff is clamped
  Vector tiny_neg(2);
  tiny_neg << -1e-12, 1.0;
  SimplexVector fixed = SimplexVector::checked(tiny_neg);
  REQUIRE(fixed.coeffs[0] == 0.0);

  Vector neg(3);
  neg << -0.1, 0.4, 0.7;
  REQUIRE_THROWS_AS(SimplexVector::checked(neg), Error);

  Vector off(3);
  off << 0.5, 0.4, 0.3;
  REQUIRE_THROWS_AS(SimplexVector::checked(off), Error);
  try {
    SimplexVector::checked(off);
    FAIL("expected an error");
  } catch (const Error& e) {
    REQUIRE(e.kind() == ErrorKind::InvalidInput);
  }
}

TEST_CASE("simplex least squares matches the grid oracle") {
  Rng rng(11);
  const int steps = 200;
  for (int d = 1; d <= 3; ++d) {
    for (int m = 1; m <= 3; ++m) {
      for (int trial = 0; trial < 12; ++trial) {
        Matrix basis = random_matrix(rng, d, m, 1.5);
        Vector target = 1.5 * rng.normal_vec(d);
        SimplexLsqResult res = solve_simplex_lsq(target, basis);
        double f_solver = 0.5 * res.objective * res.objective;
        double f_grid = grid_min_objective(target, basis, steps);
        REQUIRE(f_solver <= f_grid + 1e-10);  // solver at least as good
        REQUIRE(f_grid - f_solver < 1e-2);    // and the grid confirms it
        REQUIRE(res.coeffs.coeffs.minCoeff() >= 0.0);
        REQUIRE(res.coeffs.coeffs.sum() == Approx(1.0).margin(1e-10));
      }
    }
  }
}

TEST_CASE("simplex least squares: exactly representable target is recovered") {
  Rng rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    int d = 2 + rng.uniform_int(6);
    int m = 2 + rng.uniform_int(4);
    Matrix basis = random_matrix(rng, d, m);
    Vector c_true = rng.uniform_vec(m);
    c_true /= c_true.sum();
    Vector target = basis * c_true;
    SimplexLsqResult res = solve_simplex_lsq(target, basis, 1e-10, 20000);
    REQUIRE(res.converged);
    REQUIRE(res.objective < 1e-6);
  }
}

TEST_CASE("KKT residual vanishes at an interior optimum") {
  Matrix basis(2, 2);
  basis << 1.0, 0.0, 0.0, 1.0;
  Vector target(2);
  target << 0.3, 0.7;  // optimum is the target itself
  SimplexLsqResult res = solve_simplex_lsq(target, basis, 1e-12);
  REQUIRE(res.kkt_residual < 1e-10);
  REQUIRE(res.objective < 1e-10);
}

TEST_CASE("warm start never worsens the reported objective") {
  Rng rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    int d = 2 + rng.uniform_int(5);
    int m = 2 + rng.uniform_int(5);
    Matrix basis = random_matrix(rng, d, m);
    Vector target = rng.normal_vec(d);
    SimplexLsqOperator op(basis);
    SimplexLsqResult cold = op.solve(target, 1e-9, 500);
    // resume from the cold solution with a tiny budget: can only improve
    SimplexLsqResult resumed = op.solve(target, 1e-9, 3, &cold.coeffs.coeffs);
    REQUIRE(resumed.objective <= cold.objective + 1e-12);
  }
}

TEST_CASE("degenerate bases are handled") {
  SECTION("single column forces the coefficient to one") {
    Matrix basis(3, 1);
    basis << 1.0, 2.0, 3.0;
    Vector target = Vector::Zero(3);
    SimplexLsqResult res = solve_simplex_lsq(target, basis);
    REQUIRE(res.coeffs.coeffs[0] == Approx(1.0));
    REQUIRE(res.objective == Approx(std::sqrt(14.0)));
  }
  SECTION("identical columns: any simplex point is optimal, result is feasible") {
    Matrix basis(2, 3);
    basis << 1.0, 1.0, 1.0, 2.0, 2.0, 2.0;
    Vector target(2);
    target << 1.0, 2.0;
    SimplexLsqResult res = solve_simplex_lsq(target, basis);
    REQUIRE(res.objective < 1e-9);
    REQUIRE(res.coeffs.coeffs.sum() == Approx(1.0).margin(1e-12));
  }
  SECTION("all-zero basis leaves the initial feasible point") {
    Matrix basis = Matrix::Zero(3, 2);
    Vector target = Vector::Ones(3);
    SimplexLsqResult res = solve_simplex_lsq(target, basis);
    REQUIRE(res.coeffs.coeffs.sum() == Approx(1.0).margin(1e-12));
    REQUIRE(res.objective == Approx(std::sqrt(3.0)));
  }
}

TEST_CASE("gram-mode and matvec-mode solvers agree") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 3, m_small = 4, m_large = 10;  // m <= 2d vs m > 2d
    Matrix narrow = random_matrix(rng, d, m_small);
    Vector target = rng.normal_vec(d);
    SimplexLsqResult a = solve_simplex_lsq(target, narrow, 1e-10, 4000);
    // pad with duplicate columns: the attainable objective is unchanged,
    // but the wide problem goes through the matvec path
    Matrix padded(d, m_large);
    for (int j = 0; j < m_large; ++j)
      padded.col(j) = narrow.col(std::min(j, m_small - 1));
    SimplexLsqResult b = solve_simplex_lsq(target, padded, 1e-10, 4000);
    REQUIRE(a.objective == Approx(b.objective).margin(1e-6));
  }
}

TEST_CASE("invalid input raises typed errors") {
  Vector empty;
  REQUIRE_THROWS_AS(project_to_simplex(empty), Error);

  Vector v(2);
  v << std::numeric_limits<double>::quiet_NaN(), 0.0;
  REQUIRE_THROWS_AS(project_to_simplex(v), Error);

  Matrix basis(2, 2);
  basis.setIdentity();
  Vector bad_target(3);
  bad_target.setZero();
  REQUIRE_THROWS_AS(solve_simplex_lsq(bad_target, basis), Error);
  try {
    solve_simplex_lsq(bad_target, basis);
    FAIL("expected an error");
  } catch (const Error& e) {
    REQUIRE(e.kind() == ErrorKind::ShapeError);
  }
}
