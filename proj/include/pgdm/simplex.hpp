#pragma once
// Probability-simplex primitives: Euclidean projection and simplex-constrained
// least squares (accelerated projected gradient with best-iterate tracking).

#include "pgdm/common.hpp"

#include <algorithm>
#include <numeric>

namespace pgdm {

// Point on the standard simplex: nonnegative entries summing to one.
struct SimplexVector {
  Vector coeffs;

  int size() const { return int(coeffs.size()); }
  double operator[](int i) const { return coeffs[i]; }

  // Clamps harmless negative roundoff (>= -neg_tol) to zero and enforces the
  // simplex invariants; anything worse is a hard error.
  static SimplexVector checked(Vector v, double neg_tol = 1e-9,
                               double sum_tol = 1e-7) {
    require(v.size() >= 1, ErrorKind::InvalidInput, "SimplexVector: empty vector");
    require(v.allFinite(), ErrorKind::InvalidInput, "SimplexVector: non-finite entry");
    for (int i = 0; i < v.size(); ++i) {
      if (v[i] < 0.0) {
        require(v[i] >= -neg_tol, ErrorKind::InvalidInput,
                "SimplexVector: entry " + std::to_string(i) + " is negative beyond tolerance");
        v[i] = 0.0;
      }
    }
    double s = v.sum();
    require(std::abs(s - 1.0) <= sum_tol, ErrorKind::InvalidInput,
            "SimplexVector: entries sum to " + std::to_string(s) + ", expected 1");
    return SimplexVector{std::move(v)};
  }
};

// Euclidean projection onto the simplex via the sorted-threshold construction.
// Ties in the sort are broken by index, so the result is fully deterministic.
inline SimplexVector project_to_simplex(const Vector& v) {
  const int m = int(v.size());
  require(m >= 1, ErrorKind::InvalidInput, "project_to_simplex: empty input");
  require(v.allFinite(), ErrorKind::InvalidInput, "project_to_simplex: non-finite input");
  std::vector<int> order(static_cast<size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (v[a] != v[b]) return v[a] > v[b];
    return a < b;
  });
  // tau = (sum of the rho+1 largest entries - 1) / (rho+1) for the largest
  // prefix whose entries stay above the running threshold.
  double cumsum = 0.0, tau = 0.0;
  for (int j = 0; j < m; ++j) {
    cumsum += v[order[size_t(j)]];
    double t = (cumsum - 1.0) / double(j + 1);
    if (v[order[size_t(j)]] - t > 0.0) tau = t;
  }
  Vector out(m);
  for (int i = 0; i < m; ++i) out[i] = std::max(v[i] - tau, 0.0);
  return SimplexVector{std::move(out)};
}

struct SimplexLsqResult {
  SimplexVector coeffs;
  double objective = 0.0;      // ||target - basis * coeffs||_2
  double kkt_residual = 0.0;   // ||c - proj(c - grad f(c))||_2 at the returned c
  int iterations = 0;
  bool converged = false;
};

// Pre-factored basis for repeated solves against the same matrix. Keeps the
// Gram matrix only when it is the cheap side (m <= 2d); otherwise gradients
// go through two mat-vecs so an n-point hull basis never materializes n x n.
class SimplexLsqOperator {
 public:
  explicit SimplexLsqOperator(Matrix basis) : basis_(std::move(basis)) {
    d_ = int(basis_.rows());
    m_ = int(basis_.cols());
    require(d_ >= 1 && m_ >= 1, ErrorKind::ShapeError, "SimplexLsqOperator: empty basis");
    require(basis_.allFinite(), ErrorKind::InvalidInput, "SimplexLsqOperator: non-finite basis");
    use_gram_ = (m_ <= 2 * d_);
    Eigen::SelfAdjointEigenSolver<Matrix> es;
    if (use_gram_) {
      gram_ = basis_.transpose() * basis_;
      es.compute(gram_, Eigen::EigenvaluesOnly);
    } else {
      Matrix outer = basis_ * basis_.transpose();  // d x d, the small side
      es.compute(outer, Eigen::EigenvaluesOnly);
    }
    lipschitz_ = std::max(es.eigenvalues().maxCoeff(), 0.0);
  }

  const Matrix& basis() const { return basis_; }
  int dim() const { return d_; }
  int arity() const { return m_; }

  SimplexLsqResult solve(const Vector& target, double tol = 1e-8,
                         int max_iter = 2000,
                         const Vector* warm_start = nullptr) const {
    require(int(target.size()) == d_, ErrorKind::ShapeError,
            "solve_simplex_lsq: target length does not match basis rows");
    require(target.allFinite(), ErrorKind::InvalidInput, "solve_simplex_lsq: non-finite target");
    require(tol > 0.0, ErrorKind::InvalidInput, "solve_simplex_lsq: tol must be positive");
    require(max_iter >= 0, ErrorKind::InvalidInput, "solve_simplex_lsq: negative max_iter");

    Vector lin;  // basis' * target, reused across iterations in Gram mode
    if (use_gram_) lin = basis_.transpose() * target;
    auto grad = [&](const Vector& c) -> Vector {
      if (use_gram_) return gram_ * c - lin;
      return basis_.transpose() * (basis_ * c - target);
    };
    // differs from the true objective by ||target||^2/2 in Gram mode;
    // used for comparisons only
    auto value = [&](const Vector& c) -> double {
      if (use_gram_) return 0.5 * c.dot(gram_ * c) - c.dot(lin);
      return 0.5 * (basis_ * c - target).squaredNorm();
    };

    auto finish = [&](Vector c, int iters) {
      Vector g = grad(c);
      double kkt = (c - project_to_simplex(c - g).coeffs).norm();
      double obj = (target - basis_ * c).norm();
      return SimplexLsqResult{SimplexVector::checked(std::move(c)), obj, kkt,
                              iters, kkt <= tol};
    };

    Vector c = warm_start ? project_to_simplex(*warm_start).coeffs
                          : Vector::Constant(m_, 1.0 / m_);
    if (m_ == 1) return finish(std::move(c), 0);
    // A vanishing basis makes the objective constant over the simplex.
    if (lipschitz_ <= 1e-300) return finish(std::move(c), 0);

    const double step = 1.0 / lipschitz_;
    Vector best = c;
    double f_best = value(c);
    double f_curr = f_best;
    Vector y = c;
    double t_mom = 1.0;
    int it = 0;
    bool hit_tol = false;
    for (it = 1; it <= max_iter; ++it) {
      Vector g = grad(c);
      double kkt = (c - project_to_simplex(c - g).coeffs).norm();
      if (kkt <= tol) {
        hit_tol = true;
        break;
      }
      Vector gy = grad(y);
      Vector c_next = project_to_simplex(y - step * gy).coeffs;
      double f_next = value(c_next);
      if (f_next < f_best) {
        f_best = f_next;
        best = c_next;
      }
      if (f_next > f_curr) {
        // adaptive restart: momentum overshot, drop back to plain descent
        t_mom = 1.0;
        y = c_next;
      } else {
        double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_mom * t_mom));
        y = c_next + ((t_mom - 1.0) / t_next) * (c_next - c);
        t_mom = t_next;
      }
      f_curr = f_next;
      c = std::move(c_next);
    }
    // Return the best objective seen (covers the warm start, which keeps
    // alternating-minimization callers monotone).
    Vector out = (value(c) <= f_best) ? c : best;
    SimplexLsqResult r = finish(std::move(out), std::min(it, max_iter));
    if (hit_tol) r.converged = true;
    return r;
  }

 private:
  Matrix basis_;
  Matrix gram_;
  double lipschitz_ = 0.0;
  int d_ = 0, m_ = 0;
  bool use_gram_ = false;
};

inline SimplexLsqResult solve_simplex_lsq(const Vector& target, const Matrix& basis,
                                          double tol = 1e-8, int max_iter = 2000,
                                          const Vector* warm_start = nullptr) {
  return SimplexLsqOperator(basis).solve(target, tol, max_iter, warm_start);
}

}  // namespace pgdm
