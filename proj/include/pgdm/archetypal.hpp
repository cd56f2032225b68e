#pragma once
// Archetypal analysis: alternating simplex-constrained least squares over
// coefficients and archetype mixing weights, plus the derived operations the
// forecaster needs (projection, reconstruction, AAUQ, convex-hull distance).

#include "pgdm/common.hpp"
#include "pgdm/simplex.hpp"

#include <limits>
#include <optional>

namespace pgdm {

// Observations, one per row.
struct DataMatrix {
  Matrix values;  // n x d

  int rows() const { return int(values.rows()); }
  int cols() const { return int(values.cols()); }

  void validate() const {
    require(values.rows() >= 1 && values.cols() >= 1, ErrorKind::ShapeError,
            "DataMatrix: need at least one row and one column");
    require(values.allFinite(), ErrorKind::InvalidInput, "DataMatrix: non-finite entry");
  }
};

struct ArchetypeSet {
  Matrix archetypes;                          // d x p, one archetype per column
  std::vector<SimplexVector> mixing_weights;  // p vectors of length n
  double fit_rss = 0.0;
  int iterations_used = 0;
  std::vector<double> rss_history;  // one entry per outer iteration
  bool degenerate_data = false;     // all data rows identical

  int dim() const { return int(archetypes.rows()); }
  int count() const { return int(archetypes.cols()); }

  void validate() const {
    require(archetypes.rows() >= 1 && archetypes.cols() >= 1, ErrorKind::ShapeError,
            "ArchetypeSet: empty archetype matrix");
    require(archetypes.allFinite(), ErrorKind::InvalidInput,
            "ArchetypeSet: non-finite archetype");
    require(int(mixing_weights.size()) == count(), ErrorKind::ShapeError,
            "ArchetypeSet: mixing weight count does not match archetype count");
  }
};

struct FitOptions {
  double tol = 1e-6;         // relative RSS decrease that stops the outer loop
  double solver_tol = 1e-8;  // projected-gradient residual for inner solves
  int max_iter = 500;
  int solver_max_iter = 2000;
  uint64_t seed = 0;
  int threads = 1;
};

// FurthestSum: greedy selection of mutually distant rows used to seed the
// archetypes. Starts from a random row, then repeatedly adds the unused row
// with the largest summed distance to the selected set; the initial random
// pick is swapped out at the end to remove its bias. Ties go to the smallest
// index so the result is deterministic given the rng state.
inline std::vector<int> furthest_sum(const DataMatrix& data, int p, Rng& rng) {
  const int n = data.rows();
  require(p >= 1 && p <= n, ErrorKind::InvalidArity, "furthest_sum: need 1 <= p <= n");
  std::vector<char> used(size_t(n), 0);
  std::vector<double> score(size_t(n), 0.0);
  std::vector<int> chosen;
  chosen.reserve(size_t(p));

  auto add = [&](int j) {
    used[size_t(j)] = 1;
    chosen.push_back(j);
    for (int i = 0; i < n; ++i) {
      if (!used[size_t(i)])
        score[size_t(i)] += (data.values.row(i) - data.values.row(j)).norm();
    }
  };
  auto pick_best = [&]() {
    int best = -1;
    double best_score = -1.0;
    for (int i = 0; i < n; ++i) {
      if (!used[size_t(i)] && score[size_t(i)] > best_score) {
        best_score = score[size_t(i)];
        best = i;
      }
    }
    return best;
  };

  add(rng.uniform_int(n));
  while (int(chosen.size()) < p) add(pick_best());

  if (p >= 2 && p < n) {
    // drop the random seed point and re-pick it by the same rule
    int first = chosen.front();
    chosen.erase(chosen.begin());
    used[size_t(first)] = 0;
    std::fill(score.begin(), score.end(), 0.0);
    for (int i = 0; i < n; ++i) {
      if (used[size_t(i)]) continue;
      for (int j : chosen) score[size_t(i)] += (data.values.row(i) - data.values.row(j)).norm();
    }
    int repick = pick_best();
    used[size_t(repick)] = 1;
    chosen.push_back(repick);
  }
  return chosen;
}

// Alternating minimization of ||X - C A'||_F^2 with both the per-point
// coefficients C and the per-archetype mixing weights B on the simplex,
// A = X' B. Each half-step solves warm-started simplex least squares whose
// result is never worse than the warm start, so the recorded RSS sequence is
// non-increasing.
inline ArchetypeSet fit_archetypes(const DataMatrix& data, int p,
                                   const FitOptions& opts = {}) {
  data.validate();
  const int n = data.rows();
  const int d = data.cols();
  require(p >= 1 && p <= n, ErrorKind::InvalidArity,
          "fit_archetypes: p must satisfy 1 <= p <= n (got p=" + std::to_string(p) +
              ", n=" + std::to_string(n) + ")");
  require(opts.tol >= 0.0 && opts.solver_tol > 0.0 && opts.max_iter >= 1,
          ErrorKind::InvalidInput, "fit_archetypes: bad options");

  bool degenerate = true;
  for (int i = 1; i < n && degenerate; ++i) {
    if ((data.values.row(i) - data.values.row(0)).cwiseAbs().maxCoeff() > 0.0)
      degenerate = false;
  }
  if (degenerate) {
    log(LogLevel::Warn, "fit_archetypes: all data rows identical; returning repeated archetype");
    ArchetypeSet out;
    out.archetypes = data.values.row(0).transpose().replicate(1, p);
    out.mixing_weights.assign(size_t(p), SimplexVector{Vector::Constant(n, 1.0 / n)});
    out.fit_rss = 0.0;
    out.iterations_used = 0;
    out.rss_history = {0.0};
    out.degenerate_data = true;
    return out;
  }

  Rng rng(opts.seed);
  const std::vector<int> init = furthest_sum(data, p, rng);

  const Matrix Xt = data.values.transpose();  // d x n
  Matrix A(d, p);
  Matrix B = Matrix::Zero(n, p);
  for (int j = 0; j < p; ++j) {
    A.col(j) = Xt.col(init[size_t(j)]);
    B(init[size_t(j)], j) = 1.0;
  }
  Matrix C = Matrix::Constant(n, p, 1.0 / p);

  const SimplexLsqOperator bstep_op(Xt);
  std::vector<double> rss_hist;
  rss_hist.reserve(size_t(opts.max_iter));
  double prev_rss = std::numeric_limits<double>::infinity();
  int iters = 0;

  for (int outer = 1; outer <= opts.max_iter; ++outer) {
    // C-step: coefficients of every point against the current archetypes.
    const SimplexLsqOperator cstep_op(A);
    parallel_for(n, opts.threads, [&](int i) {
      Vector warm = C.row(i).transpose();
      SimplexLsqResult r =
          cstep_op.solve(Xt.col(i), opts.solver_tol, opts.solver_max_iter, &warm);
      C.row(i) = r.coeffs.coeffs.transpose();
    });

    // B-step: cycle archetypes against the residual with that atom removed;
    // the least-squares target for atom j is R_j c_j / ||c_j||^2.
    Matrix R = Xt - A * C.transpose();  // d x n
    for (int j = 0; j < p; ++j) {
      Vector cj = C.col(j);
      double nc = cj.squaredNorm();
      if (nc <= 1e-30) continue;  // atom currently unused; leave it in place
      Matrix Rj = R + A.col(j) * cj.transpose();
      Vector v = (Rj * cj) / nc;
      Vector warm = B.col(j);
      SimplexLsqResult r = bstep_op.solve(v, opts.solver_tol, opts.solver_max_iter, &warm);
      B.col(j) = r.coeffs.coeffs;
      Vector a_new = Xt * B.col(j);
      R = Rj - a_new * cj.transpose();
      A.col(j) = a_new;
    }

    double rss = R.squaredNorm();
    rss_hist.push_back(rss);
    iters = outer;
    if (outer > 1) {
      double rel = (prev_rss - rss) / std::max(prev_rss, 1e-300);
      if (rel < opts.tol) {
        prev_rss = rss;
        break;
      }
    }
    prev_rss = rss;
  }

  ArchetypeSet out;
  out.archetypes = A;
  out.mixing_weights.reserve(size_t(p));
  for (int j = 0; j < p; ++j)
    out.mixing_weights.push_back(SimplexVector::checked(B.col(j)));
  out.fit_rss = rss_hist.back();
  out.iterations_used = iters;
  out.rss_history = std::move(rss_hist);
  return out;
}

// Max distance between stored archetypes and the mixtures they claim to be;
// used by tests and the certification harness.
inline double max_mixing_residual(const ArchetypeSet& a, const DataMatrix& data) {
  a.validate();
  data.validate();
  require(int(a.mixing_weights[0].coeffs.size()) == data.rows(), ErrorKind::ShapeError,
          "max_mixing_residual: mixing weights sized for a different dataset");
  double worst = 0.0;
  for (int j = 0; j < a.count(); ++j) {
    Vector rebuilt = data.values.transpose() * a.mixing_weights[size_t(j)].coeffs;
    worst = std::max(worst, (rebuilt - a.archetypes.col(j)).norm());
  }
  return worst;
}

inline SimplexVector project_point(const Vector& x, const ArchetypeSet& a,
                                   double tol = 1e-8, int max_iter = 20000) {
  require(int(x.size()) == a.dim(), ErrorKind::ShapeError,
          "project_point: point dimension does not match archetypes");
  return solve_simplex_lsq(x, a.archetypes, tol, max_iter).coeffs;
}

inline Vector reconstruct(const ArchetypeSet& a, const SimplexVector& c) {
  require(c.size() == a.count(), ErrorKind::ShapeError,
          "reconstruct: coefficient arity does not match archetype count");
  return a.archetypes * c.coeffs;
}

inline double reconstruction_error(const Vector& x, const ArchetypeSet& a,
                                   double tol = 1e-8) {
  return (x - reconstruct(a, project_point(x, a, tol))).norm();
}

// AAUQ: mean distance of the frames (columns) to the archetype hull.
inline double aauq(const Matrix& frames, const ArchetypeSet& a, double tol = 1e-8,
                   int max_iter = 20000) {
  require(frames.cols() >= 1, ErrorKind::InvalidInput, "aauq: need at least one frame");
  require(int(frames.rows()) == a.dim(), ErrorKind::ShapeError,
          "aauq: frame dimension does not match archetypes");
  const SimplexLsqOperator op(a.archetypes);
  double total = 0.0;
  for (int t = 0; t < frames.cols(); ++t) {
    SimplexLsqResult r = op.solve(frames.col(t), tol, max_iter);
    total += r.objective;
  }
  return total / double(frames.cols());
}

struct HullDistanceResult {
  double distance = 0.0;  // dist(x, conv(data rows))
  Vector witness;         // the nearest hull point found
  double delta_gap = 0.0; // ||x_hat - witness||, the certificate width
};

// Distance from x to the convex hull of the data rows, plus the gap between
// that witness and the point's archetype reconstruction. The AAUQ error of x
// is sandwiched within delta_gap of the true hull distance by the triangle
// inequality, which holds on the computed points regardless of solver
// convergence.
inline HullDistanceResult hull_distance(const Vector& x, const DataMatrix& data,
                                        const ArchetypeSet& a, double tol = 1e-8,
                                        int max_iter = 20000) {
  data.validate();
  require(int(x.size()) == data.cols(), ErrorKind::ShapeError,
          "hull_distance: point dimension does not match data");
  require(a.dim() == data.cols(), ErrorKind::ShapeError,
          "hull_distance: archetype dimension does not match data");
  SimplexLsqResult lam = solve_simplex_lsq(x, data.values.transpose(), tol, max_iter);
  Vector witness = data.values.transpose() * lam.coeffs.coeffs;
  Vector x_hat = reconstruct(a, project_point(x, a, tol, max_iter));
  HullDistanceResult out;
  out.distance = (x - witness).norm();
  out.delta_gap = (x_hat - witness).norm();
  out.witness = std::move(witness);
  return out;
}

struct ElbowResult {
  int p_min = 0;
  std::vector<double> rss_by_p;  // index i holds RSS at p = p_min + i
  int selected_p = 0;
};

// Fits every p in [p_min, p_max] and picks the smallest p whose relative RSS
// improvement over p-1 drops below rel_gate; p_max if none qualifies.
inline ElbowResult select_archetype_count(const DataMatrix& data, int p_min, int p_max,
                                          const FitOptions& opts = {},
                                          double rel_gate = 0.05) {
  data.validate();
  require(1 <= p_min && p_min <= p_max && p_max <= data.rows(), ErrorKind::InvalidArity,
          "select_archetype_count: need 1 <= p_min <= p_max <= n");
  ElbowResult out;
  out.p_min = p_min;
  for (int p = p_min; p <= p_max; ++p)
    out.rss_by_p.push_back(fit_archetypes(data, p, opts).fit_rss);
  out.selected_p = p_max;
  for (int p = p_min + 1; p <= p_max; ++p) {
    double prev = out.rss_by_p[size_t(p - 1 - p_min)];
    double cur = out.rss_by_p[size_t(p - p_min)];
    double improvement = (prev <= 1e-12) ? 0.0 : (prev - cur) / prev;
    if (improvement < rel_gate) {
      out.selected_p = p;
      break;
    }
  }
  return out;
}

}  // namespace pgdm
