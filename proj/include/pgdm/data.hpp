#pragma once
// Synthetic pattern-sequence generation with known ground-truth archetypes,
// CSV sequence I/O, sliding windows, sequence-level splits, and the affine
// normalizer shared with the diffusion model.

#include "pgdm/archetypal.hpp"
#include "pgdm/common.hpp"

#include <array>
#include <cctype>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>

namespace pgdm {

// A (history, horizon) pair. Frames are columns.
struct SequenceWindow {
  Matrix history;  // d x T
  Matrix horizon;  // d x H
  int source_id = 0;
  int offset = 0;

  int dim() const { return int(history.rows()); }
  int history_len() const { return int(history.cols()); }
  int horizon_len() const { return int(horizon.cols()); }

  void validate() const {
    require(history.cols() >= 1 && horizon.cols() >= 1, ErrorKind::ShapeError,
            "SequenceWindow: empty history or horizon");
    require(history.rows() == horizon.rows(), ErrorKind::ShapeError,
            "SequenceWindow: history/horizon dimension mismatch");
    require(history.allFinite() && horizon.allFinite(), ErrorKind::InvalidInput,
            "SequenceWindow: non-finite frame");
  }
};

enum class CoeffDynamics { Constant, LinearDrift, Oscillating, RandomWalk };

inline const char* to_string(CoeffDynamics d) {
  switch (d) {
    case CoeffDynamics::Constant: return "constant";
    case CoeffDynamics::LinearDrift: return "linear_drift";
    case CoeffDynamics::Oscillating: return "oscillating";
    case CoeffDynamics::RandomWalk: return "random_walk";
  }
  return "unknown";
}

inline CoeffDynamics coeff_dynamics_from_string(const std::string& s) {
  if (s == "constant") return CoeffDynamics::Constant;
  if (s == "linear_drift") return CoeffDynamics::LinearDrift;
  if (s == "oscillating") return CoeffDynamics::Oscillating;
  if (s == "random_walk") return CoeffDynamics::RandomWalk;
  fail(ErrorKind::ParseError, "unknown coefficient dynamics '" + s + "'");
}

struct SyntheticSpec {
  int d = 8;
  int p_true = 4;
  int n_sequences = 400;
  int sequence_length = 40;
  CoeffDynamics dynamics = CoeffDynamics::Oscillating;
  double noise_sigma = 0.01;
  double ood_fraction = 0.0;  // fraction of sequences pushed outside the hull
  double ood_offset = 0.5;    // outward-normal distance for those sequences
  // Fixed archetypes instead of random ones (d x p); used by tests that need
  // an analytically known hull.
  std::optional<Matrix> archetype_override;

  void validate() const {
    require(d >= 1 && n_sequences >= 1 && sequence_length >= 1, ErrorKind::InvalidInput,
            "SyntheticSpec: d, n_sequences, sequence_length must be positive");
    require(noise_sigma >= 0.0, ErrorKind::InvalidInput, "SyntheticSpec: negative noise");
    require(ood_fraction >= 0.0 && ood_fraction <= 1.0, ErrorKind::InvalidInput,
            "SyntheticSpec: ood_fraction outside [0,1]");
    require(ood_offset >= 0.0, ErrorKind::InvalidInput, "SyntheticSpec: negative ood_offset");
    if (archetype_override) {
      require(int(archetype_override->rows()) == d && archetype_override->cols() >= 1,
              ErrorKind::ShapeError, "SyntheticSpec: override archetypes mis-shaped");
      require(archetype_override->allFinite(), ErrorKind::InvalidInput,
              "SyntheticSpec: non-finite override archetypes");
    } else {
      require(p_true >= 1 && p_true <= d + 1, ErrorKind::InvalidArity,
              "SyntheticSpec: need 1 <= p_true <= d+1 for affinely independent archetypes");
    }
  }
};

struct SyntheticDataset {
  std::vector<Matrix> sequences;  // each d x L, frames as columns
  Matrix archetypes_true;         // d x p
  std::vector<std::vector<Vector>> coeff_paths;
  std::vector<bool> ood_flags;
};

namespace detail {

// Dirichlet(1,...,1) via normalized exponentials.
inline Vector random_simplex_point(Rng& rng, int p) {
  Vector e(p);
  for (int i = 0; i < p; ++i) e[i] = -std::log(1.0 - rng.uniform());
  double s = e.sum();
  if (s <= 0.0) return Vector::Constant(p, 1.0 / p);
  return e / s;
}

// Coefficient path on the simplex; every rule is a convex combination of
// simplex points, so paths stay on the simplex exactly.
inline std::vector<Vector> coeff_path(Rng& rng, CoeffDynamics dyn, int p, int len) {
  std::vector<Vector> path;
  path.reserve(size_t(len));
  switch (dyn) {
    case CoeffDynamics::Constant: {
      Vector c = random_simplex_point(rng, p);
      path.assign(size_t(len), c);
      break;
    }
    case CoeffDynamics::LinearDrift: {
      Vector a = random_simplex_point(rng, p);
      Vector b = random_simplex_point(rng, p);
      for (int t = 0; t < len; ++t) {
        double tau = (len == 1) ? 0.0 : double(t) / double(len - 1);
        path.push_back((1.0 - tau) * a + tau * b);
      }
      break;
    }
    case CoeffDynamics::Oscillating: {
      // period-2 alternation between two anchors: c_{t+2} = c_t exactly
      Vector a = random_simplex_point(rng, p);
      Vector b = random_simplex_point(rng, p);
      for (int t = 0; t < len; ++t) path.push_back((t % 2 == 0) ? a : b);
      break;
    }
    case CoeffDynamics::RandomWalk: {
      const double rho = 0.25;
      Vector c = random_simplex_point(rng, p);
      for (int t = 0; t < len; ++t) {
        path.push_back(c);
        c = (1.0 - rho) * c + rho * random_simplex_point(rng, p);
      }
      break;
    }
  }
  return path;
}

}  // namespace detail

// Frames are x_t = A_true c_t + offset * u_hat (OOD sequences only) + noise.
// When the archetypes do not span all of R^d the outward direction u_hat is
// drawn from the orthogonal complement of their affine hull, so every clean
// OOD frame sits at exactly `ood_offset` from Conv(A_true). For full-
// dimensional hulls the push goes along a random unit direction and the
// coefficients are confined to the archetypes extremal in that direction.
inline SyntheticDataset generate(const SyntheticSpec& spec, uint64_t seed) {
  spec.validate();
  Rng rng(seed);

  SyntheticDataset out;
  const int d = spec.d;
  int p;
  if (spec.archetype_override) {
    out.archetypes_true = *spec.archetype_override;
    p = int(out.archetypes_true.cols());
  } else {
    p = spec.p_true;
    // Rejection-sample until the archetypes are affinely independent
    // (almost surely immediate for Gaussian draws).
    for (int attempt = 0; attempt < 64; ++attempt) {
      Matrix a(d, p);
      for (int j = 0; j < p; ++j) a.col(j) = rng.normal_vec(d);
      if (p == 1) {
        out.archetypes_true = a;
        break;
      }
      Matrix centered = a.colwise() - a.rowwise().mean();
      Eigen::JacobiSVD<Matrix> svd(centered);
      double smax = svd.singularValues()[0];
      int rank = 0;
      for (int i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()[i] > 1e-9 * smax) ++rank;
      if (rank == p - 1) {
        out.archetypes_true = a;
        break;
      }
    }
    require(out.archetypes_true.size() > 0, ErrorKind::NumericalDivergence,
            "generate: failed to sample affinely independent archetypes");
  }

  // Orthogonal complement of the archetypes' affine hull (empty when the
  // hull is full-dimensional).
  Matrix complement(d, 0);
  {
    Matrix centered = out.archetypes_true.colwise() - out.archetypes_true.rowwise().mean();
    Eigen::JacobiSVD<Matrix> svd(centered, Eigen::ComputeFullU);
    double smax = (svd.singularValues().size() > 0) ? svd.singularValues()[0] : 0.0;
    int rank = 0;
    for (int i = 0; i < svd.singularValues().size(); ++i)
      if (smax > 0.0 && svd.singularValues()[i] > 1e-9 * smax) ++rank;
    if (rank < d) complement = svd.matrixU().rightCols(d - rank);
  }

  // Which sequences go out-of-distribution.
  out.ood_flags.assign(size_t(spec.n_sequences), false);
  int n_ood = int(std::lround(spec.ood_fraction * spec.n_sequences));
  if (n_ood > 0) {
    std::vector<int> idx(static_cast<size_t>(spec.n_sequences));
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    for (int i = 0; i < n_ood; ++i) out.ood_flags[size_t(idx[size_t(i)])] = true;
  }

  const Matrix& A = out.archetypes_true;
  const int L = spec.sequence_length;
  for (int sidx = 0; sidx < spec.n_sequences; ++sidx) {
    bool ood = out.ood_flags[size_t(sidx)] && spec.ood_offset > 0.0;
    Vector u_hat = Vector::Zero(d);
    std::vector<Vector> path;
    if (!ood) {
      path = detail::coeff_path(rng, spec.dynamics, p, L);
    } else if (complement.cols() > 0) {
      // Direction orthogonal to the hull: offset is exact for every frame
      // and the coefficient dynamics stay unrestricted.
      Vector g = rng.normal_vec(int(complement.cols()));
      u_hat = complement * g;
      double nrm = u_hat.norm();
      u_hat = (nrm > 0.0) ? Vector(u_hat / nrm) : Vector(complement.col(0));
      path = detail::coeff_path(rng, spec.dynamics, p, L);
    } else {
      // Full-dimensional hull: push along a random direction and keep the
      // coefficients on the face extremal in that direction, so the offset
      // is again the exact distance to the hull.
      Vector g = rng.normal_vec(d);
      double nrm = g.norm();
      u_hat = (nrm > 0.0) ? Vector(g / nrm) : Vector(Vector::Unit(d, 0));
      Vector proj = A.transpose() * u_hat;
      double mx = proj.maxCoeff();
      std::vector<int> face;
      for (int j = 0; j < p; ++j)
        if (proj[j] >= mx - 1e-9) face.push_back(j);
      std::vector<Vector> sub = detail::coeff_path(rng, spec.dynamics, int(face.size()), L);
      path.reserve(size_t(L));
      for (const Vector& cs : sub) {
        Vector c = Vector::Zero(p);
        for (size_t k = 0; k < face.size(); ++k) c[face[k]] = cs[int(k)];
        path.push_back(std::move(c));
      }
    }

    Matrix seq(d, L);
    for (int t = 0; t < L; ++t) {
      Vector x = A * path[size_t(t)];
      if (ood) x += spec.ood_offset * u_hat;
      if (spec.noise_sigma > 0.0) x += spec.noise_sigma * rng.normal_vec(d);
      seq.col(t) = x;
    }
    out.sequences.push_back(std::move(seq));
    out.coeff_paths.push_back(std::move(path));
  }
  return out;
}

// All maximal windows per sequence; count is max(0, L - T - H + 1) at stride 1.
inline std::vector<SequenceWindow> sliding_windows(const std::vector<Matrix>& sequences,
                                                   int T, int H, int stride = 1) {
  require(T >= 1 && H >= 1, ErrorKind::InvalidInput, "sliding_windows: T and H must be >= 1");
  require(stride >= 1, ErrorKind::InvalidInput, "sliding_windows: stride must be >= 1");
  std::vector<SequenceWindow> out;
  for (size_t s = 0; s < sequences.size(); ++s) {
    const Matrix& seq = sequences[s];
    require(seq.allFinite(), ErrorKind::InvalidInput,
            "sliding_windows: non-finite frame in sequence " + std::to_string(s));
    int L = int(seq.cols());
    for (int off = 0; off + T + H <= L; off += stride) {
      SequenceWindow w;
      w.history = seq.middleCols(off, T);
      w.horizon = seq.middleCols(off + T, H);
      w.source_id = int(s);
      w.offset = off;
      out.push_back(std::move(w));
    }
  }
  return out;
}

// Split assignment at the sequence level: floor for train and val, remainder
// to test. A single sequence degenerates to all-train with a warning.
inline std::vector<int> assign_splits(int n_sequences, std::array<double, 3> ratios,
                                      uint64_t seed) {
  require(n_sequences >= 1, ErrorKind::InvalidInput, "assign_splits: no sequences");
  double sum = ratios[0] + ratios[1] + ratios[2];
  require(ratios[0] >= 0 && ratios[1] >= 0 && ratios[2] >= 0 && std::abs(sum - 1.0) <= 1e-6,
          ErrorKind::InvalidInput, "assign_splits: ratios must be nonnegative and sum to 1");
  std::vector<int> order(static_cast<size_t>(n_sequences));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<int> assignment(size_t(n_sequences), 2);
  if (n_sequences == 1) {
    log(LogLevel::Warn, "assign_splits: single sequence, placing it in train");
    assignment[0] = 0;
    return assignment;
  }
  int n_train = int(std::floor(ratios[0] * n_sequences + 1e-9));
  int n_val = int(std::floor(ratios[1] * n_sequences + 1e-9));
  for (int i = 0; i < n_sequences; ++i) {
    int rank = -1;
    for (int r = 0; r < n_sequences; ++r)
      if (order[size_t(r)] == i) rank = r;
    assignment[size_t(i)] = (rank < n_train) ? 0 : (rank < n_train + n_val) ? 1 : 2;
  }
  return assignment;
}

struct SplitWindows {
  std::vector<SequenceWindow> train, val, test;
};

// Sequence-level split of windows: every window of a source lands in exactly
// one part, so no horizon frame of a training window leaks into val/test.
inline SplitWindows split(const std::vector<SequenceWindow>& windows,
                          std::array<double, 3> ratios, uint64_t seed) {
  // distinct sources in order of appearance
  std::vector<int> sources;
  for (const auto& w : windows) {
    bool seen = false;
    for (int s : sources) seen = seen || (s == w.source_id);
    if (!seen) sources.push_back(w.source_id);
  }
  require(!sources.empty(), ErrorKind::InvalidInput, "split: no windows");
  std::vector<int> assignment = assign_splits(int(sources.size()), ratios, seed);
  SplitWindows out;
  for (const auto& w : windows) {
    int rank = 0;
    for (size_t i = 0; i < sources.size(); ++i)
      if (sources[i] == w.source_id) rank = int(i);
    int part = assignment[size_t(rank)];
    (part == 0 ? out.train : part == 1 ? out.val : out.test).push_back(w);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV I/O. One file per sequence, one row per frame, comma separated; an
// optional header row is skipped when its first field is not numeric.

inline Matrix load_sequence_csv(const std::string& path) {
  std::ifstream in(path);
  require(bool(in), ErrorKind::MissingArtifact, "cannot open sequence file " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string field;
    bool bad = false;
    while (std::getline(ss, field, ',')) {
      try {
        size_t pos = 0;
        double v = std::stod(field, &pos);
        while (pos < field.size() && std::isspace(static_cast<unsigned char>(field[pos]))) ++pos;
        if (pos != field.size()) throw std::invalid_argument(field);
        row.push_back(v);
      } catch (const std::exception&) {
        bad = true;
        break;
      }
    }
    if (bad) {
      require(first, ErrorKind::ParseError,
              "non-numeric field in " + path + " outside the header row");
      first = false;
      continue;  // header
    }
    require(rows.empty() || row.size() == rows.front().size(), ErrorKind::ParseError,
            "ragged rows in " + path);
    require(!row.empty(), ErrorKind::ParseError, "empty row in " + path);
    rows.push_back(std::move(row));
    first = false;
  }
  require(!rows.empty(), ErrorKind::ParseError, "no data rows in " + path);
  Matrix seq(int(rows.front().size()), int(rows.size()));
  for (size_t t = 0; t < rows.size(); ++t)
    for (size_t i = 0; i < rows[t].size(); ++i) seq(int(i), int(t)) = rows[t][i];
  require(seq.allFinite(), ErrorKind::InvalidInput, "non-finite value in " + path);
  return seq;  // d x L
}

inline void save_sequence_csv(const std::string& path, const Matrix& seq) {
  std::ofstream out(path);
  require(bool(out), ErrorKind::InvalidInput, "cannot write sequence file " + path);
  out.precision(17);
  for (int t = 0; t < seq.cols(); ++t) {
    for (int i = 0; i < seq.rows(); ++i) {
      if (i) out << ',';
      out << seq(i, t);
    }
    out << '\n';
  }
  require(bool(out), ErrorKind::InvalidInput, "failed writing " + path);
}

// ---------------------------------------------------------------------------
// Per-dimension affine map of training data onto [0,1]; constant dimensions
// keep scale 1 so the map stays invertible.

struct AffineNormalizer {
  Vector lo, scale;

  static AffineNormalizer fit(const std::vector<SequenceWindow>& windows) {
    require(!windows.empty(), ErrorKind::InvalidInput, "AffineNormalizer: no windows");
    int d = windows.front().dim();
    Vector lo = Vector::Constant(d, std::numeric_limits<double>::infinity());
    Vector hi = Vector::Constant(d, -std::numeric_limits<double>::infinity());
    auto absorb = [&](const Matrix& frames) {
      lo = lo.cwiseMin(frames.rowwise().minCoeff());
      hi = hi.cwiseMax(frames.rowwise().maxCoeff());
    };
    for (const auto& w : windows) {
      require(w.dim() == d, ErrorKind::ShapeError, "AffineNormalizer: mixed dimensions");
      absorb(w.history);
      absorb(w.horizon);
    }
    AffineNormalizer n;
    n.lo = lo;
    n.scale = (hi - lo).cwiseMax(0.0);
    for (int i = 0; i < d; ++i)
      if (n.scale[i] < 1e-12) n.scale[i] = 1.0;
    return n;
  }

  Vector apply(const Vector& x) const { return (x - lo).cwiseQuotient(scale); }
  Vector invert(const Vector& z) const { return z.cwiseProduct(scale) + lo; }
  Matrix apply(const Matrix& frames) const {
    Matrix out = frames.colwise() - lo;
    out.array().colwise() /= scale.array();
    return out;
  }
  Matrix invert(const Matrix& frames) const {
    Matrix out = frames;
    out.array().colwise() *= scale.array();
    return out.colwise() + lo;
  }
};

}  // namespace pgdm
