#pragma once
// Pattern predictor f_A over simplex coefficients, the assembled guidance
// function f_G = A . f_A . c_A, the three error functionals, and the
// Theorem 1 bound check.

#include "pgdm/archetypal.hpp"
#include "pgdm/common.hpp"
#include "pgdm/data.hpp"
#include "pgdm/nn.hpp"

namespace pgdm {

struct PatternPredictor {
  Mlp net;
  int p = 0;  // archetype count
  int T = 0;  // history length
  int H = 0;  // horizon length

  bool trained() const { return p > 0 && T > 0 && H > 0 && !net.weights.empty(); }

  void validate() const {
    require(trained(), ErrorKind::InvalidState, "PatternPredictor: untrained");
    net.validate();
    require(net.input_dim() == p * T && net.output_dim() == p * H &&
                net.head == Head::StepSoftmax && net.softmax_group == p,
            ErrorKind::ShapeError, "PatternPredictor: network shape inconsistent with p/T/H");
  }
};

struct GuidanceOutput {
  std::vector<SimplexVector> predicted_coeffs;  // H vectors of length p
  Matrix predicted_pattern;                     // d x H, column h = A * coeffs[h]
};

namespace detail {

// Coefficients of each frame (column), stacked into one flat vector.
inline Vector project_frames_flat(const Matrix& frames, const SimplexLsqOperator& op,
                                  double tol = 1e-8, int max_iter = 2000) {
  const int p = op.arity();
  Vector out(p * frames.cols());
  for (int t = 0; t < frames.cols(); ++t)
    out.segment(t * p, p) = op.solve(frames.col(t), tol, max_iter).coeffs.coeffs;
  return out;
}

}  // namespace detail

struct PredictorTrainConfig {
  std::vector<int> hidden_dims{64, 64};
  Activation activation = Activation::Tanh;
  double lr = 1e-3;
  int batch_size = 32;
  int epochs = 150;
  int patience = 20;  // early stop on validation MAE
  uint64_t seed = 0;
  double solver_tol = 1e-8;
};

struct PredictorTrainReport {
  std::vector<double> train_kl;  // mean per-sample KL per epoch
  std::vector<double> val_mae;   // lifted-space MAE per epoch (empty if no val set)
  int best_epoch = 0;
  double best_val_mae = 0.0;
  int epochs_run = 0;
};

// Trains f_A on projected coefficients with the KL loss; early-stops on MAE
// in the lifted data space against the true horizon frames of `val`.
inline PatternPredictor train_pattern_predictor(const std::vector<SequenceWindow>& train,
                                                const std::vector<SequenceWindow>& val,
                                                const ArchetypeSet& A,
                                                const PredictorTrainConfig& cfg = {},
                                                PredictorTrainReport* report = nullptr) {
  require(!train.empty(), ErrorKind::InvalidInput,
          "train_pattern_predictor: empty training set");
  A.validate();
  const int d = train.front().dim();
  const int T = train.front().history_len();
  const int H = train.front().horizon_len();
  const int p = A.count();
  require(A.dim() == d, ErrorKind::ShapeError,
          "train_pattern_predictor: archetype dimension does not match windows");
  auto check_window = [&](const SequenceWindow& w) {
    w.validate();
    require(w.dim() == d && w.history_len() == T && w.horizon_len() == H,
            ErrorKind::ShapeError, "train_pattern_predictor: windows must share d, T, H");
  };
  for (const auto& w : train) check_window(w);
  for (const auto& w : val) check_window(w);
  require(cfg.epochs >= 1 && cfg.batch_size >= 1 && cfg.patience >= 1 && cfg.lr > 0,
          ErrorKind::InvalidInput, "train_pattern_predictor: bad hyperparameters");

  const SimplexLsqOperator proj(A.archetypes);
  std::vector<Vector> inputs, targets;
  inputs.reserve(train.size());
  targets.reserve(train.size());
  for (const auto& w : train) {
    inputs.push_back(detail::project_frames_flat(w.history, proj, cfg.solver_tol));
    targets.push_back(detail::project_frames_flat(w.horizon, proj, cfg.solver_tol));
  }
  std::vector<Vector> val_inputs;
  val_inputs.reserve(val.size());
  for (const auto& w : val)
    val_inputs.push_back(detail::project_frames_flat(w.history, proj, cfg.solver_tol));

  std::vector<int> dims;
  dims.push_back(p * T);
  for (int h : cfg.hidden_dims) dims.push_back(h);
  dims.push_back(p * H);

  Rng rng(cfg.seed);
  Mlp net = make_mlp(dims, cfg.activation, Head::StepSoftmax, p, rng);
  AdamState adam = AdamState::like(net, cfg.lr);
  Gradients grads = Gradients::like(net);

  auto validation_mae = [&]() {
    double total = 0.0;
    for (size_t i = 0; i < val.size(); ++i) {
      Vector out = forward(net, val_inputs[i]);
      double err = 0.0;
      for (int h = 0; h < H; ++h)
        err += (A.archetypes * out.segment(h * p, p) - val[i].horizon.col(h))
                   .cwiseAbs()
                   .sum();
      total += err / double(d * H);
    }
    return total / double(val.size());
  };

  Mlp best_net = net;
  double best_mae = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  int epochs_run = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    epochs_run = epoch;
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size)) {
      size_t stop = std::min(order.size(), start + size_t(cfg.batch_size));
      grads.set_zero();
      for (size_t k = start; k < stop; ++k) {
        int i = order[k];
        epoch_loss += loss_and_gradients(net, LossKind::KlDivergence,
                                         inputs[size_t(i)], targets[size_t(i)], grads);
      }
      grads.scale(1.0 / double(stop - start));
      adam_step(adam, net, grads);
    }
    if (report) report->train_kl.push_back(epoch_loss / double(train.size()));

    if (!val.empty()) {
      double mae = validation_mae();
      if (report) report->val_mae.push_back(mae);
      if (mae < best_mae) {
        best_mae = mae;
        best_net = net;
        best_epoch = epoch;
      } else if (epoch - best_epoch >= cfg.patience) {
        break;
      }
    }
  }

  if (!val.empty()) net = best_net;
  if (report) {
    report->best_epoch = val.empty() ? epochs_run : best_epoch;
    report->best_val_mae = val.empty() ? 0.0 : best_mae;
    report->epochs_run = epochs_run;
  }
  return PatternPredictor{std::move(net), p, T, H};
}

// P and its coefficients for one history: project -> predict -> lift.
inline GuidanceOutput guide(const PatternPredictor& fA, const ArchetypeSet& A,
                            const Matrix& history, double solver_tol = 1e-8) {
  fA.validate();
  A.validate();
  require(A.count() == fA.p, ErrorKind::ShapeError,
          "guide: archetype count does not match predictor");
  require(int(history.rows()) == A.dim() && int(history.cols()) == fA.T,
          ErrorKind::ShapeError, "guide: history must be d x T");
  require(history.allFinite(), ErrorKind::InvalidInput, "guide: non-finite history");

  const SimplexLsqOperator proj(A.archetypes);
  Vector input = detail::project_frames_flat(history, proj, solver_tol);
  Vector out = forward(fA.net, input);

  GuidanceOutput g;
  g.predicted_pattern.resize(A.dim(), fA.H);
  for (int h = 0; h < fA.H; ++h) {
    SimplexVector c = SimplexVector::checked(out.segment(h * fA.p, fA.p));
    g.predicted_pattern.col(h) = A.archetypes * c.coeffs;
    g.predicted_coeffs.push_back(std::move(c));
  }
  return g;
}

// L_fA: distance between lifted true horizon coefficients and lifted
// predictions, Frobenius over the d x H block.
inline double error_L_fA(const PatternPredictor& fA, const ArchetypeSet& A,
                         const SequenceWindow& w, double solver_tol = 1e-8) {
  GuidanceOutput g = guide(fA, A, w.history, solver_tol);
  const SimplexLsqOperator proj(A.archetypes);
  double total = 0.0;
  for (int h = 0; h < fA.H; ++h) {
    Vector lifted = A.archetypes * proj.solve(w.horizon.col(h), solver_tol).coeffs.coeffs;
    total += (lifted - g.predicted_pattern.col(h)).squaredNorm();
  }
  return std::sqrt(total);
}

// L_fG: distance between the true horizon and the predicted pattern.
inline double error_L_fG(const PatternPredictor& fA, const ArchetypeSet& A,
                         const SequenceWindow& w, double solver_tol = 1e-8) {
  GuidanceOutput g = guide(fA, A, w.history, solver_tol);
  return (w.horizon - g.predicted_pattern).norm();
}

struct Theorem1Check {
  double lhs = 0.0;           // L_fG
  double rhs = 0.0;           // L_cA(horizon) - L_fA
  double l_ca_horizon = 0.0;  // reconstruction error of the horizon block
  double l_fa = 0.0;
  bool holds = false;
};

// L_fG >= L_cA(horizon) - L_fA. All three quantities share one set of
// projections, so the inequality is a triangle inequality on computed points
// and must hold regardless of solver convergence.
inline Theorem1Check check_theorem1(const PatternPredictor& fA, const ArchetypeSet& A,
                                    const SequenceWindow& w, double tol = 1e-9,
                                    double solver_tol = 1e-8) {
  w.validate();
  GuidanceOutput g = guide(fA, A, w.history, solver_tol);
  const SimplexLsqOperator proj(A.archetypes);
  Matrix horizon_recon(A.dim(), fA.H);
  for (int h = 0; h < fA.H; ++h)
    horizon_recon.col(h) =
        A.archetypes * proj.solve(w.horizon.col(h), solver_tol).coeffs.coeffs;

  Theorem1Check out;
  out.lhs = (w.horizon - g.predicted_pattern).norm();
  out.l_ca_horizon = (w.horizon - horizon_recon).norm();
  out.l_fa = (horizon_recon - g.predicted_pattern).norm();
  out.rhs = out.l_ca_horizon - out.l_fa;
  out.holds = out.lhs >= out.rhs - tol;
  return out;
}

}  // namespace pgdm
