#pragma once
// DDPM machinery: noise schedule, closed-form forward noising, denoiser
// training with conditioning dropout, classifier-free guidance with a
// dynamically scaled weight, and reverse sampling with pattern mixing.

#include "pgdm/common.hpp"
#include "pgdm/data.hpp"
#include "pgdm/guidance.hpp"
#include "pgdm/nn.hpp"

namespace pgdm {

enum class ScheduleKind { Linear };

struct NoiseSchedule {
  int S = 0;
  Vector betas;       // beta_s, s = 1..S at index s-1
  Vector alphas;      // 1 - beta_s
  Vector alpha_bars;  // prod_{i<=s} alpha_i
  double beta_start = 0.0, beta_end = 0.0;

  void validate() const {
    require(S >= 1 && int(betas.size()) == S && int(alphas.size()) == S &&
                int(alpha_bars.size()) == S,
            ErrorKind::ShapeError, "NoiseSchedule: inconsistent sizes");
    for (int s = 0; s < S; ++s) {
      require(betas[s] > 0.0 && betas[s] < 1.0, ErrorKind::InvalidInput,
              "NoiseSchedule: betas must lie in (0,1)");
      if (s > 0) {
        require(betas[s] >= betas[s - 1], ErrorKind::InvalidInput,
                "NoiseSchedule: betas must be non-decreasing");
        require(alpha_bars[s] < alpha_bars[s - 1], ErrorKind::InvalidInput,
                "NoiseSchedule: alpha_bars must be strictly decreasing");
      }
    }
  }
};

inline NoiseSchedule make_schedule(int S, double beta_start = 1e-4,
                                   double beta_end = 0.05,
                                   ScheduleKind kind = ScheduleKind::Linear) {
  require(S >= 1, ErrorKind::InvalidInput, "make_schedule: S must be >= 1");
  require(beta_start > 0.0 && beta_end < 1.0 && beta_end >= beta_start,
          ErrorKind::InvalidInput, "make_schedule: need 0 < beta_start <= beta_end < 1");
  (void)kind;  // only the linear ramp exists
  NoiseSchedule sched;
  sched.S = S;
  sched.beta_start = beta_start;
  sched.beta_end = beta_end;
  sched.betas.resize(S);
  for (int s = 0; s < S; ++s) {
    double t = (S == 1) ? 0.0 : double(s) / double(S - 1);
    sched.betas[s] = beta_start + t * (beta_end - beta_start);
  }
  sched.alphas = 1.0 - sched.betas.array();
  sched.alpha_bars.resize(S);
  double prod = 1.0;
  for (int s = 0; s < S; ++s) {
    prod *= sched.alphas[s];
    sched.alpha_bars[s] = prod;
  }
  sched.validate();
  return sched;
}

// Closed-form noising: sqrt(abar_s) x0 + sqrt(1 - abar_s) noise.
inline Vector forward_sample(const Vector& x0, int s, const NoiseSchedule& sched,
                             const Vector& noise) {
  require(s >= 1 && s <= sched.S, ErrorKind::InvalidInput,
          "forward_sample: step outside [1, S]");
  require(noise.size() == x0.size(), ErrorKind::ShapeError,
          "forward_sample: noise shape does not match x0");
  double ab = sched.alpha_bars[s - 1];
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * noise;
}

// Dynamic guidance scale: ReLU(-max_scale/gamma * u + max_scale). Equals
// max_scale at u = 0 and cuts to 0 for u >= gamma.
inline double dynamic_scale(double u, double max_scale, double gamma) {
  require(u >= 0.0, ErrorKind::InvalidInput, "dynamic_scale: negative uncertainty");
  require(max_scale >= 0.0, ErrorKind::InvalidInput, "dynamic_scale: negative max scale");
  require(gamma > 0.0, ErrorKind::InvalidInput, "dynamic_scale: gamma must be positive");
  return std::max(-max_scale / gamma * u + max_scale, 0.0);
}

struct GuidanceConfig {
  double w_bar = 1.0;       // max guidance scale, >= 0
  double w_star_bar = 0.2;  // max mixing scale, in [0, 1]
  double gamma = 0.1;       // max tolerable uncertainty, > 0
  double p_drop = 0.2;      // conditioning dropout probability

  void validate() const {
    require(w_bar >= 0.0, ErrorKind::InvalidInput, "GuidanceConfig: w_bar must be >= 0");
    require(w_star_bar >= 0.0 && w_star_bar <= 1.0, ErrorKind::InvalidInput,
            "GuidanceConfig: w_star_bar must lie in [0,1]");
    require(gamma > 0.0, ErrorKind::InvalidInput, "GuidanceConfig: gamma must be > 0");
    require(p_drop >= 0.0 && p_drop <= 1.0, ErrorKind::InvalidInput,
            "GuidanceConfig: p_drop must lie in [0,1]");
  }
};

// Sinusoidal timestep features, interleaved sin/cos over geometric
// frequencies (base 10000).
inline Vector timestep_embedding(int s, int dim) {
  require(dim >= 2 && dim % 2 == 0, ErrorKind::InvalidInput,
          "timestep_embedding: dim must be even and >= 2");
  Vector e(dim);
  int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    double freq = std::pow(10000.0, -double(i) / double(half));
    e[2 * i] = std::sin(double(s) * freq);
    e[2 * i + 1] = std::cos(double(s) * freq);
  }
  return e;
}

// eps predictor over flattened, normalized blocks. Input layout:
//   [ z (d*H) | history (d*T) | pattern or zeros (d*H) | is-null flag | time embedding ]
// The null conditioning token is all zeros with the flag set to 1.
struct Denoiser {
  Mlp net;
  int d = 0, T = 0, H = 0;
  int time_embed_dim = 16;
  AffineNormalizer normalizer;

  bool trained() const { return d > 0 && !net.weights.empty(); }
  int input_dim() const { return d * H + d * T + d * H + 1 + time_embed_dim; }

  void validate() const {
    require(trained(), ErrorKind::InvalidState, "Denoiser: untrained");
    net.validate();
    require(net.input_dim() == input_dim() && net.output_dim() == d * H,
            ErrorKind::ShapeError, "Denoiser: network shape inconsistent with d/T/H");
  }
};

namespace detail {

inline Vector flatten(const Matrix& frames) {
  return Eigen::Map<const Vector>(frames.data(), frames.size());
}

inline Matrix unflatten(const Vector& v, int d, int cols) {
  require(int(v.size()) == d * cols, ErrorKind::ShapeError, "unflatten: size mismatch");
  return Eigen::Map<const Matrix>(v.data(), d, cols);
}

inline Vector denoiser_input(const Denoiser& den, const Vector& z, const Vector& hist,
                             const Vector* pattern, int s) {
  const int dH = den.d * den.H, dT = den.d * den.T;
  require(int(z.size()) == dH && int(hist.size()) == dT, ErrorKind::ShapeError,
          "denoiser input: flattened block sizes do not match d/T/H");
  Vector in(den.input_dim());
  in.segment(0, dH) = z;
  in.segment(dH, dT) = hist;
  if (pattern) {
    require(int(pattern->size()) == dH, ErrorKind::ShapeError,
            "denoiser input: pattern block size mismatch");
    in.segment(dH + dT, dH) = *pattern;
    in[dH + dT + dH] = 0.0;
  } else {
    in.segment(dH + dT, dH).setZero();
    in[dH + dT + dH] = 1.0;  // is-null flag
  }
  in.segment(dH + dT + dH + 1, den.time_embed_dim) = timestep_embedding(s, den.time_embed_dim);
  return in;
}

}  // namespace detail

// One network evaluation; pattern == nullptr selects the null token.
inline Vector denoiser_eps(const Denoiser& den, const Vector& z, const Vector& hist,
                           const Vector* pattern, int s) {
  return forward(den.net, detail::denoiser_input(den, z, hist, pattern, s));
}

// Classifier-free combination w * eps_cond + (1-w) * eps_uncond. The w = 0
// and w = 1 ends evaluate only the branch they need, so they reduce bitwise.
inline Vector guided_epsilon(const Denoiser& den, const Vector& z, const Vector& hist,
                             const Vector& pattern, double w, int s) {
  if (w == 0.0) return denoiser_eps(den, z, hist, nullptr, s);
  if (w == 1.0) return denoiser_eps(den, z, hist, &pattern, s);
  return w * denoiser_eps(den, z, hist, &pattern, s) +
         (1.0 - w) * denoiser_eps(den, z, hist, nullptr, s);
}

struct DenoiserTrainConfig {
  std::vector<int> hidden_dims{64, 64};
  Activation activation = Activation::Relu;
  double lr = 1e-3;
  int batch_size = 32;
  int epochs = 30;
  int time_embed_dim = 16;
  uint64_t seed = 0;
  double solver_tol = 1e-8;
};

struct DenoiserTrainReport {
  std::vector<double> epoch_loss;  // mean per-sample MSE per epoch
};

// Algorithm: per sample, draw s uniform in 1..S and eps ~ N(0, I), noise the
// normalized horizon in closed form, and regress eps with the pattern
// conditioning dropped to the null token with probability p_drop. Patterns
// are precomputed per window by `guide` since they depend only on the
// history.
inline Denoiser train_denoiser(const std::vector<SequenceWindow>& train,
                               const ArchetypeSet& A, const PatternPredictor& fA,
                               const NoiseSchedule& sched, const GuidanceConfig& gcfg,
                               const DenoiserTrainConfig& tcfg = {},
                               DenoiserTrainReport* report = nullptr) {
  require(!train.empty(), ErrorKind::InvalidInput, "train_denoiser: empty training set");
  require(fA.trained(), ErrorKind::InvalidState, "train_denoiser: pattern predictor untrained");
  fA.validate();
  A.validate();
  sched.validate();
  gcfg.validate();
  require(tcfg.epochs >= 1 && tcfg.batch_size >= 1 && tcfg.lr > 0,
          ErrorKind::InvalidInput, "train_denoiser: bad hyperparameters");

  Denoiser den;
  den.d = train.front().dim();
  den.T = train.front().history_len();
  den.H = train.front().horizon_len();
  den.time_embed_dim = tcfg.time_embed_dim;
  require(fA.T == den.T && fA.H == den.H && A.dim() == den.d, ErrorKind::ShapeError,
          "train_denoiser: predictor/archetypes shaped for different windows");
  for (const auto& w : train) {
    w.validate();
    require(w.dim() == den.d && w.history_len() == den.T && w.horizon_len() == den.H,
            ErrorKind::ShapeError, "train_denoiser: windows must share d, T, H");
  }
  den.normalizer = AffineNormalizer::fit(train);

  const int dH = den.d * den.H;
  std::vector<Vector> hist_n, x0_n, pattern_n;
  hist_n.reserve(train.size());
  x0_n.reserve(train.size());
  pattern_n.reserve(train.size());
  for (const auto& w : train) {
    hist_n.push_back(detail::flatten(den.normalizer.apply(w.history)));
    x0_n.push_back(detail::flatten(den.normalizer.apply(w.horizon)));
    GuidanceOutput g = guide(fA, A, w.history, tcfg.solver_tol);
    pattern_n.push_back(detail::flatten(den.normalizer.apply(g.predicted_pattern)));
  }

  std::vector<int> dims;
  dims.push_back(den.input_dim());
  for (int h : tcfg.hidden_dims) dims.push_back(h);
  dims.push_back(dH);

  Rng rng(tcfg.seed);
  den.net = make_mlp(dims, tcfg.activation, Head::Linear, 0, rng);
  // Zero the first-layer columns that read the conditioning block, so a
  // model trained with p_drop = 1 is exactly the unconditional model.
  {
    int cond_lo = dH + den.d * den.T;
    int cond_len = dH + 1;
    den.net.weights[0].middleCols(cond_lo, cond_len).setZero();
  }

  AdamState adam = AdamState::like(den.net, tcfg.lr);
  Gradients grads = Gradients::like(den.net);
  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (size_t start = 0; start < order.size(); start += size_t(tcfg.batch_size)) {
      size_t stop = std::min(order.size(), start + size_t(tcfg.batch_size));
      grads.set_zero();
      for (size_t k = start; k < stop; ++k) {
        int i = order[k];
        int s = 1 + rng.uniform_int(sched.S);
        bool drop = rng.uniform() < gcfg.p_drop;
        Vector eps = rng.normal_vec(dH);
        Vector z = forward_sample(x0_n[size_t(i)], s, sched, eps);
        Vector in = detail::denoiser_input(den, z, hist_n[size_t(i)],
                                           drop ? nullptr : &pattern_n[size_t(i)], s);
        epoch_loss += loss_and_gradients(den.net, LossKind::SquaredError, in, eps, grads);
      }
      grads.scale(1.0 / double(stop - start));
      adam_step(adam, den.net, grads);
    }
    if (report) report->epoch_loss.push_back(epoch_loss / double(train.size()));
  }
  return den;
}

struct HorizonSample {
  Matrix forecast;  // d x H, original (un-normalized) space
  double u = 0.0;
  double w_used = 0.0;
  double w_star_used = 0.0;
};

// Algorithm: compute the pattern prediction, the AAUQ of the history, and
// both dynamic scales once; run the reverse diffusion with the fixed guidance
// weight; then mix the pattern into the denoised output with w*.
inline HorizonSample sample_horizon(const Denoiser& den, const PatternPredictor& fA,
                                    const ArchetypeSet& A, const NoiseSchedule& sched,
                                    const GuidanceConfig& cfg, const Matrix& history,
                                    Rng& rng, double solver_tol = 1e-8) {
  den.validate();
  fA.validate();
  sched.validate();
  cfg.validate();
  require(int(history.rows()) == den.d && int(history.cols()) == den.T,
          ErrorKind::ShapeError, "sample_horizon: history must be d x T");

  GuidanceOutput g = guide(fA, A, history, solver_tol);
  double u = aauq(history, A, solver_tol);
  double w = dynamic_scale(u, cfg.w_bar, cfg.gamma);
  double w_star = dynamic_scale(u, cfg.w_star_bar, cfg.gamma);

  Vector hist_n = detail::flatten(den.normalizer.apply(history));
  Vector pattern_n = detail::flatten(den.normalizer.apply(g.predicted_pattern));
  const int dH = den.d * den.H;

  Vector x = rng.normal_vec(dH);
  for (int s = sched.S; s >= 1; --s) {
    Vector noise = (s > 1) ? rng.normal_vec(dH) : Vector::Zero(dH);
    Vector eps = guided_epsilon(den, x, hist_n, pattern_n, w, s);
    double a = sched.alphas[s - 1];
    double ab = sched.alpha_bars[s - 1];
    double b = sched.betas[s - 1];
    x = (x - ((1.0 - a) / std::sqrt(1.0 - ab)) * eps) / std::sqrt(a) +
        std::sqrt(b) * noise;
    require(x.allFinite(), ErrorKind::NumericalDivergence,
            "sample_horizon: non-finite state at diffusion step " + std::to_string(s));
  }
  Matrix x0 = den.normalizer.invert(detail::unflatten(x, den.d, den.H));

  HorizonSample out;
  out.u = u;
  out.w_used = w;
  out.w_star_used = w_star;
  // Mixing happens in the original space; the w* = 0 and 1 ends reduce
  // bitwise to the diffusion output and the raw pattern respectively.
  if (w_star == 0.0)
    out.forecast = std::move(x0);
  else if (w_star == 1.0)
    out.forecast = g.predicted_pattern;
  else
    out.forecast = w_star * g.predicted_pattern + (1.0 - w_star) * x0;
  return out;
}

}  // namespace pgdm
