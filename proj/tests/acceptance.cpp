// Acceptance gate: nine checks, one [PASS]/[FAIL] line each, nonzero exit
// if any fail. Criteria 1 and 2 must finish inside a minute, the full
// pipeline check inside fifteen.

#include <pgdm/cli.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>

#include "helpers.hpp"

using namespace pgdm;
namespace stdfs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool g_all_pass = true;

void report(int n, const char* name, bool ok, const std::string& detail, double secs) {
  g_all_pass = g_all_pass && ok;
  std::printf("[%s] %d %s — %s (%.1f s)\n", ok ? "PASS" : "FAIL", n, name,
              detail.c_str(), secs);
  std::fflush(stdout);
}

ArchetypeSet identity_mixing(const Matrix& archetypes) {
  ArchetypeSet a;
  a.archetypes = archetypes;
  for (int j = 0; j < archetypes.cols(); ++j) {
    Vector e = Vector::Zero(archetypes.cols());
    e[j] = 1.0;
    a.mixing_weights.push_back(SimplexVector{e});
  }
  return a;
}

PatternPredictor random_predictor(int p, int T, int H, Rng& rng) {
  Mlp net = make_mlp({p * T, 32, p * H}, Activation::Tanh, Head::StepSoftmax, p, rng);
  for (int i = 0; i < net.biases.back().size(); ++i)
    net.biases.back()[i] = 2.0 * rng.normal();
  return PatternPredictor{std::move(net), p, T, H};
}

// --------------------------------------------------------------------------
// 1. Theorem 1 over >= 10^4 randomized (window, predictor) pairs.

void criterion1() {
  auto t0 = Clock::now();
  constexpr int kPairs = 10000;
  constexpr double kTol = 1e-9;

  SyntheticSpec spec;
  spec.d = 4;
  spec.p_true = 3;
  spec.n_sequences = 30;
  spec.sequence_length = 9;
  spec.noise_sigma = 0.02;
  spec.dynamics = CoeffDynamics::Oscillating;
  SyntheticDataset ds = generate(spec, 101);
  ArchetypeSet a = identity_mixing(ds.archetypes_true);
  std::vector<SequenceWindow> pool = sliding_windows(ds.sequences, 3, 2);

  Rng rng(102);
  std::vector<PatternPredictor> predictors;
  for (int i = 0; i < 100; ++i) predictors.push_back(random_predictor(3, 3, 2, rng));

  int violations = 0;
  double min_margin = std::numeric_limits<double>::infinity();
  for (int k = 0; k < kPairs; ++k) {
    SequenceWindow w;
    if (k % 2 == 0) {
      w = pool[size_t(k / 2) % pool.size()];
    } else {
      w.history = pgdm_test::random_matrix(rng, 4, 3, 2.0);
      w.horizon = pgdm_test::random_matrix(rng, 4, 2, 2.0);
    }
    Theorem1Check chk = check_theorem1(predictors[size_t(k % 100)], a, w, kTol);
    min_margin = std::min(min_margin, chk.lhs - chk.rhs);
    if (!chk.holds) ++violations;
  }
  double secs = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d pairs, %d violations at %.0e, min margin %.2e",
                kPairs, violations, kTol, min_margin);
  report(1, "theorem-1-certification", violations == 0 && secs < 60.0, buf, secs);
}

// --------------------------------------------------------------------------
// 2. Theorem 2 sandwich for >= 10^3 points, then the p = n equality.

void criterion2() {
  auto t0 = Clock::now();
  constexpr int kPoints = 1000;
  constexpr double kSandwichTol = 1e-6;
  constexpr double kEqTol = 1e-6;

  Rng rng(201);
  DataMatrix data;
  data.values = pgdm_test::random_matrix(rng, 60, 3, 1.5);  // 60 points in R^3
  FitOptions opts;
  opts.seed = 202;
  ArchetypeSet a = fit_archetypes(data, 4, opts);

  int violations = 0;
  double max_excess = 0.0;
  for (int k = 0; k < kPoints; ++k) {
    Vector base = data.values.row(int(rng.uniform_int(data.rows()))).transpose();
    Vector x = base + (k % 2 == 0 ? 0.1 : 2.0) * rng.normal_vec(3);
    double u = reconstruction_error(x, a, 1e-8);
    HullDistanceResult hd = hull_distance(x, data, a, 1e-7, 4000);
    double excess = std::abs(u - hd.distance) - hd.delta_gap;
    max_excess = std::max(max_excess, excess);
    if (excess > kSandwichTol) ++violations;
  }

  // p = n: the hull of the archetypes is the hull of the data, so the AAUQ
  // equals the hull distance outright.
  DataMatrix small;
  small.values = pgdm_test::random_matrix(rng, 20, 3, 1.5);
  ArchetypeSet a_eq = fit_archetypes(small, 20, opts);
  double max_eq = 0.0;
  for (int k = 0; k < 100; ++k) {
    Vector base = small.values.row(int(rng.uniform_int(20))).transpose();
    Vector x = base + (k % 2 == 0 ? 0.1 : 1.0) * rng.normal_vec(3);
    double u = reconstruction_error(x, a_eq, 1e-8);
    HullDistanceResult hd = hull_distance(x, small, a_eq, 1e-8, 20000);
    max_eq = std::max(max_eq, std::abs(u - hd.distance));
  }

  double secs = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "%d points, %d violations, max excess %.2e; p=n residual %.2e", kPoints,
                violations, max_excess, max_eq);
  report(2, "theorem-2-sandwich", violations == 0 && max_eq <= kEqTol && secs < 60.0,
         buf, secs);
}

// --------------------------------------------------------------------------
// 3. Archetypal solver soundness.

void criterion3() {
  auto t0 = Clock::now();
  constexpr double kRssSlack = 1e-10;
  constexpr double kDistinctTol = 1e-8;
  constexpr double kGridTol = 1e-2;

  Rng rng(301);
  bool monotone = true;
  for (int trial = 0; trial < 50; ++trial) {
    DataMatrix data;
    data.values = pgdm_test::random_matrix(rng, 24, 4, 2.0);
    FitOptions opts;
    opts.tol = 0.0;
    opts.max_iter = 25;
    opts.seed = uint64_t(400 + trial);
    ArchetypeSet a = fit_archetypes(data, 3, opts);
    for (size_t i = 1; i < a.rss_history.size(); ++i)
      monotone = monotone && (a.rss_history[i] <= a.rss_history[i - 1] + kRssSlack);
  }

  // p distinct points: choosing the points themselves is optimal (RSS -> 0)
  DataMatrix pts;
  pts.values = pgdm_test::random_matrix(rng, 5, 4, 2.0);
  FitOptions opts;
  opts.seed = 303;
  double distinct_rss = fit_archetypes(pts, 5, opts).fit_rss;

  // grid oracle for the simplex projection on every d <= 3 arity
  double max_gap = 0.0;
  bool never_worse = true;
  for (int d = 2; d <= 3; ++d)
    for (int p = 2; p <= 3; ++p)
      for (int rep = 0; rep < 3; ++rep) {
        Matrix basis = pgdm_test::random_matrix(rng, d, p, 1.5);
        Vector target = pgdm_test::random_matrix(rng, d, 1, 1.5).col(0);
        ArchetypeSet a = identity_mixing(basis);
        SimplexVector c = project_point(target, a, 1e-9);
        double f_solver = 0.5 * (target - basis * c.coeffs).squaredNorm();
        double f_grid = pgdm_test::grid_min_objective(target, basis, 200);
        never_worse = never_worse && (f_solver <= f_grid + 1e-10);
        max_gap = std::max(max_gap, f_grid - f_solver);
      }

  double secs = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "rss monotone %s; distinct-points rss %.1e; grid gap %.1e",
                monotone ? "yes" : "NO", distinct_rss, max_gap);
  report(3, "aa-solver-soundness",
         monotone && distinct_rss <= kDistinctTol && never_worse && max_gap < kGridTol,
         buf, secs);
}

// --------------------------------------------------------------------------
// 4. Finite-difference gradient agreement on 100 random shapes.

void criterion4() {
  auto t0 = Clock::now();
  constexpr double kH = 1e-5;
  constexpr double kRelTol = 1e-4;

  Rng rng(401);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    int in = 1 + int(rng.uniform_int(4));
    int hidden = 1 + int(rng.uniform_int(6));
    int group = 1 + int(rng.uniform_int(3));
    int out_groups = 1 + int(rng.uniform_int(2));
    int out = group * out_groups;
    std::vector<int> dims{in, hidden, out};
    if (trial % 3 == 0) dims = {in, hidden, hidden, out};

    for (LossKind loss : {LossKind::KlDivergence, LossKind::SquaredError}) {
      Head head = (loss == LossKind::KlDivergence) ? Head::StepSoftmax : Head::Linear;
      Mlp net = make_mlp(dims, Activation::Tanh, head, head == Head::StepSoftmax ? group : 0,
                         rng);
      Vector x = rng.normal_vec(in);
      Vector target;
      if (loss == LossKind::KlDivergence) {
        target = Vector::Zero(out);
        for (int g = 0; g < out_groups; ++g) {
          double sum = 0.0;
          for (int i = 0; i < group; ++i) {
            target[g * group + i] = rng.uniform() + 0.05;
            sum += target[g * group + i];
          }
          for (int i = 0; i < group; ++i) target[g * group + i] /= sum;
        }
      } else {
        target = rng.normal_vec(out);
      }

      Gradients grads = Gradients::like(net);
      loss_and_gradients(net, loss, x, target, grads);

      // central differences over every parameter, relative error in flat L2
      double num2 = 0.0, den2 = 0.0;
      auto probe = [&](double& param, double grad) {
        double keep = param;
        param = keep + kH;
        double up = loss_value(net, loss, x, target);
        param = keep - kH;
        double dn = loss_value(net, loss, x, target);
        param = keep;
        double fd = (up - dn) / (2.0 * kH);
        num2 += (fd - grad) * (fd - grad);
        den2 += grad * grad;
      };
      for (int l = 0; l < net.layers(); ++l) {
        Matrix& w = net.weights[size_t(l)];
        for (int r = 0; r < w.rows(); ++r)
          for (int cc = 0; cc < w.cols(); ++cc)
            probe(w(r, cc), grads.d_weights[size_t(l)](r, cc));
        Vector& b = net.biases[size_t(l)];
        for (int r = 0; r < b.size(); ++r) probe(b[r], grads.d_biases[size_t(l)][r]);
      }
      double rel = std::sqrt(num2) / std::max(std::sqrt(den2), 1e-300);
      worst = std::max(worst, rel);
    }
  }
  double secs = seconds_since(t0);
  char buf[120];
  std::snprintf(buf, sizeof buf, "100 shapes x {kl, mse}, worst rel err %.2e", worst);
  report(4, "gradient-correctness", worst < kRelTol, buf, secs);
}

// --------------------------------------------------------------------------
// 5. Diffusion identities: forward moments, bitwise guidance ends, and
//    deterministic sampling.

void criterion5() {
  auto t0 = Clock::now();
  NoiseSchedule sched = make_schedule(30, 1e-4, 0.05);

  // Monte-Carlo moments at 1e5 draws, 3 standard errors
  bool moments_ok = true;
  {
    Vector x0(2);
    x0 << 1.2, -0.4;
    const int N = 100000;
    Rng rng(501);
    for (int step : {1, 30}) {
      double ab = sched.alpha_bars[step - 1];
      Vector mean = Vector::Zero(2), m2 = Vector::Zero(2);
      for (int i = 0; i < N; ++i) {
        Vector z = forward_sample(x0, step, sched, rng.normal_vec(2));
        mean += z;
        m2 += z.cwiseProduct(z);
      }
      mean /= double(N);
      Vector var = m2 / double(N) - mean.cwiseProduct(mean);
      double se_mean = 3.0 * std::sqrt((1.0 - ab) / double(N));
      double se_var = 3.0 * (1.0 - ab) * std::sqrt(2.0 / double(N));
      for (int k = 0; k < 2; ++k) {
        moments_ok = moments_ok &&
                     std::abs(mean[k] - std::sqrt(ab) * x0[k]) <= se_mean + 1e-9 &&
                     std::abs(var[k] - (1.0 - ab)) <= se_var + 1e-9;
      }
    }
  }

  // small trained pipeline for the sampler checks
  SyntheticSpec spec;
  spec.d = 3;
  spec.p_true = 3;
  spec.n_sequences = 16;
  spec.sequence_length = 7;
  spec.noise_sigma = 0.005;
  spec.dynamics = CoeffDynamics::Oscillating;
  SyntheticDataset ds = generate(spec, 502);
  ArchetypeSet a = identity_mixing(ds.archetypes_true);
  std::vector<SequenceWindow> windows = sliding_windows(ds.sequences, 2, 2);

  PredictorTrainConfig pcfg;
  pcfg.hidden_dims = {12};
  pcfg.epochs = 20;
  pcfg.seed = 503;
  PatternPredictor fA = train_pattern_predictor(windows, {}, a, pcfg);

  DenoiserTrainConfig tcfg;
  tcfg.hidden_dims = {16};
  tcfg.epochs = 3;
  tcfg.time_embed_dim = 8;
  tcfg.seed = 504;
  Denoiser den = train_denoiser(windows, a, fA, sched, GuidanceConfig{}, tcfg);

  // bitwise branch reduction at w in {0, 1}
  bool bitwise_ok = true;
  {
    Rng rng(505);
    Vector z = rng.normal_vec(6), hist = rng.normal_vec(6), pattern = rng.normal_vec(6);
    Vector uncond = denoiser_eps(den, z, hist, nullptr, 5);
    Vector cond = denoiser_eps(den, z, hist, &pattern, 5);
    bitwise_ok =
        (guided_epsilon(den, z, hist, pattern, 0.0, 5).array() == uncond.array()).all() &&
        (guided_epsilon(den, z, hist, pattern, 1.0, 5).array() == cond.array()).all();
  }

  // byte-identical sampling across reruns with a fixed seed
  bool deterministic = true;
  {
    const Matrix& history = windows.front().history;
    Rng r1(506), r2(506);
    HorizonSample s1 = sample_horizon(den, fA, a, sched, GuidanceConfig{}, history, r1);
    HorizonSample s2 = sample_horizon(den, fA, a, sched, GuidanceConfig{}, history, r2);
    deterministic = matrix_to_json(s1.forecast).dump() == matrix_to_json(s2.forecast).dump();
  }

  double secs = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf, "moments %s, bitwise ends %s, rerun identical %s",
                moments_ok ? "ok" : "BAD", bitwise_ok ? "ok" : "BAD",
                deterministic ? "yes" : "NO");
  report(5, "diffusion-identities", moments_ok && bitwise_ok && deterministic, buf, secs);
}

// --------------------------------------------------------------------------
// 6. Dynamic guidance scale, exact to 1e-12 on a 1000-point grid.

void criterion6() {
  auto t0 = Clock::now();
  constexpr double kTol = 1e-12;
  bool ok = true;
  double worst = 0.0;
  for (double w_bar : {0.5, 1.0, 2.0, 5.0})
    for (double gamma : {0.05, 0.1, 0.5}) {
      ok = ok && std::abs(dynamic_scale(0.0, w_bar, gamma) - w_bar) <= kTol;
      ok = ok && std::abs(dynamic_scale(gamma, w_bar, gamma)) <= kTol;
      ok = ok && std::abs(dynamic_scale(gamma / 2.0, w_bar, gamma) - w_bar / 2.0) <= kTol;
      double prev = std::numeric_limits<double>::infinity();
      for (int i = 0; i < 1000; ++i) {
        double u = 2.0 * gamma * double(i) / 999.0;
        double w = dynamic_scale(u, w_bar, gamma);
        double want = std::max(-w_bar / gamma * u + w_bar, 0.0);
        worst = std::max(worst, std::abs(w - want));
        ok = ok && std::abs(w - want) <= kTol && w <= prev + kTol && w >= 0.0;
        prev = w;
      }
    }
  double secs = seconds_since(t0);
  char buf[120];
  std::snprintf(buf, sizeof buf, "12 (w_bar, gamma) combos x 1000-point grids, worst dev %.1e",
                worst);
  report(6, "dynamic-scale-exactness", ok, buf, secs);
}

// --------------------------------------------------------------------------
// 7. Directional guidance benefit on the reference synthetic generator.

void criterion7() {
  auto t0 = Clock::now();
  stdfs::path root = stdfs::temp_directory_path() / "pgdm_acceptance_pipeline";
  stdfs::remove_all(root);

  RunConfig c;  // reference generator: defaults, seed-fixed
  c.seed = 1;
  c.paths.data_dir = (root / "data").string();
  c.paths.checkpoint_dir = (root / "checkpoints").string();
  c.paths.report_dir = (root / "reports").string();
  c.data.n_sequences = 150;  // 726 test windows at T=3, H=5, L=40
  c.pattern_predictor.epochs = 60;
  c.pattern_predictor.patience = 15;
  c.denoiser.epochs = 12;
  c.forecast.num_samples = 5;
  c.evaluate.max_windows = 500;

  cmd_generate(c);
  cmd_fit_patterns(c);
  cmd_train_guidance(c);
  cmd_train_diffusion(c);
  cmd_evaluate(c);

  Json j = load_json_file((stdfs::path(c.paths.report_dir) / "evaluation.json").string());
  double guided = j["mae_mean"].get<double>();          // w_bar = 1, w_star_bar = 0.2
  double unguided = j["unguided_baseline"]["mae_mean"].get<double>();
  int n_windows = j["n_windows"].get<int>();

  double best_mae = std::numeric_limits<double>::infinity(), best_w = -1.0, mae_at_5 = -1.0;
  for (const auto& row : j["sweep"]) {
    double wb = row["w_bar"].get<double>();
    double mm = row["mae_mean"].get<double>();
    if (mm < best_mae) {
      best_mae = mm;
      best_w = wb;
    }
    if (wb == 5.0) mae_at_5 = mm;
  }

  double secs = seconds_since(t0);
  bool ok = n_windows >= 500 && guided < unguided && mae_at_5 >= best_mae &&
            best_w < 5.0 && secs < 900.0;
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "%d windows; mae guided %.4f < unguided %.4f; sweep best %.4f at w=%g, "
                "w=5 gives %.4f",
                n_windows, guided, unguided, best_mae, best_w, mae_at_5);
  report(7, "guidance-improves-forecasts", ok, buf, secs);
  stdfs::remove_all(root);
}

// --------------------------------------------------------------------------
// 8. CRPS estimator validity.

void criterion8() {
  auto t0 = Clock::now();
  constexpr double kGaussTol = 0.01;
  constexpr double kExactTol = 1e-12;

  Rng rng(801);
  ForecastEnsemble gauss;
  gauss.truth = Matrix::Constant(1, 1, 0.0);
  for (int k = 0; k < 10000; ++k)
    gauss.samples.push_back(Matrix::Constant(1, 1, rng.normal()));
  double closed = (std::sqrt(2.0) - 1.0) / std::sqrt(M_PI);  // sigma = 1, y = mu
  double gauss_err = std::abs(crps_sum(gauss).raw - closed);

  ForecastEnsemble degenerate;
  degenerate.truth = Matrix::Constant(2, 2, 1.0);
  degenerate.samples.assign(3, degenerate.truth);
  double degen = crps_sum(degenerate).raw;

  ForecastEnsemble two;
  two.truth = Matrix::Constant(1, 1, 2.0);
  two.samples = {Matrix::Constant(1, 1, 2.0 - 0.75), Matrix::Constant(1, 1, 2.0 + 0.75)};
  double two_err = std::abs(crps_sum(two).raw - 0.75 / 2.0);

  double secs = seconds_since(t0);
  bool ok = gauss_err <= kGaussTol && degen == 0.0 && two_err <= kExactTol;
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "gaussian dev %.4f (tol %.2f); degenerate %.1e; two-point dev %.1e",
                gauss_err, kGaussTol, degen, two_err);
  report(8, "crps-estimator-validity", ok, buf, secs);
}

// --------------------------------------------------------------------------
// 9. AAUQ lower-bound trend with 30% out-of-distribution sequences.

void criterion9() {
  auto t0 = Clock::now();
  SyntheticSpec spec;
  spec.d = 6;
  spec.p_true = 4;
  spec.n_sequences = 80;
  spec.sequence_length = 12;
  spec.noise_sigma = 0.01;
  spec.dynamics = CoeffDynamics::Oscillating;
  spec.ood_fraction = 0.3;
  spec.ood_offset = 0.5;
  SyntheticDataset ds = generate(spec, 901);

  SplitWindows sw = split(sliding_windows(ds.sequences, 3, 3), {0.7, 0.15, 0.15}, 902);

  // archetypes from the training frames, exactly like the pipeline
  DataMatrix fit_data;
  fit_data.values.resize(int(sw.train.size()), 6);
  for (size_t i = 0; i < sw.train.size(); ++i)
    fit_data.values.row(int(i)) = sw.train[i].history.col(2).transpose();
  FitOptions opts;
  opts.seed = 903;
  ArchetypeSet a = fit_archetypes(fit_data, 4, opts);

  PredictorTrainConfig pcfg;
  pcfg.hidden_dims = {32};
  pcfg.epochs = 40;
  pcfg.seed = 904;
  PatternPredictor fA = train_pattern_predictor(sw.train, sw.val, a, pcfg);

  int holds = 0;
  std::vector<double> us, errs;
  for (const auto& w : sw.test) {
    Theorem1Check chk = check_theorem1(fA, a, w);
    if (chk.holds) ++holds;
    us.push_back(aauq(w.history, a));
    errs.push_back(chk.lhs);
  }
  double fraction = double(holds) / double(sw.test.size());
  double rho = pearson(us, errs);

  double secs = seconds_since(t0);
  bool ok = fraction == 1.0 && rho >= 0.0;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu windows; bound fraction %.3f; pearson(u, L_fG) %.3f",
                sw.test.size(), fraction, rho);
  report(9, "aauq-error-trend", ok, buf, secs);
}

}  // namespace

int main() {
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion5();
  criterion6();
  criterion7();
  criterion8();
  criterion9();
  std::printf("%s\n", g_all_pass ? "acceptance: all criteria passed"
                                 : "acceptance: FAILURES above");
  return g_all_pass ? 0 : 1;
}
