#pragma once
// Operator pipeline: generate/ingest data, fit archetypes, train the pattern
// predictor and denoiser, forecast, evaluate, and certify the theorems.
// Commands are plain functions over RunConfig so tests can drive them
// in-process; the binary in tools/ only parses flags and maps errors.

#include "pgdm/archetypal.hpp"
#include "pgdm/checkpoint.hpp"
#include "pgdm/common.hpp"
#include "pgdm/data.hpp"
#include "pgdm/diffusion.hpp"
#include "pgdm/guidance.hpp"
#include "pgdm/metrics.hpp"
#include "pgdm/nn.hpp"
#include "pgdm/simplex.hpp"

#include <filesystem>
#include <iostream>

namespace pgdm {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// configuration

struct PathsConfig {
  std::string data_dir = "data";
  std::string checkpoint_dir = "checkpoints";
  std::string report_dir = "reports";
  std::string csv_dir;  // ingest source
};

struct DataConfig {
  std::string mode = "synthetic";  // synthetic | csv
  int d = 8;
  int p_true = 4;
  int n_sequences = 400;
  int sequence_length = 40;
  std::string dynamics = "oscillating";
  double noise_sigma = 0.01;
  double ood_fraction = 0.0;
  double ood_offset = 0.5;
  int T = 3;
  int H = 5;
  int stride = 1;
  std::array<double, 3> split_ratios{0.70, 0.15, 0.15};
};

struct ArchetypalConfig {
  int p = 4;
  bool auto_select_p = false;
  int p_min = 2;
  int p_max = 8;
  double tol = 1e-6;
  double solver_tol = 1e-8;
  int max_iter = 500;
  int threads = 1;
};

struct PredictorConfig {
  std::vector<int> hidden_dims{64, 64};
  std::string activation = "tanh";
  double lr = 1e-3;
  int batch_size = 32;
  int epochs = 150;
  int patience = 20;
};

struct DenoiserConfig {
  std::vector<int> hidden_dims{64, 64};
  std::string activation = "relu";
  double lr = 1e-3;
  int batch_size = 32;
  int epochs = 30;
  int time_embed_dim = 16;
};

struct ScheduleConfig {
  int S = 200;
  double beta_start = 1e-4;
  double beta_end = 0.05;
};

struct ForecastConfig {
  int num_samples = 5;
  int max_windows = 0;  // 0 = all test windows
  std::string format = "json";  // json | csv
  int threads = 1;
};

struct EvaluateConfig {
  std::vector<double> w_bar_sweep{0, 1, 2, 3, 4, 5};
  int max_windows = 500;  // 0 = all test windows
};

struct CertifyConfig {
  int theorem1_pairs = 10000;
  int theorem2_points = 1000;
  int cert_data_points = 200;  // subsample fitted against for the sandwich
  int eq_dataset_size = 20;    // p = n equality dataset
  int eq_points = 100;
};

struct RunConfig {
  uint64_t seed = 1;
  PathsConfig paths;
  DataConfig data;
  ArchetypalConfig archetypal;
  PredictorConfig pattern_predictor;
  DenoiserConfig denoiser;
  ScheduleConfig schedule;
  GuidanceConfig guidance;
  ForecastConfig forecast;
  EvaluateConfig evaluate;
  CertifyConfig certify;
};

namespace detail {

inline void warn_unknown_keys(const Json& j, std::initializer_list<const char*> known,
                              const std::string& where) {
  if (!j.is_object()) return;
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || (item.key() == k);
    if (!ok) log(LogLevel::Warn, "config: unknown key '" + item.key() + "' in " + where);
  }
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  fail(ErrorKind::ParseError, "unknown activation '" + s + "'");
}

}  // namespace detail

inline RunConfig config_from_json(const Json& j) {
  require(j.is_object(), ErrorKind::ParseError, "config root must be a JSON object");
  detail::warn_unknown_keys(j,
                            {"seed", "paths", "data", "archetypal", "pattern_predictor",
                             "denoiser", "schedule", "guidance", "forecast", "evaluate",
                             "certify"},
                            "config root");
  RunConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    if (j.contains("paths")) {
      const Json& p = j["paths"];
      detail::warn_unknown_keys(p, {"data_dir", "checkpoint_dir", "report_dir", "csv_dir"},
                                "paths");
      c.paths.data_dir = p.value("data_dir", c.paths.data_dir);
      c.paths.checkpoint_dir = p.value("checkpoint_dir", c.paths.checkpoint_dir);
      c.paths.report_dir = p.value("report_dir", c.paths.report_dir);
      c.paths.csv_dir = p.value("csv_dir", c.paths.csv_dir);
    }
    if (j.contains("data")) {
      const Json& p = j["data"];
      detail::warn_unknown_keys(p,
                                {"mode", "d", "p_true", "n_sequences", "sequence_length",
                                 "dynamics", "noise_sigma", "ood_fraction", "ood_offset",
                                 "T", "H", "stride", "split_ratios"},
                                "data");
      c.data.mode = p.value("mode", c.data.mode);
      c.data.d = p.value("d", c.data.d);
      c.data.p_true = p.value("p_true", c.data.p_true);
      c.data.n_sequences = p.value("n_sequences", c.data.n_sequences);
      c.data.sequence_length = p.value("sequence_length", c.data.sequence_length);
      c.data.dynamics = p.value("dynamics", c.data.dynamics);
      c.data.noise_sigma = p.value("noise_sigma", c.data.noise_sigma);
      c.data.ood_fraction = p.value("ood_fraction", c.data.ood_fraction);
      c.data.ood_offset = p.value("ood_offset", c.data.ood_offset);
      c.data.T = p.value("T", c.data.T);
      c.data.H = p.value("H", c.data.H);
      c.data.stride = p.value("stride", c.data.stride);
      if (p.contains("split_ratios")) {
        auto r = p["split_ratios"].get<std::vector<double>>();
        require(r.size() == 3, ErrorKind::ParseError, "split_ratios needs 3 entries");
        c.data.split_ratios = {r[0], r[1], r[2]};
      }
    }
    if (j.contains("archetypal")) {
      const Json& p = j["archetypal"];
      detail::warn_unknown_keys(
          p, {"p", "auto_select_p", "p_min", "p_max", "tol", "solver_tol", "max_iter", "threads"},
          "archetypal");
      c.archetypal.p = p.value("p", c.archetypal.p);
      c.archetypal.auto_select_p = p.value("auto_select_p", c.archetypal.auto_select_p);
      c.archetypal.p_min = p.value("p_min", c.archetypal.p_min);
      c.archetypal.p_max = p.value("p_max", c.archetypal.p_max);
      c.archetypal.tol = p.value("tol", c.archetypal.tol);
      c.archetypal.solver_tol = p.value("solver_tol", c.archetypal.solver_tol);
      c.archetypal.max_iter = p.value("max_iter", c.archetypal.max_iter);
      c.archetypal.threads = p.value("threads", c.archetypal.threads);
    }
    auto read_net = [](const Json& p, auto& cfg, const std::string& where) {
      detail::warn_unknown_keys(p,
                                {"hidden_dims", "activation", "lr", "batch_size", "epochs",
                                 "patience", "time_embed_dim"},
                                where);
      if (p.contains("hidden_dims"))
        cfg.hidden_dims = p["hidden_dims"].template get<std::vector<int>>();
      cfg.activation = p.value("activation", cfg.activation);
      cfg.lr = p.value("lr", cfg.lr);
      cfg.batch_size = p.value("batch_size", cfg.batch_size);
      cfg.epochs = p.value("epochs", cfg.epochs);
    };
    if (j.contains("pattern_predictor")) {
      const Json& p = j["pattern_predictor"];
      read_net(p, c.pattern_predictor, "pattern_predictor");
      c.pattern_predictor.patience = p.value("patience", c.pattern_predictor.patience);
    }
    if (j.contains("denoiser")) {
      const Json& p = j["denoiser"];
      read_net(p, c.denoiser, "denoiser");
      c.denoiser.time_embed_dim = p.value("time_embed_dim", c.denoiser.time_embed_dim);
    }
    if (j.contains("schedule")) {
      const Json& p = j["schedule"];
      detail::warn_unknown_keys(p, {"S", "beta_start", "beta_end", "kind"}, "schedule");
      c.schedule.S = p.value("S", c.schedule.S);
      c.schedule.beta_start = p.value("beta_start", c.schedule.beta_start);
      c.schedule.beta_end = p.value("beta_end", c.schedule.beta_end);
    }
    if (j.contains("guidance")) {
      const Json& p = j["guidance"];
      detail::warn_unknown_keys(p, {"w_bar", "w_star_bar", "gamma", "p_drop"}, "guidance");
      c.guidance.w_bar = p.value("w_bar", c.guidance.w_bar);
      c.guidance.w_star_bar = p.value("w_star_bar", c.guidance.w_star_bar);
      c.guidance.gamma = p.value("gamma", c.guidance.gamma);
      c.guidance.p_drop = p.value("p_drop", c.guidance.p_drop);
    }
    if (j.contains("forecast")) {
      const Json& p = j["forecast"];
      detail::warn_unknown_keys(p, {"num_samples", "max_windows", "format", "threads"},
                                "forecast");
      c.forecast.num_samples = p.value("num_samples", c.forecast.num_samples);
      c.forecast.max_windows = p.value("max_windows", c.forecast.max_windows);
      c.forecast.format = p.value("format", c.forecast.format);
      c.forecast.threads = p.value("threads", c.forecast.threads);
    }
    if (j.contains("evaluate")) {
      const Json& p = j["evaluate"];
      detail::warn_unknown_keys(p, {"w_bar_sweep", "max_windows"}, "evaluate");
      if (p.contains("w_bar_sweep"))
        c.evaluate.w_bar_sweep = p["w_bar_sweep"].get<std::vector<double>>();
      c.evaluate.max_windows = p.value("max_windows", c.evaluate.max_windows);
    }
    if (j.contains("certify")) {
      const Json& p = j["certify"];
      detail::warn_unknown_keys(p,
                                {"theorem1_pairs", "theorem2_points", "cert_data_points",
                                 "eq_dataset_size", "eq_points"},
                                "certify");
      c.certify.theorem1_pairs = p.value("theorem1_pairs", c.certify.theorem1_pairs);
      c.certify.theorem2_points = p.value("theorem2_points", c.certify.theorem2_points);
      c.certify.cert_data_points = p.value("cert_data_points", c.certify.cert_data_points);
      c.certify.eq_dataset_size = p.value("eq_dataset_size", c.certify.eq_dataset_size);
      c.certify.eq_points = p.value("eq_points", c.certify.eq_points);
    }
  } catch (const Json::exception& e) {
    fail(ErrorKind::ParseError, std::string("malformed config: ") + e.what());
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return RunConfig{};
  return config_from_json(load_json_file(path));
}

// ---------------------------------------------------------------------------
// stage hashes: every checkpoint embeds the hash of the config subset that
// influenced it, chained through its upstream stages.

inline Json data_section_json(const RunConfig& c) {
  return Json{{"mode", c.data.mode},
              {"d", c.data.d},
              {"p_true", c.data.p_true},
              {"n_sequences", c.data.n_sequences},
              {"sequence_length", c.data.sequence_length},
              {"dynamics", c.data.dynamics},
              {"noise_sigma", c.data.noise_sigma},
              {"ood_fraction", c.data.ood_fraction},
              {"ood_offset", c.data.ood_offset},
              {"T", c.data.T},
              {"H", c.data.H},
              {"stride", c.data.stride},
              {"split_ratios", c.data.split_ratios},
              {"csv_dir", c.data.mode == "csv" ? c.paths.csv_dir : ""}};
}

inline std::string data_stage_hash(const RunConfig& c) {
  return json_hash(Json{{"seed", c.seed}, {"data", data_section_json(c)}});
}

inline std::string archetype_stage_hash(const RunConfig& c) {
  Json a{{"p", c.archetypal.p},
         {"auto_select_p", c.archetypal.auto_select_p},
         {"p_min", c.archetypal.p_min},
         {"p_max", c.archetypal.p_max},
         {"tol", c.archetypal.tol},
         {"solver_tol", c.archetypal.solver_tol},
         {"max_iter", c.archetypal.max_iter}};
  return json_hash(Json{{"upstream", data_stage_hash(c)}, {"archetypal", a}});
}

inline std::string guidance_stage_hash(const RunConfig& c) {
  Json g{{"hidden_dims", c.pattern_predictor.hidden_dims},
         {"activation", c.pattern_predictor.activation},
         {"lr", c.pattern_predictor.lr},
         {"batch_size", c.pattern_predictor.batch_size},
         {"epochs", c.pattern_predictor.epochs},
         {"patience", c.pattern_predictor.patience}};
  return json_hash(Json{{"upstream", archetype_stage_hash(c)}, {"pattern_predictor", g}});
}

// Inference-time guidance knobs (w_bar, w_star_bar, gamma) are deliberately
// excluded: only p_drop changes what the denoiser learns.
inline std::string diffusion_stage_hash(const RunConfig& c) {
  Json d{{"hidden_dims", c.denoiser.hidden_dims},
         {"activation", c.denoiser.activation},
         {"lr", c.denoiser.lr},
         {"batch_size", c.denoiser.batch_size},
         {"epochs", c.denoiser.epochs},
         {"time_embed_dim", c.denoiser.time_embed_dim}};
  Json s{{"S", c.schedule.S},
         {"beta_start", c.schedule.beta_start},
         {"beta_end", c.schedule.beta_end}};
  return json_hash(Json{{"upstream", guidance_stage_hash(c)},
                        {"denoiser", d},
                        {"schedule", s},
                        {"p_drop", c.guidance.p_drop}});
}

// Per-stage seeds, decoupled so no two stages share an rng stream.
inline uint64_t stage_seed(uint64_t root, int stage) {
  return splitmix64(root ^ (0xA5A5A5A5A5A5A5A5ULL + uint64_t(stage)));
}
constexpr int kSeedGenerate = 1, kSeedSplit = 2, kSeedArchetypes = 3, kSeedGuidance = 4,
              kSeedDiffusion = 5, kSeedForecast = 6, kSeedCertify = 7;

// ---------------------------------------------------------------------------
// manifest

struct ManifestEntry {
  std::string path;  // absolute, or relative to data_dir
  int split = 0;     // 0 train, 1 val, 2 test
  bool ood = false;
};

struct Manifest {
  int d = 0, T = 0, H = 0, stride = 1;
  std::vector<ManifestEntry> entries;
  std::string config_hash;  // data stage
};

inline std::string manifest_path(const RunConfig& c) {
  return (fs::path(c.paths.data_dir) / "manifest.json").string();
}
inline std::string archetypes_path(const RunConfig& c) {
  return (fs::path(c.paths.checkpoint_dir) / "archetypes.json").string();
}
inline std::string predictor_path(const RunConfig& c) {
  return (fs::path(c.paths.checkpoint_dir) / "pattern_predictor.json").string();
}
inline std::string denoiser_path(const RunConfig& c) {
  return (fs::path(c.paths.checkpoint_dir) / "denoiser.json").string();
}

inline void save_manifest(const Manifest& m, const RunConfig& c) {
  Json j;
  j["kind"] = "manifest";
  j["format_version"] = kCheckpointVersion;
  j["config_hash"] = m.config_hash;
  j["d"] = m.d;
  j["T"] = m.T;
  j["H"] = m.H;
  j["stride"] = m.stride;
  Json entries = Json::array();
  for (const auto& e : m.entries)
    entries.push_back(Json{{"path", e.path}, {"split", e.split}, {"ood", e.ood}});
  j["sequences"] = std::move(entries);
  save_json_file(manifest_path(c), j);
}

inline Manifest load_manifest(const RunConfig& c, bool check_hash = true) {
  Json j = load_json_file(manifest_path(c));
  check_envelope(j, "manifest", check_hash ? data_stage_hash(c) : "");
  Manifest m;
  try {
    m.d = j.at("d").get<int>();
    m.T = j.at("T").get<int>();
    m.H = j.at("H").get<int>();
    m.stride = j.at("stride").get<int>();
    m.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& e : j.at("sequences")) {
      m.entries.push_back(ManifestEntry{e.at("path").get<std::string>(),
                                        e.at("split").get<int>(),
                                        e.value("ood", false)});
    }
  } catch (const Json::exception& e) {
    fail(ErrorKind::ParseError, std::string("malformed manifest: ") + e.what());
  }
  require(!m.entries.empty(), ErrorKind::ParseError, "manifest lists no sequences");
  return m;
}

inline Matrix load_manifest_sequence(const RunConfig& c, const ManifestEntry& e) {
  fs::path p(e.path);
  if (p.is_relative()) p = fs::path(c.paths.data_dir) / p;
  Matrix seq = load_sequence_csv(p.string());
  return seq;
}

// Windows of one split (0 train, 1 val, 2 test), with global sequence ids.
inline std::vector<SequenceWindow> manifest_windows(const RunConfig& c, const Manifest& m,
                                                    int split) {
  std::vector<SequenceWindow> out;
  for (size_t i = 0; i < m.entries.size(); ++i) {
    if (m.entries[i].split != split) continue;
    Matrix seq = load_manifest_sequence(c, m.entries[i]);
    require(int(seq.rows()) == m.d, ErrorKind::ShapeError,
            "sequence " + m.entries[i].path + " has dimension " +
                std::to_string(seq.rows()) + ", manifest says " + std::to_string(m.d));
    std::vector<Matrix> one{std::move(seq)};
    for (auto& w : sliding_windows(one, m.T, m.H, m.stride)) {
      w.source_id = int(i);
      out.push_back(std::move(w));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// commands

inline void cmd_generate(const RunConfig& c) {
  require(c.data.mode == "synthetic", ErrorKind::InvalidInput,
          "generate requires data.mode == synthetic");
  SyntheticSpec spec;
  spec.d = c.data.d;
  spec.p_true = c.data.p_true;
  spec.n_sequences = c.data.n_sequences;
  spec.sequence_length = c.data.sequence_length;
  spec.dynamics = coeff_dynamics_from_string(c.data.dynamics);
  spec.noise_sigma = c.data.noise_sigma;
  spec.ood_fraction = c.data.ood_fraction;
  spec.ood_offset = c.data.ood_offset;
  SyntheticDataset ds = generate(spec, stage_seed(c.seed, kSeedGenerate));

  fs::create_directories(c.paths.data_dir);
  std::vector<int> assignment = assign_splits(int(ds.sequences.size()), c.data.split_ratios,
                                              stage_seed(c.seed, kSeedSplit));
  Manifest m;
  m.d = c.data.d;
  m.T = c.data.T;
  m.H = c.data.H;
  m.stride = c.data.stride;
  m.config_hash = data_stage_hash(c);
  for (size_t i = 0; i < ds.sequences.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "seq_%05zu.csv", i);
    save_sequence_csv((fs::path(c.paths.data_dir) / name).string(), ds.sequences[i]);
    m.entries.push_back(ManifestEntry{name, assignment[i], bool(ds.ood_flags[i])});
  }
  save_manifest(m, c);
  // ground truth goes in the report dir; nothing downstream reads it
  Json truth;
  truth["archetypes_true"] = matrix_to_json(ds.archetypes_true);
  save_json_file((fs::path(c.paths.report_dir) / "ground_truth.json").string(), truth);
  std::cout << "generated " << ds.sequences.size() << " sequences under "
            << c.paths.data_dir << "\n";
}

inline void cmd_ingest(const RunConfig& c) {
  require(c.data.mode == "csv", ErrorKind::InvalidInput, "ingest requires data.mode == csv");
  require(!c.paths.csv_dir.empty(), ErrorKind::InvalidInput, "ingest needs paths.csv_dir");
  require(fs::is_directory(c.paths.csv_dir), ErrorKind::MissingArtifact,
          "csv_dir does not exist: " + c.paths.csv_dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(c.paths.csv_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".csv")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  require(!files.empty(), ErrorKind::MissingArtifact,
          "no .csv sequences in " + c.paths.csv_dir);

  int d = -1;
  for (const auto& f : files) {
    Matrix seq = load_sequence_csv(f.string());
    if (d < 0) d = int(seq.rows());
    require(int(seq.rows()) == d, ErrorKind::ShapeError,
            "sequence " + f.string() + " has dimension " + std::to_string(seq.rows()) +
                " but earlier files have " + std::to_string(d));
  }
  std::vector<int> assignment =
      assign_splits(int(files.size()), c.data.split_ratios, stage_seed(c.seed, kSeedSplit));
  fs::create_directories(c.paths.data_dir);
  Manifest m;
  m.d = d;
  m.T = c.data.T;
  m.H = c.data.H;
  m.stride = c.data.stride;
  m.config_hash = data_stage_hash(c);
  for (size_t i = 0; i < files.size(); ++i)
    m.entries.push_back(ManifestEntry{fs::absolute(files[i]).string(), assignment[i], false});
  save_manifest(m, c);
  std::cout << "ingested " << files.size() << " sequences (d=" << d << ") from "
            << c.paths.csv_dir << "\n";
}

// Archetypes are fit on the most recent history frame (x_T) of every
// training window, so no horizon or validation frame influences them.
inline DataMatrix archetype_fit_data(const RunConfig& c, const Manifest& m) {
  std::vector<SequenceWindow> train = manifest_windows(c, m, 0);
  require(!train.empty(), ErrorKind::InvalidInput,
          "no training windows (sequences shorter than T+H?)");
  DataMatrix data;
  data.values.resize(int(train.size()), m.d);
  for (size_t i = 0; i < train.size(); ++i)
    data.values.row(int(i)) = train[i].history.col(m.T - 1).transpose();
  return data;
}

inline void cmd_fit_patterns(const RunConfig& c) {
  Manifest m = load_manifest(c);
  DataMatrix data = archetype_fit_data(c, m);

  FitOptions opts;
  opts.tol = c.archetypal.tol;
  opts.solver_tol = c.archetypal.solver_tol;
  opts.max_iter = c.archetypal.max_iter;
  opts.seed = stage_seed(c.seed, kSeedArchetypes);
  opts.threads = c.archetypal.threads;

  int p = c.archetypal.p;
  if (c.archetypal.auto_select_p) {
    ElbowResult elbow = select_archetype_count(data, c.archetypal.p_min,
                                               c.archetypal.p_max, opts);
    p = elbow.selected_p;
    Json ej;
    ej["p_min"] = elbow.p_min;
    ej["rss_by_p"] = elbow.rss_by_p;
    ej["selected_p"] = elbow.selected_p;
    save_json_file((fs::path(c.paths.report_dir) / "elbow.json").string(), ej);
    log(LogLevel::Info, "elbow rule selected p = " + std::to_string(p));
  }

  ArchetypeSet a = fit_archetypes(data, p, opts);
  save_json_file(archetypes_path(c), archetype_set_to_json(a, archetype_stage_hash(c)));
  std::cout << "fit " << p << " archetypes on " << data.rows() << " frames, rss "
            << a.fit_rss << " after " << a.iterations_used << " iterations\n";
}

inline ArchetypeSet load_archetypes(const RunConfig& c) {
  return archetype_set_from_json(load_json_file(archetypes_path(c)),
                                 archetype_stage_hash(c));
}

inline void cmd_train_guidance(const RunConfig& c) {
  Manifest m = load_manifest(c);
  ArchetypeSet a = load_archetypes(c);
  std::vector<SequenceWindow> train = manifest_windows(c, m, 0);
  std::vector<SequenceWindow> val = manifest_windows(c, m, 1);
  require(!train.empty(), ErrorKind::InvalidInput, "no training windows");

  PredictorTrainConfig tc;
  tc.hidden_dims = c.pattern_predictor.hidden_dims;
  tc.activation = detail::activation_from_string(c.pattern_predictor.activation);
  tc.lr = c.pattern_predictor.lr;
  tc.batch_size = c.pattern_predictor.batch_size;
  tc.epochs = c.pattern_predictor.epochs;
  tc.patience = c.pattern_predictor.patience;
  tc.seed = stage_seed(c.seed, kSeedGuidance);
  tc.solver_tol = c.archetypal.solver_tol;

  PredictorTrainReport report;
  PatternPredictor fA = train_pattern_predictor(train, val, a, tc, &report);
  Json j = pattern_predictor_to_json(fA, guidance_stage_hash(c), archetype_payload_hash(a));
  j["training"] = Json{{"epochs_run", report.epochs_run},
                       {"best_epoch", report.best_epoch},
                       {"best_val_mae", report.best_val_mae},
                       {"train_kl", report.train_kl},
                       {"val_mae", report.val_mae}};
  save_json_file(predictor_path(c), j);
  std::cout << "trained pattern predictor for " << report.epochs_run << " epochs (best "
            << report.best_epoch << ", val mae " << report.best_val_mae << ")\n";
}

inline PatternPredictor load_predictor(const RunConfig& c, const ArchetypeSet& a) {
  return pattern_predictor_from_json(load_json_file(predictor_path(c)),
                                     guidance_stage_hash(c), archetype_payload_hash(a));
}

inline void cmd_train_diffusion(const RunConfig& c) {
  Manifest m = load_manifest(c);
  ArchetypeSet a = load_archetypes(c);
  PatternPredictor fA = load_predictor(c, a);
  std::vector<SequenceWindow> train = manifest_windows(c, m, 0);
  require(!train.empty(), ErrorKind::InvalidInput, "no training windows");

  NoiseSchedule sched = make_schedule(c.schedule.S, c.schedule.beta_start, c.schedule.beta_end);
  DenoiserTrainConfig tc;
  tc.hidden_dims = c.denoiser.hidden_dims;
  tc.activation = detail::activation_from_string(c.denoiser.activation);
  tc.lr = c.denoiser.lr;
  tc.batch_size = c.denoiser.batch_size;
  tc.epochs = c.denoiser.epochs;
  tc.time_embed_dim = c.denoiser.time_embed_dim;
  tc.seed = stage_seed(c.seed, kSeedDiffusion);
  tc.solver_tol = c.archetypal.solver_tol;

  DenoiserTrainReport report;
  Denoiser den = train_denoiser(train, a, fA, sched, c.guidance, tc, &report);
  Json j = denoiser_to_json(den, sched, c.guidance, diffusion_stage_hash(c),
                            archetype_payload_hash(a));
  j["training"] = Json{{"epoch_loss", report.epoch_loss}};
  save_json_file(denoiser_path(c), j);
  std::cout << "trained denoiser for " << c.denoiser.epochs << " epochs, final loss "
            << (report.epoch_loss.empty() ? 0.0 : report.epoch_loss.back()) << "\n";
}

struct LoadedPipeline {
  Manifest manifest;
  ArchetypeSet archetypes;
  PatternPredictor predictor;
  Denoiser denoiser;
  NoiseSchedule schedule;
};

inline LoadedPipeline load_pipeline(const RunConfig& c) {
  LoadedPipeline lp;
  lp.manifest = load_manifest(c);
  lp.archetypes = load_archetypes(c);
  lp.predictor = load_predictor(c, lp.archetypes);
  DenoiserBundle db = denoiser_from_json(load_json_file(denoiser_path(c)),
                                         diffusion_stage_hash(c),
                                         archetype_payload_hash(lp.archetypes));
  lp.denoiser = std::move(db.denoiser);
  lp.schedule = std::move(db.schedule);
  return lp;
}

// Evenly spaced subsample of [0, n); cap <= 0 keeps everything.
inline std::vector<int> cap_indices(int n, int cap) {
  std::vector<int> idx;
  if (cap <= 0 || cap >= n) {
    idx.resize(size_t(std::max(n, 0)));
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
  }
  for (int i = 0; i < cap; ++i) idx.push_back(int(int64_t(i) * n / cap));
  return idx;
}

inline void cmd_forecast(const RunConfig& c) {
  LoadedPipeline lp = load_pipeline(c);
  std::vector<SequenceWindow> test = manifest_windows(c, lp.manifest, 2);
  require(!test.empty(), ErrorKind::InvalidInput, "no test windows to forecast");
  require(c.forecast.num_samples >= 1, ErrorKind::InvalidInput,
          "forecast.num_samples must be >= 1");
  require(c.forecast.format == "json" || c.forecast.format == "csv",
          ErrorKind::InvalidInput, "forecast.format must be json or csv");

  std::vector<int> picked = cap_indices(int(test.size()), c.forecast.max_windows);
  const int K = c.forecast.num_samples;
  const uint64_t root = stage_seed(c.seed, kSeedForecast);

  struct WindowForecast {
    int window_index;
    double u, w_used, w_star_used;
    std::vector<Matrix> samples;
  };
  std::vector<WindowForecast> results(picked.size());
  parallel_for(int(picked.size()), c.forecast.threads, [&](int i) {
    const SequenceWindow& w = test[size_t(picked[size_t(i)])];
    WindowForecast& out = results[size_t(i)];
    out.window_index = picked[size_t(i)];
    for (int k = 0; k < K; ++k) {
      Rng rng = Rng::derive(root, uint64_t(picked[size_t(i)]) * uint64_t(K) + uint64_t(k));
      HorizonSample hs = sample_horizon(lp.denoiser, lp.predictor, lp.archetypes,
                                        lp.schedule, c.guidance, w.history, rng);
      out.u = hs.u;
      out.w_used = hs.w_used;
      out.w_star_used = hs.w_star_used;
      out.samples.push_back(std::move(hs.forecast));
    }
  });

  fs::create_directories(c.paths.report_dir);
  if (c.forecast.format == "csv") {
    fs::path dir = fs::path(c.paths.report_dir) / "forecasts";
    fs::create_directories(dir);
    Json index = Json::array();
    for (const auto& r : results) {
      const SequenceWindow& w = test[size_t(r.window_index)];
      for (int k = 0; k < K; ++k) {
        char name[64];
        std::snprintf(name, sizeof name, "window_%05d_sample_%02d.csv", r.window_index, k);
        save_sequence_csv((dir / name).string(), r.samples[size_t(k)]);
        index.push_back(Json{{"file", name},
                             {"window_index", r.window_index},
                             {"source_id", w.source_id},
                             {"offset", w.offset},
                             {"sample", k},
                             {"u", r.u},
                             {"w_used", r.w_used},
                             {"w_star_used", r.w_star_used}});
      }
    }
    save_json_file((dir / "index.json").string(), Json{{"kind", "forecast_index"},
                                                       {"format_version", kCheckpointVersion},
                                                       {"entries", index}});
  } else {
    Json windows = Json::array();
    for (const auto& r : results) {
      const SequenceWindow& w = test[size_t(r.window_index)];
      Json samples = Json::array();
      for (int k = 0; k < K; ++k)
        samples.push_back(Json{{"sample", k},
                               {"u", r.u},
                               {"w_used", r.w_used},
                               {"w_star_used", r.w_star_used},
                               {"values", matrix_to_json(r.samples[size_t(k)])}});
      windows.push_back(Json{{"window_index", r.window_index},
                             {"source_id", w.source_id},
                             {"offset", w.offset},
                             {"u", r.u},
                             {"w_used", r.w_used},
                             {"w_star_used", r.w_star_used},
                             {"samples", std::move(samples)}});
    }
    Json j;
    j["kind"] = "forecasts";
    j["format_version"] = kCheckpointVersion;
    j["config_hash"] = diffusion_stage_hash(c);
    j["K"] = K;
    j["n_windows"] = int(results.size());
    j["windows"] = std::move(windows);
    save_json_file((fs::path(c.paths.report_dir) / "forecasts.json").string(), j);
  }
  std::cout << "forecast " << results.size() << " windows x " << K << " samples ("
            << c.forecast.format << ")\n";
}

struct EvalRow {
  double w_bar = 0.0, w_star_bar = 0.0;
  double mae_mean = 0.0, mae_std = 0.0;
  double crps_raw = 0.0, crps_normalized = 0.0;
  int n_windows = 0;
};

// Shared rng streams per (window, sample) across settings: the w-sweep is a
// paired comparison with common random numbers.
inline EvalRow evaluate_setting(const LoadedPipeline& lp, const RunConfig& c,
                                const std::vector<SequenceWindow>& test,
                                const std::vector<int>& picked, double w_bar,
                                double w_star_bar, uint64_t root, int threads) {
  GuidanceConfig g = c.guidance;
  g.w_bar = w_bar;
  g.w_star_bar = w_star_bar;
  const int K = c.forecast.num_samples;
  const int n = int(picked.size());

  // per-sample-index MAE accumulators (mean over windows); the reported
  // spread is mean +/- std across the K sampled forecasts, not across windows
  std::vector<double> mae_by_sample(size_t(K), 0.0);
  std::vector<double> crps_raw_by_window(size_t(n), 0.0);
  std::vector<double> crps_norm_by_window(size_t(n), 0.0);
  std::vector<int> crps_norm_valid(size_t(n), 0);
  Matrix mae_terms(n, K);

  parallel_for(n, threads, [&](int i) {
    const SequenceWindow& w = test[size_t(picked[size_t(i)])];
    ForecastEnsemble ens;
    ens.truth = w.horizon;
    for (int k = 0; k < K; ++k) {
      Rng rng = Rng::derive(root, uint64_t(picked[size_t(i)]) * uint64_t(K) + uint64_t(k));
      HorizonSample hs = sample_horizon(lp.denoiser, lp.predictor, lp.archetypes,
                                        lp.schedule, g, w.history, rng);
      ens.samples.push_back(std::move(hs.forecast));
    }
    for (int k = 0; k < K; ++k)
      mae_terms(i, k) = (ens.samples[size_t(k)] - w.horizon).cwiseAbs().mean();
    CrpsResult cr = crps_sum(ens);
    crps_raw_by_window[size_t(i)] = cr.raw;
    if (std::isfinite(cr.normalized)) {
      crps_norm_by_window[size_t(i)] = cr.normalized;
      crps_norm_valid[size_t(i)] = 1;
    }
  });

  for (int k = 0; k < K; ++k) mae_by_sample[size_t(k)] = mae_terms.col(k).mean();
  double mean = 0.0;
  for (double v : mae_by_sample) mean += v;
  mean /= double(K);
  double var = 0.0;
  for (double v : mae_by_sample) var += (v - mean) * (v - mean);
  double stddev = (K > 1) ? std::sqrt(var / double(K - 1)) : 0.0;

  EvalRow row;
  row.w_bar = w_bar;
  row.w_star_bar = w_star_bar;
  row.mae_mean = mean;
  row.mae_std = stddev;
  row.n_windows = n;
  double craw = 0.0, cnorm = 0.0;
  int nvalid = 0;
  for (int i = 0; i < n; ++i) {
    craw += crps_raw_by_window[size_t(i)];
    cnorm += crps_norm_by_window[size_t(i)];
    nvalid += crps_norm_valid[size_t(i)];
  }
  row.crps_raw = craw / double(n);
  row.crps_normalized = (nvalid > 0) ? cnorm / double(nvalid)
                                     : std::numeric_limits<double>::quiet_NaN();
  return row;
}

inline Json eval_row_to_json(const EvalRow& r) {
  return Json{{"w_bar", r.w_bar},
              {"w_star_bar", r.w_star_bar},
              {"mae_mean", r.mae_mean},
              {"mae_std", r.mae_std},
              {"crps_raw", r.crps_raw},
              {"crps_normalized", r.crps_normalized},
              {"n_windows", r.n_windows}};
}

inline void cmd_evaluate(const RunConfig& c) {
  LoadedPipeline lp = load_pipeline(c);
  std::vector<SequenceWindow> test = manifest_windows(c, lp.manifest, 2);
  require(!test.empty(), ErrorKind::InvalidInput, "no test windows to evaluate");
  std::vector<int> picked = cap_indices(int(test.size()), c.evaluate.max_windows);
  const uint64_t root = stage_seed(c.seed, kSeedForecast);
  const int threads = c.forecast.threads;

  EvalRow unguided = evaluate_setting(lp, c, test, picked, 0.0, 0.0, root, threads);
  EvalRow configured = evaluate_setting(lp, c, test, picked, c.guidance.w_bar,
                                        c.guidance.w_star_bar, root, threads);
  Json sweep = Json::array();
  for (double wb : c.evaluate.w_bar_sweep) {
    EvalRow row = evaluate_setting(lp, c, test, picked, wb, c.guidance.w_star_bar, root,
                                   threads);
    Json rj = eval_row_to_json(row);
    rj["mae_delta_vs_unguided"] = row.mae_mean - unguided.mae_mean;
    sweep.push_back(std::move(rj));
  }

  Json j = eval_row_to_json(configured);
  j["kind"] = "evaluation";
  j["format_version"] = kCheckpointVersion;
  j["config_hash"] = diffusion_stage_hash(c);
  j["K"] = c.forecast.num_samples;
  j["unguided_baseline"] = eval_row_to_json(unguided);
  j["mae_delta_vs_unguided"] = configured.mae_mean - unguided.mae_mean;
  j["sweep"] = std::move(sweep);
  save_json_file((fs::path(c.paths.report_dir) / "evaluation.json").string(), j);
  std::cout << "evaluated " << picked.size() << " windows: mae " << configured.mae_mean
            << " (unguided " << unguided.mae_mean << ")\n";
}

// ---------------------------------------------------------------------------
// certification

inline void cmd_certify(const RunConfig& c) {
  Manifest m = load_manifest(c);
  ArchetypeSet a = load_archetypes(c);
  PatternPredictor fA = load_predictor(c, a);
  Rng rng(stage_seed(c.seed, kSeedCertify));

  std::vector<SequenceWindow> test = manifest_windows(c, m, 2);
  std::vector<SequenceWindow> pool = test.empty() ? manifest_windows(c, m, 0) : test;
  require(!pool.empty(), ErrorKind::InvalidInput, "certify: no windows available");

  // data scale, for synthesizing random windows and probe points
  double scale = 0.0;
  for (const auto& w : pool) scale = std::max({scale, w.history.cwiseAbs().maxCoeff(),
                                               w.horizon.cwiseAbs().maxCoeff()});
  if (scale <= 0.0) scale = 1.0;

  // --- Theorem 1: L_fG >= L_cA(horizon) - L_fA over randomized pairs -------
  const int n_predictors = 100;
  std::vector<PatternPredictor> predictors;
  predictors.reserve(size_t(n_predictors));
  predictors.push_back(fA);
  std::vector<int> dims{fA.p * fA.T, 32, fA.p * fA.H};
  while (int(predictors.size()) < n_predictors) {
    Mlp net = make_mlp(dims, Activation::Tanh, Head::StepSoftmax, fA.p, rng);
    // random output bias spreads the softmax away from uniform
    for (int i = 0; i < net.biases.back().size(); ++i)
      net.biases.back()[i] = 2.0 * rng.normal();
    predictors.push_back(PatternPredictor{std::move(net), fA.p, fA.T, fA.H});
  }

  int violations = 0;
  double min_margin = std::numeric_limits<double>::infinity();
  const int pairs = std::max(c.certify.theorem1_pairs, 1);
  for (int k = 0; k < pairs; ++k) {
    SequenceWindow w;
    if (k % 2 == 0) {
      w = pool[size_t(k / 2 % int(pool.size()))];
    } else {
      // fully random window at data scale
      w.history = Matrix(m.d, m.T);
      w.horizon = Matrix(m.d, m.H);
      for (int t = 0; t < m.T; ++t) w.history.col(t) = scale * rng.normal_vec(m.d);
      for (int t = 0; t < m.H; ++t) w.horizon.col(t) = scale * rng.normal_vec(m.d);
    }
    const PatternPredictor& pred = predictors[size_t(k % n_predictors)];
    Theorem1Check chk = check_theorem1(pred, a, w);
    min_margin = std::min(min_margin, chk.lhs - chk.rhs);
    if (!chk.holds) ++violations;
  }

  // --- Theorem 2 sandwich on a freshly fitted certification set ------------
  FitOptions fit_opts;
  fit_opts.tol = c.archetypal.tol;
  fit_opts.solver_tol = c.archetypal.solver_tol;
  fit_opts.max_iter = c.archetypal.max_iter;
  fit_opts.seed = stage_seed(c.seed, kSeedArchetypes);

  DataMatrix all_frames = archetype_fit_data(c, m);
  const int n_cert = std::min(c.certify.cert_data_points, all_frames.rows());
  require(c.archetypal.p < n_cert, ErrorKind::InvalidArity,
          "certify: need p < cert_data_points for the sandwich check");
  DataMatrix cert_data;
  {
    std::vector<int> idx(static_cast<size_t>(all_frames.rows()));
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    cert_data.values.resize(n_cert, all_frames.cols());
    for (int i = 0; i < n_cert; ++i)
      cert_data.values.row(i) = all_frames.values.row(idx[size_t(i)]);
  }
  ArchetypeSet a_cert = fit_archetypes(cert_data, c.archetypal.p, fit_opts);

  const double hull_tol = 1e-7;
  const int hull_iters = 4000;
  int sandwich_violations = 0;
  double max_excess = 0.0;
  int n_points = std::max(c.certify.theorem2_points, 1);
  for (int k = 0; k < n_points; ++k) {
    // half near the data, half pushed well outside
    Vector base = cert_data.values.row(rng.uniform_int(n_cert)).transpose();
    Vector x = base + (k % 2 == 0 ? 0.1 : 2.0) * scale * rng.normal_vec(int(base.size()));
    double u = reconstruction_error(x, a_cert, fit_opts.solver_tol);
    HullDistanceResult hd = hull_distance(x, cert_data, a_cert, hull_tol, hull_iters);
    double excess = std::abs(u - hd.distance) - hd.delta_gap;
    max_excess = std::max(max_excess, excess);
    if (excess > 1e-6) ++sandwich_violations;
  }

  // --- p = n equality on a small dataset ------------------------------------
  const int n_eq = std::min(c.certify.eq_dataset_size, all_frames.rows());
  DataMatrix eq_data;
  {
    std::vector<int> idx(static_cast<size_t>(all_frames.rows()));
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    eq_data.values.resize(n_eq, all_frames.cols());
    for (int i = 0; i < n_eq; ++i)
      eq_data.values.row(i) = all_frames.values.row(idx[size_t(i)]);
  }
  ArchetypeSet a_eq = fit_archetypes(eq_data, n_eq, fit_opts);
  double max_eq_residual = 0.0;
  for (int k = 0; k < std::max(c.certify.eq_points, 1); ++k) {
    Vector base = eq_data.values.row(rng.uniform_int(n_eq)).transpose();
    Vector x = base + (k % 2 == 0 ? 0.1 : 1.0) * scale * rng.normal_vec(int(base.size()));
    // the equality needs both solves tight, not just the sandwich: give the
    // small p = n problems a generous iteration budget
    double u = reconstruction_error(x, a_eq, fit_opts.solver_tol);
    HullDistanceResult hd = hull_distance(x, eq_data, a_eq, fit_opts.solver_tol, 20000);
    max_eq_residual = std::max(max_eq_residual, std::abs(u - hd.distance));
  }

  // --- AAUQ-vs-error trend over test windows --------------------------------
  Json trend;
  {
    std::vector<double> us, errs;
    int bound_holds = 0;
    for (const auto& w : pool) {
      Theorem1Check chk = check_theorem1(fA, a, w);
      us.push_back(aauq(w.history, a));
      errs.push_back(chk.lhs);
      if (chk.holds) ++bound_holds;
    }
    trend["n_windows"] = int(pool.size());
    trend["bound_fraction"] = double(bound_holds) / double(pool.size());
    trend["pearson_u_vs_lfg"] = (pool.size() >= 2) ? pearson(us, errs) : 0.0;
  }

  Json j;
  j["kind"] = "certification";
  j["format_version"] = kCheckpointVersion;
  j["config_hash"] = guidance_stage_hash(c);
  j["theorem1"] = Json{{"pairs", pairs},
                       {"violations", violations},
                       {"min_margin", min_margin},
                       {"tolerance", 1e-9}};
  j["theorem2"] = Json{{"points", n_points},
                       {"violations", sandwich_violations},
                       {"max_excess_over_delta", max_excess},
                       {"tolerance", 1e-6},
                       {"p", c.archetypal.p},
                       {"n", n_cert}};
  j["p_equals_n"] = Json{{"points", std::max(c.certify.eq_points, 1)},
                         {"n", n_eq},
                         {"max_abs_residual", max_eq_residual},
                         {"tolerance", 1e-6},
                         {"holds", max_eq_residual <= 1e-6}};
  j["aauq_trend"] = trend;
  save_json_file((fs::path(c.paths.report_dir) / "certification.json").string(), j);

  std::cout << "theorem 1: " << violations << " violations over " << pairs << " pairs\n"
            << "theorem 2: " << sandwich_violations << " sandwich violations over "
            << n_points << " points (max excess " << max_excess << ")\n"
            << "p = n equality residual: " << max_eq_residual << "\n"
            << "aauq trend: bound fraction " << trend["bound_fraction"]
            << ", pearson " << trend["pearson_u_vs_lfg"] << "\n";

  require(violations == 0, ErrorKind::InvalidState,
          "certification failed: Theorem 1 violations found");
  require(sandwich_violations == 0, ErrorKind::InvalidState,
          "certification failed: Theorem 2 sandwich violations found");
  require(max_eq_residual <= 1e-6, ErrorKind::InvalidState,
          "certification failed: p = n equality residual above tolerance");
}

}  // namespace pgdm
