// pgdm command-line front end. All pipeline logic lives in the headers; this
// file parses flags, merges them over the JSON config (flags win), dispatches
// the subcommand, and maps pgdm::Error to machine-readable JSON on stderr.

#include <pgdm/cli.hpp>

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

struct Overrides {
  std::optional<uint64_t> seed;
  std::optional<std::string> data_dir, checkpoint_dir, report_dir, csv_dir, mode;
  std::optional<int> p;
  bool auto_select_p = false;
  std::optional<double> w_bar, w_star_bar, gamma;
  std::optional<int> num_samples, max_windows, threads;
  std::optional<std::string> format;
};

void apply(const Overrides& o, pgdm::RunConfig& cfg, const std::string& cmd) {
  if (o.seed) cfg.seed = *o.seed;
  if (o.data_dir) cfg.paths.data_dir = *o.data_dir;
  if (o.checkpoint_dir) cfg.paths.checkpoint_dir = *o.checkpoint_dir;
  if (o.report_dir) cfg.paths.report_dir = *o.report_dir;
  if (o.csv_dir) cfg.paths.csv_dir = *o.csv_dir;
  if (o.mode) cfg.data.mode = *o.mode;
  if (o.p) cfg.archetypal.p = *o.p;
  if (o.auto_select_p) cfg.archetypal.auto_select_p = true;
  if (o.w_bar) cfg.guidance.w_bar = *o.w_bar;
  if (o.w_star_bar) cfg.guidance.w_star_bar = *o.w_star_bar;
  if (o.gamma) cfg.guidance.gamma = *o.gamma;
  if (o.num_samples) cfg.forecast.num_samples = *o.num_samples;
  if (o.max_windows) {
    if (cmd == "evaluate")
      cfg.evaluate.max_windows = *o.max_windows;
    else
      cfg.forecast.max_windows = *o.max_windows;
  }
  if (o.threads) {
    cfg.forecast.threads = *o.threads;
    cfg.archetypal.threads = *o.threads;
  }
  if (o.format) cfg.forecast.format = *o.format;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"archetypal pattern-guided diffusion forecasting pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  Overrides o;
  app.add_option("-c,--config", config_path, "JSON run configuration file");
  app.add_option("--seed", o.seed, "root seed (overrides config)");
  app.add_option("--data-dir", o.data_dir, "dataset directory");
  app.add_option("--checkpoint-dir", o.checkpoint_dir, "checkpoint directory");
  app.add_option("--report-dir", o.report_dir, "report directory");
  app.add_option("--mode", o.mode, "data mode: synthetic | csv");
  app.add_option("--w-bar", o.w_bar, "max pattern guidance scale");
  app.add_option("--w-star-bar", o.w_star_bar, "max pattern mixing scale");
  app.add_option("--gamma", o.gamma, "uncertainty cutoff for dynamic scaling");
  app.add_option("--threads", o.threads, "worker threads for fan-out stages");

  app.add_subcommand("generate", "synthesize sequences and write the manifest");
  auto* c_ingest = app.add_subcommand("ingest", "index external CSV sequences");
  c_ingest->add_option("--csv-dir", o.csv_dir, "directory of per-sequence CSV files");
  auto* c_fit = app.add_subcommand("fit-patterns", "fit archetypes on training frames");
  c_fit->add_option("--p", o.p, "archetype count");
  c_fit->add_flag("--auto-select-p", o.auto_select_p, "pick p by the elbow rule");
  app.add_subcommand("train-guidance", "train the archetype-space pattern predictor");
  app.add_subcommand("train-diffusion", "train the guided denoiser");
  auto* c_forecast = app.add_subcommand("forecast", "sample forecasts for test windows");
  c_forecast->add_option("--num-samples", o.num_samples, "samples per window");
  c_forecast->add_option("--max-windows", o.max_windows, "cap on forecast windows (0 = all)");
  c_forecast->add_option("--format", o.format, "output format: json | csv");
  auto* c_eval = app.add_subcommand("evaluate", "score forecasts against held-out truth");
  c_eval->add_option("--max-windows", o.max_windows, "cap on evaluated windows (0 = all)");
  app.add_subcommand("certify", "run the theorem certification suite");

  CLI11_PARSE(app, argc, argv);

  try {
    pgdm::RunConfig cfg = pgdm::load_run_config(config_path);
    const std::string cmd = app.get_subcommands().front()->get_name();
    apply(o, cfg, cmd);
    if (cmd == "generate") pgdm::cmd_generate(cfg);
    else if (cmd == "ingest") pgdm::cmd_ingest(cfg);
    else if (cmd == "fit-patterns") pgdm::cmd_fit_patterns(cfg);
    else if (cmd == "train-guidance") pgdm::cmd_train_guidance(cfg);
    else if (cmd == "train-diffusion") pgdm::cmd_train_diffusion(cfg);
    else if (cmd == "forecast") pgdm::cmd_forecast(cfg);
    else if (cmd == "evaluate") pgdm::cmd_evaluate(cfg);
    else if (cmd == "certify") pgdm::cmd_certify(cfg);
  } catch (const pgdm::Error& e) {
    pgdm::Json err{{"error", {{"type", to_string(e.kind())}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    pgdm::Json err{{"error", {{"type", "internal"}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 2;
  }
  return 0;
}
