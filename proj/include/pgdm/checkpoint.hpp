#pragma once
// Versioned JSON checkpoints for every trained artifact, plus the config
// hashing that lets downstream stages refuse stale inputs.

#include "pgdm/archetypal.hpp"
#include "pgdm/common.hpp"
#include "pgdm/data.hpp"
#include "pgdm/diffusion.hpp"
#include "pgdm/guidance.hpp"
#include "pgdm/nn.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>

namespace pgdm {

using Json = nlohmann::json;

constexpr int kCheckpointVersion = 1;

inline std::string json_hash(const Json& j) { return to_hex(fnv1a(j.dump())); }

inline void save_json_file(const std::string& path, const Json& j) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path);
  require(bool(out), ErrorKind::InvalidInput, "cannot write " + path);
  out << j.dump(2) << '\n';
  require(bool(out), ErrorKind::InvalidInput, "failed writing " + path);
}

inline Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  require(bool(in), ErrorKind::MissingArtifact, "missing artifact: " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    fail(ErrorKind::ParseError, "cannot parse " + path + ": " + e.what());
  }
}

// Envelope checks shared by every loader. A wrong kind means the caller is
// pointing at the wrong file (ParseError); a version or config-hash mismatch
// means the artifact belongs to another pipeline state (StaleArtifact).
inline void check_envelope(const Json& j, const std::string& kind,
                           const std::string& expected_config_hash = "") {
  require(j.is_object() && j.contains("kind") && j.contains("format_version"),
          ErrorKind::ParseError, "checkpoint lacks kind/format_version");
  require(j["kind"] == kind, ErrorKind::ParseError,
          "expected a '" + kind + "' checkpoint, found " + j["kind"].dump());
  require(j["format_version"] == kCheckpointVersion, ErrorKind::StaleArtifact,
          "unsupported checkpoint format version for " + kind);
  if (!expected_config_hash.empty()) {
    require(j.contains("config_hash") && j["config_hash"] == expected_config_hash,
            ErrorKind::StaleArtifact,
            kind + " checkpoint was produced by a different config (hash mismatch); re-run the earlier stage");
  }
}

// ---------------------------------------------------------------------------
// matrices and vectors

inline Json matrix_to_json(const Matrix& m) {
  // row-major flat array
  std::vector<double> flat;
  flat.reserve(size_t(m.size()));
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", flat}};
}

inline Matrix matrix_from_json(const Json& j) {
  require(j.is_object() && j.contains("rows") && j.contains("cols") && j.contains("data"),
          ErrorKind::ParseError, "malformed matrix in checkpoint");
  int rows = j["rows"].get<int>();
  int cols = j["cols"].get<int>();
  auto flat = j["data"].get<std::vector<double>>();
  require(rows >= 0 && cols >= 0 && int(flat.size()) == rows * cols,
          ErrorKind::ParseError, "matrix data length does not match dims");
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = flat[size_t(r) * size_t(cols) + size_t(c)];
  return m;
}

inline Json vector_to_json(const Vector& v) {
  return Json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Vector vector_from_json(const Json& j) {
  auto vals = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(vals.data(), int(vals.size()));
}

// ---------------------------------------------------------------------------
// networks

inline Json mlp_to_json(const Mlp& net) {
  Json j;
  j["layer_dims"] = net.layer_dims;
  j["activation"] = (net.activation == Activation::Tanh) ? "tanh" : "relu";
  j["head"] = (net.head == Head::Linear) ? "linear" : "step_softmax";
  j["softmax_group"] = net.softmax_group;
  Json weights = Json::array(), biases = Json::array();
  for (int l = 0; l < net.layers(); ++l) {
    weights.push_back(matrix_to_json(net.weights[size_t(l)]));
    biases.push_back(vector_to_json(net.biases[size_t(l)]));
  }
  j["weights"] = std::move(weights);
  j["biases"] = std::move(biases);
  return j;
}

inline Mlp mlp_from_json(const Json& j) {
  Mlp net;
  try {
    net.layer_dims = j.at("layer_dims").get<std::vector<int>>();
    std::string act = j.at("activation").get<std::string>();
    require(act == "tanh" || act == "relu", ErrorKind::ParseError, "unknown activation " + act);
    net.activation = (act == "tanh") ? Activation::Tanh : Activation::Relu;
    std::string head = j.at("head").get<std::string>();
    require(head == "linear" || head == "step_softmax", ErrorKind::ParseError,
            "unknown head " + head);
    net.head = (head == "linear") ? Head::Linear : Head::StepSoftmax;
    net.softmax_group = j.at("softmax_group").get<int>();
    for (const auto& w : j.at("weights")) net.weights.push_back(matrix_from_json(w));
    for (const auto& b : j.at("biases")) net.biases.push_back(vector_from_json(b));
  } catch (const Json::exception& e) {
    fail(ErrorKind::ParseError, std::string("malformed network in checkpoint: ") + e.what());
  }
  net.validate();
  return net;
}

// ---------------------------------------------------------------------------
// archetypes

inline Json archetype_set_to_json(const ArchetypeSet& a, const std::string& config_hash) {
  a.validate();
  Json j;
  j["kind"] = "archetypes";
  j["format_version"] = kCheckpointVersion;
  j["config_hash"] = config_hash;
  j["d"] = a.dim();
  j["p"] = a.count();
  // row-major d x p block, per the documented format
  std::vector<double> flat;
  flat.reserve(size_t(a.archetypes.size()));
  for (int r = 0; r < a.dim(); ++r)
    for (int c = 0; c < a.count(); ++c) flat.push_back(a.archetypes(r, c));
  j["archetypes"] = flat;
  Json mixing = Json::array();
  for (const auto& w : a.mixing_weights) mixing.push_back(vector_to_json(w.coeffs));
  j["mixing_weights"] = std::move(mixing);
  j["fit_rss"] = a.fit_rss;
  j["iterations_used"] = a.iterations_used;
  j["rss_history"] = a.rss_history;
  j["degenerate_data"] = a.degenerate_data;
  return j;
}

inline ArchetypeSet archetype_set_from_json(const Json& j,
                                            const std::string& expected_config_hash = "") {
  check_envelope(j, "archetypes", expected_config_hash);
  ArchetypeSet a;
  try {
    int d = j.at("d").get<int>();
    int p = j.at("p").get<int>();
    auto flat = j.at("archetypes").get<std::vector<double>>();
    require(d >= 1 && p >= 1 && int(flat.size()) == d * p, ErrorKind::ParseError,
            "archetype block length does not match d*p");
    a.archetypes.resize(d, p);
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < p; ++c) a.archetypes(r, c) = flat[size_t(r) * size_t(p) + size_t(c)];
    for (const auto& w : j.at("mixing_weights"))
      a.mixing_weights.push_back(SimplexVector::checked(vector_from_json(w)));
    a.fit_rss = j.at("fit_rss").get<double>();
    a.iterations_used = j.value("iterations_used", 0);
    a.rss_history = j.value("rss_history", std::vector<double>{});
    a.degenerate_data = j.value("degenerate_data", false);
  } catch (const Json::exception& e) {
    fail(ErrorKind::ParseError, std::string("malformed archetype checkpoint: ") + e.what());
  }
  a.validate();
  return a;
}

// Hash of the archetypes themselves; downstream checkpoints embed it so a
// re-fit A invalidates them even when the config did not change.
inline std::string archetype_payload_hash(const ArchetypeSet& a) {
  Json j;
  j["archetypes"] = matrix_to_json(a.archetypes);
  j["fit_rss"] = a.fit_rss;
  return json_hash(j);
}

// ---------------------------------------------------------------------------
// pattern predictor

inline Json pattern_predictor_to_json(const PatternPredictor& fA,
                                      const std::string& config_hash,
                                      const std::string& archetype_hash) {
  fA.validate();
  Json j;
  j["kind"] = "pattern_predictor";
  j["format_version"] = kCheckpointVersion;
  j["config_hash"] = config_hash;
  j["archetype_hash"] = archetype_hash;
  j["p"] = fA.p;
  j["T"] = fA.T;
  j["H"] = fA.H;
  j["net"] = mlp_to_json(fA.net);
  return j;
}

inline PatternPredictor pattern_predictor_from_json(
    const Json& j, const std::string& expected_config_hash = "",
    const std::string& expected_archetype_hash = "") {
  check_envelope(j, "pattern_predictor", expected_config_hash);
  if (!expected_archetype_hash.empty()) {
    require(j.contains("archetype_hash") && j["archetype_hash"] == expected_archetype_hash,
            ErrorKind::StaleArtifact,
            "pattern predictor was trained against different archetypes; re-run train-guidance");
  }
  PatternPredictor fA;
  try {
    fA.p = j.at("p").get<int>();
    fA.T = j.at("T").get<int>();
    fA.H = j.at("H").get<int>();
    fA.net = mlp_from_json(j.at("net"));
  } catch (const Json::exception& e) {
    fail(ErrorKind::ParseError, std::string("malformed predictor checkpoint: ") + e.what());
  }
  fA.validate();
  return fA;
}

// ---------------------------------------------------------------------------
// denoiser bundle (network + schedule + guidance + normalizer)

inline Json schedule_to_json(const NoiseSchedule& s) {
  return Json{{"S", s.S}, {"beta_start", s.beta_start}, {"beta_end", s.beta_end},
              {"kind", "linear"}};
}

inline NoiseSchedule schedule_from_json(const Json& j) {
  try {
    require(j.at("kind") == "linear", ErrorKind::ParseError, "unknown schedule kind");
    return make_schedule(j.at("S").get<int>(), j.at("beta_start").get<double>(),
                         j.at("beta_end").get<double>());
  } catch (const Json::exception& e) {
    fail(ErrorKind::ParseError, std::string("malformed schedule in checkpoint: ") + e.what());
  }
}

inline Json guidance_config_to_json(const GuidanceConfig& g) {
  return Json{{"w_bar", g.w_bar}, {"w_star_bar", g.w_star_bar}, {"gamma", g.gamma},
              {"p_drop", g.p_drop}};
}

inline GuidanceConfig guidance_config_from_json(const Json& j) {
  GuidanceConfig g;
  try {
    g.w_bar = j.at("w_bar").get<double>();
    g.w_star_bar = j.at("w_star_bar").get<double>();
    g.gamma = j.at("gamma").get<double>();
    g.p_drop = j.at("p_drop").get<double>();
  } catch (const Json::exception& e) {
    fail(ErrorKind::ParseError, std::string("malformed guidance config: ") + e.what());
  }
  g.validate();
  return g;
}

inline Json denoiser_to_json(const Denoiser& den, const NoiseSchedule& sched,
                             const GuidanceConfig& gcfg, const std::string& config_hash,
                             const std::string& archetype_hash) {
  den.validate();
  Json j;
  j["kind"] = "denoiser";
  j["format_version"] = kCheckpointVersion;
  j["config_hash"] = config_hash;
  j["archetype_hash"] = archetype_hash;
  j["d"] = den.d;
  j["T"] = den.T;
  j["H"] = den.H;
  j["time_embed_dim"] = den.time_embed_dim;
  j["net"] = mlp_to_json(den.net);
  j["normalizer"] = Json{{"lo", vector_to_json(den.normalizer.lo)},
                         {"scale", vector_to_json(den.normalizer.scale)}};
  j["schedule"] = schedule_to_json(sched);
  j["guidance"] = guidance_config_to_json(gcfg);
  return j;
}

struct DenoiserBundle {
  Denoiser denoiser;
  NoiseSchedule schedule;
  GuidanceConfig guidance;
};

inline DenoiserBundle denoiser_from_json(const Json& j,
                                         const std::string& expected_config_hash = "",
                                         const std::string& expected_archetype_hash = "") {
  check_envelope(j, "denoiser", expected_config_hash);
  if (!expected_archetype_hash.empty()) {
    require(j.contains("archetype_hash") && j["archetype_hash"] == expected_archetype_hash,
            ErrorKind::StaleArtifact,
            "denoiser was trained against different archetypes; re-run train-diffusion");
  }
  DenoiserBundle b;
  try {
    b.denoiser.d = j.at("d").get<int>();
    b.denoiser.T = j.at("T").get<int>();
    b.denoiser.H = j.at("H").get<int>();
    b.denoiser.time_embed_dim = j.at("time_embed_dim").get<int>();
    b.denoiser.net = mlp_from_json(j.at("net"));
    b.denoiser.normalizer.lo = vector_from_json(j.at("normalizer").at("lo"));
    b.denoiser.normalizer.scale = vector_from_json(j.at("normalizer").at("scale"));
    b.schedule = schedule_from_json(j.at("schedule"));
    b.guidance = guidance_config_from_json(j.at("guidance"));
  } catch (const Json::exception& e) {
    fail(ErrorKind::ParseError, std::string("malformed denoiser checkpoint: ") + e.what());
  }
  b.denoiser.validate();
  return b;
}

}  // namespace pgdm
