#pragma once

// JSON schemas for the training configuration and the simulator specs. Unknown
// keys are rejected; absent keys keep their defaults. See configs/ for
// complete examples.

#include "ncam/losses.hpp"
#include "ncam/model.hpp"
#include "ncam/simulator.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace ncam {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct TrainConfig {
  std::int64_t iterations = 150000;
  std::int64_t bootstrap_iterations = 10000;
  int batch_size = 30000;
  double lr = 1e-4;
  std::optional<double> bootstrap_lr;  // defaults to lr
  LossWeights loss;
  Architecture arch;
  int frequencies = 7;
  int patch = 3;
  double max_offset = 5.0;
  double k_log = 8.0;
  bool blur = true;
  std::optional<ExposureMode> exposure_mode;  // defaults to the manifest's
  int gradient_probes = 256;
  double gradient_eps = 1e-2;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 0;  // 0: final checkpoint only
  std::int64_t log_every = 100;
  bool deterministic = true;  // ordered reduction of shard gradients
  int threads = 1;
  int shards = 1;             // batch slices evaluated on separate tapes

  ModelConfig model_config() const {
    ModelConfig m;
    m.arch = arch;
    m.frequencies = frequencies;
    m.patch = patch;
    m.max_offset = max_offset;
    m.k_log = k_log;
    m.blur = blur;
    return m;
  }

  void validate() const {
    if (iterations < 0 || bootstrap_iterations < 0) throw ConfigError("train config: iteration counts must be >= 0");
    if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
    if (!(lr > 0.0) || (bootstrap_lr && !(*bootstrap_lr > 0.0))) throw ConfigError("train config: lr must be > 0");
    if (gradient_probes < 1 || !(gradient_eps > 0.0)) throw ConfigError("train config: gradient probes/eps must be > 0");
    if (checkpoint_every < 0 || log_every < 0) throw ConfigError("train config: cadences must be >= 0");
    if (threads < 1 || shards < 1) throw ConfigError("train config: threads and shards must be >= 1");
    if (shards > batch_size) throw ConfigError("train config: more shards than batch samples");
    try {
      check_non_negative(loss);
      ModelConfig m = model_config();
      m.log2_dt = {0.0};
      m.validate();
      m.deform_spec().validate();
      m.atlas_spec().validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("train config: ") + e.what());
    }
  }
};

namespace config_detail {

inline void allow_only(const nlohmann::json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> ok(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items()) {
    if (!ok.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

template <class V>
void get(const nlohmann::json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

}  // namespace config_detail

// --- TrainConfig -------------------------------------------------------------

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["iterations"] = c.iterations;
  j["bootstrap_iterations"] = c.bootstrap_iterations;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  if (c.bootstrap_lr) j["bootstrap_lr"] = *c.bootstrap_lr;
  j["loss"] = {{"color", c.loss.color},
               {"flow", c.loss.flow},
               {"white_balance", c.loss.white_balance},
               {"gradient", c.loss.gradient},
               {"c0", c.loss.c0}};
  if (c.loss.flow_decay) j["loss"]["flow_decay"] = *c.loss.flow_decay;
  j["arch"] = {{"deform", c.arch.deform_hidden},
               {"atlas", c.arch.atlas_hidden},
               {"offset", c.arch.offset_hidden},
               {"weight", c.arch.weight_hidden},
               {"tone", c.arch.tone_hidden}};
  j["frequencies"] = c.frequencies;
  j["patch"] = c.patch;
  j["max_offset"] = c.max_offset;
  j["k_log"] = c.k_log;
  j["blur"] = c.blur;
  if (c.exposure_mode) j["exposure_mode"] = to_string(*c.exposure_mode);
  j["gradient_probes"] = c.gradient_probes;
  j["gradient_eps"] = c.gradient_eps;
  j["seed"] = c.seed;
  j["checkpoint_every"] = c.checkpoint_every;
  j["log_every"] = c.log_every;
  j["deterministic"] = c.deterministic;
  j["threads"] = c.threads;
  j["shards"] = c.shards;
  return j;
}

/// Overlays `j` onto `c`; a "preset" key is ignored here (see parse_train_config).
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  using namespace config_detail;
  const std::string w = "train config";
  allow_only(j, w,
             {"iterations", "bootstrap_iterations", "batch_size", "lr", "bootstrap_lr", "loss", "arch", "frequencies",
              "patch", "max_offset", "k_log", "blur", "exposure_mode", "gradient_probes", "gradient_eps", "seed",
              "checkpoint_every", "log_every", "deterministic", "threads", "shards", "preset"});
  get(j, "iterations", c.iterations, w);
  get(j, "bootstrap_iterations", c.bootstrap_iterations, w);
  get(j, "batch_size", c.batch_size, w);
  get(j, "lr", c.lr, w);
  if (j.contains("bootstrap_lr")) {
    double v = 0;
    get(j, "bootstrap_lr", v, w);
    c.bootstrap_lr = v;
  }
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    allow_only(l, w + ".loss", {"color", "flow", "white_balance", "gradient", "c0", "flow_decay"});
    get(l, "color", c.loss.color, w + ".loss");
    get(l, "flow", c.loss.flow, w + ".loss");
    get(l, "white_balance", c.loss.white_balance, w + ".loss");
    get(l, "gradient", c.loss.gradient, w + ".loss");
    get(l, "c0", c.loss.c0, w + ".loss");
    if (l.contains("flow_decay")) {
      std::int64_t v = 0;
      get(l, "flow_decay", v, w + ".loss");
      c.loss.flow_decay = v;
    }
  }
  if (j.contains("arch")) {
    const auto& a = j.at("arch");
    allow_only(a, w + ".arch", {"deform", "atlas", "offset", "weight", "tone"});
    get(a, "deform", c.arch.deform_hidden, w + ".arch");
    get(a, "atlas", c.arch.atlas_hidden, w + ".arch");
    get(a, "offset", c.arch.offset_hidden, w + ".arch");
    get(a, "weight", c.arch.weight_hidden, w + ".arch");
    get(a, "tone", c.arch.tone_hidden, w + ".arch");
  }
  get(j, "frequencies", c.frequencies, w);
  get(j, "patch", c.patch, w);
  get(j, "max_offset", c.max_offset, w);
  get(j, "k_log", c.k_log, w);
  get(j, "blur", c.blur, w);
  if (j.contains("exposure_mode")) {
    std::string s;
    get(j, "exposure_mode", s, w);
    try {
      c.exposure_mode = exposure_mode_from_string(s);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(w + ": " + e.what());
    }
  }
  get(j, "gradient_probes", c.gradient_probes, w);
  get(j, "gradient_eps", c.gradient_eps, w);
  get(j, "seed", c.seed, w);
  get(j, "checkpoint_every", c.checkpoint_every, w);
  get(j, "log_every", c.log_every, w);
  get(j, "deterministic", c.deterministic, w);
  get(j, "threads", c.threads, w);
  get(j, "shards", c.shards, w);
  c.validate();
  return c;
}

/// Named starting points. "full" is the full-size model; "desk" shrinks the
/// networks and batch to fit a few CPU-minutes on 128 x 128 scenes.
inline TrainConfig train_preset(const std::string& name) {
  TrainConfig c;
  if (name == "full") return c;
  if (name == "desk") {
    c.iterations = 20000;
    c.bootstrap_iterations = 1000;
    c.batch_size = 4096;
    c.lr = 1e-3;
    c.arch.deform_hidden = {64, 64};
    c.arch.atlas_hidden = {128, 128, 128};
    c.arch.offset_hidden = {32, 32};
    c.arch.weight_hidden = {32, 32};
    c.arch.tone_hidden = {128};
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (expected full|desk)");
}

/// A "preset" key selects the base that the remaining keys overlay.
inline TrainConfig parse_train_config(const nlohmann::json& j) {
  TrainConfig base;
  if (j.is_object() && j.contains("preset")) base = train_preset(j.at("preset").get<std::string>());
  return train_config_from_json(j, base);
}

// --- simulator specs ------------------------------------------------------------

inline sim::RegionMask region_from_json(const nlohmann::json& j, const std::string& w) {
  using namespace config_detail;
  allow_only(j, w, {"kind", "x0", "y0", "x1", "y1", "r"});
  sim::RegionMask m;
  std::string kind = "all";
  get(j, "kind", kind, w);
  if (kind == "all") m.kind = sim::RegionMask::Kind::all;
  else if (kind == "rect") m.kind = sim::RegionMask::Kind::rect;
  else if (kind == "circle") m.kind = sim::RegionMask::Kind::circle;
  else if (kind == "halfplane") m.kind = sim::RegionMask::Kind::halfplane;
  else throw ConfigError(w + ".kind: expected all|rect|circle|halfplane");
  get(j, "x0", m.x0, w);
  get(j, "y0", m.y0, w);
  get(j, "x1", m.x1, w);
  get(j, "y1", m.y1, w);
  get(j, "r", m.r, w);
  return m;
}

inline sim::SceneSpec scene_spec_from_json(const nlohmann::json& j) {
  using namespace config_detail;
  const std::string w = "scene";
  allow_only(j, w, {"width", "height", "pattern", "span_ev", "log2_max", "cell", "octaves", "colored", "planes"});
  sim::SceneSpec s;
  get(j, "width", s.width, w);
  get(j, "height", s.height, w);
  std::string pattern = "value_noise";
  get(j, "pattern", pattern, w);
  if (pattern == "checkerboard") s.pattern = sim::Pattern::checkerboard;
  else if (pattern == "radial") s.pattern = sim::Pattern::radial;
  else if (pattern == "value_noise") s.pattern = sim::Pattern::value_noise;
  else throw ConfigError(w + ".pattern: expected checkerboard|radial|value_noise");
  get(j, "span_ev", s.span_ev, w);
  get(j, "log2_max", s.log2_max, w);
  get(j, "cell", s.cell, w);
  get(j, "octaves", s.octaves, w);
  get(j, "colored", s.colored, w);
  if (j.contains("planes")) {
    s.planes.clear();
    const auto& arr = j.at("planes");
    if (!arr.is_array()) throw ConfigError(w + ".planes: expected an array");
    for (std::size_t k = 0; k < arr.size(); ++k) {
      const std::string pw = w + ".planes[" + std::to_string(k) + "]";
      allow_only(arr[k], pw, {"depth", "mask"});
      sim::DepthPlane p;
      get(arr[k], "depth", p.depth, pw);
      if (arr[k].contains("mask")) p.mask = region_from_json(arr[k].at("mask"), pw + ".mask");
      s.planes.push_back(p);
    }
  }
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return s;
}

inline sim::CaptureSpec capture_spec_from_json(const nlohmann::json& j, const std::string& w) {
  using namespace config_detail;
  allow_only(j, w, {"ev", "focus_distance", "psf", "blur_gain", "shift_x", "shift_y", "bits", "crf", "gamma", "focus"});
  sim::CaptureSpec c;
  get(j, "ev", c.ev, w);
  get(j, "focus_distance", c.focus_distance, w);
  std::string psf = "none";
  get(j, "psf", psf, w);
  if (psf == "none") c.psf = sim::Psf::none;
  else if (psf == "disk") c.psf = sim::Psf::disk;
  else if (psf == "gaussian") c.psf = sim::Psf::gaussian;
  else throw ConfigError(w + ".psf: expected none|disk|gaussian");
  get(j, "blur_gain", c.blur_gain, w);
  get(j, "shift_x", c.shift_x, w);
  get(j, "shift_y", c.shift_y, w);
  get(j, "bits", c.bits, w);
  std::string crf = "gamma";
  get(j, "crf", crf, w);
  if (crf == "gamma") c.crf = sim::Crf::gamma;
  else if (crf == "linear_clip") c.crf = sim::Crf::linear_clip;
  else throw ConfigError(w + ".crf: expected gamma|linear_clip");
  get(j, "gamma", c.gamma, w);
  get(j, "focus", c.focus_tag, w);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

/// Generator input: {"seed": u64, "scene": {...}, "captures": [{...}, ...]}.
struct GenerateSpec {
  std::uint64_t seed = 0;
  sim::SceneSpec scene;
  std::vector<sim::CaptureSpec> captures;
};

inline GenerateSpec generate_spec_from_json(const nlohmann::json& j) {
  using namespace config_detail;
  allow_only(j, "generate spec", {"seed", "scene", "captures"});
  GenerateSpec g;
  get(j, "seed", g.seed, "generate spec");
  if (j.contains("scene")) g.scene = scene_spec_from_json(j.at("scene"));
  if (!j.contains("captures") || !j.at("captures").is_array() || j.at("captures").empty()) {
    throw ConfigError("generate spec: 'captures' must be a non-empty array");
  }
  for (std::size_t k = 0; k < j.at("captures").size(); ++k) {
    g.captures.push_back(capture_spec_from_json(j.at("captures")[k], "captures[" + std::to_string(k) + "]"));
  }
  return g;
}

// --- ModelConfig (checkpoint metadata) -----------------------------------------

inline nlohmann::json to_json(const ModelConfig& m) {
  return {{"arch",
           {{"deform", m.arch.deform_hidden},
            {"atlas", m.arch.atlas_hidden},
            {"offset", m.arch.offset_hidden},
            {"weight", m.arch.weight_hidden},
            {"tone", m.arch.tone_hidden}}},
          {"frequencies", m.frequencies},
          {"patch", m.patch},
          {"max_offset", m.max_offset},
          {"k_log", m.k_log},
          {"blur", m.blur},
          {"width", m.width},
          {"height", m.height},
          {"images", m.images},
          {"exposure_mode", to_string(m.exposure_mode)},
          {"log2_dt", m.log2_dt}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig m;
  try {
    const auto& a = j.at("arch");
    m.arch.deform_hidden = a.at("deform").get<std::vector<int>>();
    m.arch.atlas_hidden = a.at("atlas").get<std::vector<int>>();
    m.arch.offset_hidden = a.at("offset").get<std::vector<int>>();
    m.arch.weight_hidden = a.at("weight").get<std::vector<int>>();
    m.arch.tone_hidden = a.at("tone").get<std::vector<int>>();
    m.frequencies = j.at("frequencies").get<int>();
    m.patch = j.at("patch").get<int>();
    m.max_offset = j.at("max_offset").get<double>();
    m.k_log = j.at("k_log").get<double>();
    m.blur = j.at("blur").get<bool>();
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    m.images = j.at("images").get<int>();
    m.exposure_mode = exposure_mode_from_string(j.at("exposure_mode").get<std::string>());
    m.log2_dt = j.at("log2_dt").get<std::vector<double>>();
    m.validate();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return m;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

}  // namespace ncam
