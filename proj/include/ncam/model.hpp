#pragma once

// Model configuration, coordinate conventions and the learnable state of the
// five networks (deformation, atlas, offset, weight, tone mapper).

#include "ncam/core/mlp.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ncam {

enum class ExposureMode { known, learned };

inline const char* to_string(ExposureMode m) { return m == ExposureMode::known ? "known" : "learned"; }

inline ExposureMode exposure_mode_from_string(const std::string& s) {
  if (s == "known") return ExposureMode::known;
  if (s == "learned") return ExposureMode::learned;
  throw std::invalid_argument("unknown exposure mode '" + s + "' (expected known|learned)");
}

/// Hidden-layer widths of each network; input/output widths follow from the
/// model configuration.
struct Architecture {
  std::vector<int> deform_hidden{256, 256, 256};
  std::vector<int> atlas_hidden{512, 512, 512};
  std::vector<int> offset_hidden{64, 64, 64};
  std::vector<int> weight_hidden{64, 64, 64};
  std::vector<int> tone_hidden{128};

  bool operator==(const Architecture&) const = default;
};

struct ModelConfig {
  Architecture arch;
  int frequencies = 7;
  int patch = 3;             // n, odd
  double max_offset = 5.0;   // s, in pixels
  double k_log = 8.0;        // atlas output scale, base-2 log irradiance
  bool blur = true;          // false bypasses the blur generator (identity PSF)
  int width = 1;
  int height = 1;
  int images = 1;
  ExposureMode exposure_mode = ExposureMode::known;
  std::vector<double> log2_dt;  // per image, used in known mode

  void validate() const {
    if (frequencies < 1) throw std::invalid_argument("ModelConfig: frequencies must be >= 1");
    if (patch < 1 || patch % 2 == 0) throw std::invalid_argument("ModelConfig: patch size n must be odd and >= 1");
    if (!(max_offset >= 0.0)) throw std::invalid_argument("ModelConfig: max_offset must be >= 0");
    if (!(k_log > 0.0)) throw std::invalid_argument("ModelConfig: k_log must be > 0");
    if (width < 1 || height < 1 || images < 1) throw std::invalid_argument("ModelConfig: image dims must be >= 1");
    if (exposure_mode == ExposureMode::known && log2_dt.size() != static_cast<std::size_t>(images)) {
      throw std::invalid_argument("ModelConfig: known exposure mode needs one log2_dt per image");
    }
    for (double d : log2_dt) {
      if (!std::isfinite(d)) throw std::invalid_argument("ModelConfig: non-finite log2_dt");
    }
  }

  int patch_area() const { return patch * patch; }

  MlpSpec deform_spec() const { return make({3}, arch.deform_hidden, 2, Head::tanh); }
  MlpSpec atlas_spec() const { return make({4 * frequencies}, arch.atlas_hidden, 3, Head::tanh); }
  MlpSpec offset_spec() const { return make({3}, arch.offset_hidden, 2 * patch_area(), Head::tanh); }
  MlpSpec weight_spec() const { return make({3}, arch.weight_hidden, patch_area(), Head::softmax); }
  MlpSpec tone_spec() const { return make({1}, arch.tone_hidden, 1, Head::tanh); }

 private:
  static MlpSpec make(std::vector<int> in, const std::vector<int>& hidden, int out, Head head) {
    MlpSpec s;
    s.widths = std::move(in);
    s.widths.insert(s.widths.end(), hidden.begin(), hidden.end());
    s.widths.push_back(out);
    s.head = head;
    return s;
  }
};

// --- coordinates -----------------------------------------------------------

/// Normalized sample coordinate: x, y in [-1, 1] across the image, i in
/// [-1, 1] across the stack (fractional values allowed).
struct PixelPosition {
  double x = 0.0;
  double y = 0.0;
  double i = 0.0;

  void validate() const {
    auto in_range = [](double v) { return std::isfinite(v) && v >= -1.0 && v <= 1.0; };
    if (!in_range(x) || !in_range(y) || !in_range(i)) {
      throw std::out_of_range("PixelPosition: components must lie in [-1, 1]");
    }
  }
};

/// Maps 0..count-1 affinely onto [-1, 1]; a single element maps to 0.
inline double normalize_index(double k, int count) {
  if (count <= 1) return 0.0;
  return 2.0 * k / static_cast<double>(count - 1) - 1.0;
}

/// Width of one pixel in normalized units.
inline double pixel_pitch(int count) { return count <= 1 ? 0.0 : 2.0 / static_cast<double>(count - 1); }

inline PixelPosition pixel_position(double px, double py, double image, const ModelConfig& cfg) {
  return {normalize_index(px, cfg.width), normalize_index(py, cfg.height), normalize_index(image, cfg.images)};
}

// --- parameters ------------------------------------------------------------

template <class T>
struct ModelParams {
  Mlp<T> deform;
  Mlp<T> atlas;
  Mlp<T> offset;
  Mlp<T> weight;
  std::array<Mlp<T>, 3> tone;
  ad::Matrix<T> exposure;  // images x 1 learned log2 exposure latents; empty in known mode

  /// Uniform fan-in init everywhere, except that the offset and weight heads
  /// start at zero (zero offsets, uniform PSF).
  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    ModelParams p;
    p.deform = Mlp<T>::random(cfg.deform_spec(), rng);
    p.atlas = Mlp<T>::random(cfg.atlas_spec(), rng);
    p.offset = Mlp<T>::random(cfg.offset_spec(), rng, true);
    p.weight = Mlp<T>::random(cfg.weight_spec(), rng, true);
    for (auto& t : p.tone) t = Mlp<T>::random(cfg.tone_spec(), rng);
    if (cfg.exposure_mode == ExposureMode::learned) p.exposure = ad::Matrix<T>::Zero(cfg.images, 1);
    return p;
  }

  /// All-zero parameters (every network outputs its head's value at 0).
  static ModelParams zeros(const ModelConfig& cfg) {
    cfg.validate();
    ModelParams p;
    p.deform = Mlp<T>::zeros(cfg.deform_spec());
    p.atlas = Mlp<T>::zeros(cfg.atlas_spec());
    p.offset = Mlp<T>::zeros(cfg.offset_spec());
    p.weight = Mlp<T>::zeros(cfg.weight_spec());
    for (auto& t : p.tone) t = Mlp<T>::zeros(cfg.tone_spec());
    if (cfg.exposure_mode == ExposureMode::learned) p.exposure = ad::Matrix<T>::Zero(cfg.images, 1);
    return p;
  }

  /// Every tensor in a fixed order: deform, atlas, offset, weight, tone
  /// r/g/b, exposure.
  std::vector<ParamRef<T>> collect() {
    std::vector<ParamRef<T>> out;
    deform.collect("deform", out);
    atlas.collect("atlas", out);
    offset.collect("offset", out);
    weight.collect("weight", out);
    tone[0].collect("tone_r", out);
    tone[1].collect("tone_g", out);
    tone[2].collect("tone_b", out);
    if (exposure.size() > 0) out.push_back({"exposure", &exposure});
    return out;
  }

  template <class U>
  ModelParams<U> cast() const {
    ModelParams<U> p;
    p.deform = deform.template cast<U>();
    p.atlas = atlas.template cast<U>();
    p.offset = offset.template cast<U>();
    p.weight = weight.template cast<U>();
    for (int c = 0; c < 3; ++c) p.tone[c] = tone[c].template cast<U>();
    p.exposure = exposure.template cast<U>();
    return p;
  }
};

// --- tape binding ----------------------------------------------------------

struct ModelVars {
  MlpVars deform;
  MlpVars atlas;
  MlpVars offset;
  MlpVars weight;
  std::array<MlpVars, 3> tone;
  ad::Var exposure;  // invalid in known mode
};

template <class T>
ModelVars bind(ad::Tape<T>& tape, const ModelParams<T>& p, bool trainable) {
  ModelVars v;
  v.deform = bind(tape, p.deform, trainable);
  v.atlas = bind(tape, p.atlas, trainable);
  v.offset = bind(tape, p.offset, trainable);
  v.weight = bind(tape, p.weight, trainable);
  for (int c = 0; c < 3; ++c) v.tone[c] = bind(tape, p.tone[c], trainable);
  if (p.exposure.size() > 0) v.exposure = trainable ? tape.variable(p.exposure) : tape.constant(p.exposure);
  return v;
}

/// Tape handles in the same order as ModelParams::collect().
inline std::vector<ad::Var> ordered(const ModelVars& v) {
  std::vector<ad::Var> out;
  auto add = [&out](const MlpVars& m) {
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
      out.push_back(m.weights[l]);
      out.push_back(m.biases[l]);
    }
  };
  add(v.deform);
  add(v.atlas);
  add(v.offset);
  add(v.weight);
  for (const auto& t : v.tone) add(t);
  if (v.exposure.valid()) out.push_back(v.exposure);
  return out;
}

/// Gradients after tape.backward(), ordered like ModelParams::collect().
template <class T>
std::vector<ad::Matrix<T>> gradients(const ad::Tape<T>& tape, const ModelVars& v) {
  std::vector<ad::Matrix<T>> out;
  for (ad::Var var : ordered(v)) out.push_back(tape.gradient(var));
  return out;
}

}  // namespace ncam
