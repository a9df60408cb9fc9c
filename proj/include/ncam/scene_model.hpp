#pragma once

// Implicit scene: a deformation network maps (x, y, i) to an atlas
// coordinate q, and the atlas network maps the encoded q to base-2 log
// irradiance scaled by k_log. Linear irradiance is 2^l.

#include "ncam/core/encoding.hpp"
#include "ncam/core/ops.hpp"
#include "ncam/model.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace ncam {

struct AtlasCoord {
  double u = 0.0;
  double v = 0.0;
};

struct LogIrradiance {
  std::array<double, 3> l{};
};

// --- recorded (batched) ----------------------------------------------------

/// positions: 3 x M normalized (x, y, i). Returns 2 x M atlas coordinates.
template <class T>
ad::Var deform(ad::Tape<T>& tape, const ModelConfig& cfg, const ModelVars& vars, ad::Var positions) {
  return forward(tape, cfg.deform_spec(), vars.deform, positions);
}

/// q: 2 x M. Returns 3 x M base-2 log irradiance in (-k_log, k_log).
template <class T>
ad::Var atlas_log_irradiance(ad::Tape<T>& tape, const ModelConfig& cfg, const ModelVars& vars, ad::Var q) {
  const ad::Var enc = ad::positional_encoding(tape, q, cfg.frequencies);
  const ad::Var head = forward(tape, cfg.atlas_spec(), vars.atlas, enc);
  return ad::scale(tape, head, static_cast<T>(cfg.k_log));
}

template <class T>
ad::Var scene_log_irradiance(ad::Tape<T>& tape, const ModelConfig& cfg, const ModelVars& vars,
                             ad::Var positions) {
  return atlas_log_irradiance(tape, cfg, vars, deform(tape, cfg, vars, positions));
}

// --- gradient-free batch evaluation ----------------------------------------

/// Linear irradiance for a 3 x M batch of positions.
template <class T>
ad::Matrix<T> scene_irradiance(const ModelParams<T>& params, const ModelConfig& cfg,
                               const ad::Matrix<T>& positions) {
  ad::Tape<T> tape;
  const ModelVars vars = bind(tape, params, false);
  const ad::Var l = scene_log_irradiance(tape, cfg, vars, tape.constant(positions));
  return tape.value(ad::exp2(tape, l));
}

// --- single-sample convenience ---------------------------------------------

template <class T>
AtlasCoord deform(const ModelParams<T>& params, const ModelConfig& cfg, const PixelPosition& p) {
  p.validate();
  ad::Matrix<T> x(3, 1);
  x << static_cast<T>(p.x), static_cast<T>(p.y), static_cast<T>(p.i);
  const ad::Matrix<T> q = mlp_forward(params.deform, x);
  return {static_cast<double>(q(0, 0)), static_cast<double>(q(1, 0))};
}

template <class T>
LogIrradiance atlas_log_irradiance(const ModelParams<T>& params, const ModelConfig& cfg, const AtlasCoord& q) {
  if (!(std::abs(q.u) <= 1.0 && std::abs(q.v) <= 1.0)) {
    throw std::out_of_range("atlas_log_irradiance: atlas coordinate outside [-1, 1]^2");
  }
  ad::Tape<T> tape;
  const ModelVars vars = bind(tape, params, false);
  ad::Matrix<T> qm(2, 1);
  qm << static_cast<T>(q.u), static_cast<T>(q.v);
  const ad::Matrix<T>& l = tape.value(atlas_log_irradiance(tape, cfg, vars, tape.constant(qm)));
  return {{static_cast<double>(l(0, 0)), static_cast<double>(l(1, 0)), static_cast<double>(l(2, 0))}};
}

/// 2^l per channel; strictly positive.
inline std::array<double, 3> to_linear(const LogIrradiance& l) {
  return {std::exp2(l.l[0]), std::exp2(l.l[1]), std::exp2(l.l[2])};
}

template <class T>
std::array<double, 3> scene_irradiance(const ModelParams<T>& params, const ModelConfig& cfg,
                                       const PixelPosition& p) {
  p.validate();
  ad::Matrix<T> x(3, 1);
  x << static_cast<T>(p.x), static_cast<T>(p.y), static_cast<T>(p.i);
  const ad::Matrix<T> r = scene_irradiance(params, cfg, x);
  return {static_cast<double>(r(0, 0)), static_cast<double>(r(1, 0)), static_cast<double>(r(2, 0))};
}

}  // namespace ncam
