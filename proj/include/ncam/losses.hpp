#pragma once

// Training losses. Every term is a mean over batch and channels; the
// recorded versions accept an explicit denominator so a batch split into
// shards still sums to the full-batch mean.

#include "ncam/camera_model.hpp"
#include "ncam/core/ops.hpp"
#include "ncam/model.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace ncam {

struct LossWeights {
  double color = 1.0;
  double flow = 100.0;
  double white_balance = 1.0;
  double gradient = 100.0;
  double c0 = 0.5;
  /// Iteration at which the flow weight reaches 0; unset means total / 2.
  std::optional<std::int64_t> flow_decay = std::nullopt;
};

struct LossTerms {
  double color = 0.0;
  double flow = 0.0;
  double white_balance = 0.0;
  double gradient = 0.0;
};

struct LossReport {
  LossTerms terms;
  double total = 0.0;
  double lambda_flow = 0.0;
  std::int64_t iteration = 0;
  std::int64_t flow_pairs = 0;
  std::int64_t skipped_flow_pairs = 0;
};

/// Linear decay of the flow weight from weights.flow at iteration 0 to 0 at
/// the decay horizon, 0 afterwards.
inline double flow_weight_schedule(std::int64_t iteration, std::int64_t total, const LossWeights& weights) {
  if (iteration < 0) throw std::invalid_argument("flow_weight_schedule: negative iteration");
  const std::int64_t horizon = weights.flow_decay.value_or(total / 2);
  if (iteration >= horizon) return 0.0;
  return weights.flow * (1.0 - static_cast<double>(iteration) / static_cast<double>(horizon));
}

inline double total_loss(const LossTerms& t, double lambda_flow, const LossWeights& w) {
  return w.color * t.color + lambda_flow * t.flow + w.white_balance * t.white_balance + w.gradient * t.gradient;
}

inline void check_non_negative(const LossWeights& w) {
  if (w.color < 0 || w.flow < 0 || w.white_balance < 0 || w.gradient < 0) {
    throw std::invalid_argument("LossWeights: weights must be non-negative");
  }
}

// --- recorded losses -------------------------------------------------------

/// sum (pred - target)^2 / denominator; denominator defaults to the element
/// count (plain mean).
template <class T>
ad::Var color_loss(ad::Tape<T>& tape, ad::Var pred, ad::Var target, std::optional<T> denominator = std::nullopt) {
  const ad::Var diff = ad::sub(tape, pred, target);
  const T denom = denominator.value_or(static_cast<T>(tape.value(pred).size()));
  return ad::sum_over(tape, ad::square(tape, diff), denom);
}

/// Mean over pairs (columns) of the squared Euclidean distance.
template <class T>
ad::Var flow_loss(ad::Tape<T>& tape, ad::Var q, ad::Var q_star, std::optional<T> denominator = std::nullopt) {
  const ad::Var diff = ad::sub(tape, q, q_star);
  const T denom = denominator.value_or(static_cast<T>(tape.value(q).cols()));
  return ad::sum_over(tape, ad::square(tape, diff), denom);
}

/// Mean over channels of (T_c(0) - c0)^2.
template <class T>
ad::Var white_balance_loss(ad::Tape<T>& tape, const ModelConfig& cfg, const ModelVars& vars, double c0) {
  const ad::Var zero = tape.constant(ad::Matrix<T>::Zero(3, 1));
  const ad::Var out = tone_map(tape, cfg, vars, zero);
  const ad::Var target = tape.constant(ad::Matrix<T>::Constant(3, 1, static_cast<T>(c0)));
  return color_loss(tape, out, target);
}

/// Mean of ReLU(-d) over all derivative samples.
template <class T>
ad::Var gradient_penalty(ad::Tape<T>& tape, ad::Var derivatives, std::optional<T> denominator = std::nullopt) {
  const T denom = denominator.value_or(static_cast<T>(tape.value(derivatives).size()));
  return ad::sum_over(tape, ad::relu(tape, ad::scale(tape, derivatives, T(-1))), denom);
}

/// Forward-difference slope (T_c(z + eps) - T_c(z)) / eps of every channel at
/// every probe. probes: 3 x K, row c feeds channel c. Probes are treated as
/// constants; gradients flow through both tone-mapper evaluations.
template <class T>
ad::Var tone_slopes(ad::Tape<T>& tape, const ModelConfig& cfg, const ModelVars& vars, const ad::Matrix<T>& probes,
                    double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("gradient_loss: eps must be > 0");
  if (probes.rows() != 3) throw std::invalid_argument("gradient_loss: probes must be 3 x K");
  const ad::Var lo = tape.constant(probes);
  const ad::Var hi = tape.constant((probes.array() + static_cast<T>(eps)).matrix());
  const ad::Var diff = ad::sub(tape, tone_map(tape, cfg, vars, hi), tone_map(tape, cfg, vars, lo));
  return ad::scale(tape, diff, static_cast<T>(1.0 / eps));
}

template <class T>
ad::Var gradient_loss(ad::Tape<T>& tape, const ModelConfig& cfg, const ModelVars& vars, const ad::Matrix<T>& probes,
                      double eps, std::optional<T> denominator = std::nullopt) {
  return gradient_penalty(tape, tone_slopes(tape, cfg, vars, probes, eps), denominator);
}

/// lambda_c Lc + lambda_f Lf + lambda_w Lw + lambda_g Lg on the tape. Invalid
/// term handles are skipped.
template <class T>
ad::Var weighted_total(ad::Tape<T>& tape, ad::Var color, ad::Var flow, ad::Var white_balance, ad::Var gradient,
                       double lambda_flow, const LossWeights& w) {
  std::vector<std::pair<ad::Var, double>> parts{
      {color, w.color}, {flow, lambda_flow}, {white_balance, w.white_balance}, {gradient, w.gradient}};
  ad::Var total;
  for (const auto& [v, lambda] : parts) {
    if (!v.valid()) continue;
    const ad::Var term = ad::scale(tape, v, static_cast<T>(lambda));
    total = total.valid() ? ad::add(tape, total, term) : term;
  }
  if (!total.valid()) total = tape.constant(ad::Matrix<T>::Zero(1, 1));
  return total;
}

}  // namespace ncam
