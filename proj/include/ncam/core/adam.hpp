#pragma once

#include "ncam/core/mlp.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ncam {

enum class NonFinitePolicy { reject, skip };

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  NonFinitePolicy on_non_finite = NonFinitePolicy::reject;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(const std::string& what) : std::runtime_error(what) {}
};

template <class T>
struct AdamState {
  AdamConfig config;
  std::vector<ad::Matrix<T>> first_moment;
  std::vector<ad::Matrix<T>> second_moment;
  std::int64_t step_count = 0;
  std::int64_t skipped_steps = 0;

  static AdamState init(std::span<const ParamRef<T>> params, const AdamConfig& config) {
    AdamState s;
    s.config = config;
    for (const auto& p : params) {
      s.first_moment.push_back(ad::Matrix<T>::Zero(p.value->rows(), p.value->cols()));
      s.second_moment.push_back(ad::Matrix<T>::Zero(p.value->rows(), p.value->cols()));
    }
    return s;
  }
};

enum class StepOutcome { applied, skipped };

/// Bias-corrected Adam. Moments and step count advance only when the update
/// is applied; a skipped step leaves everything untouched except
/// `skipped_steps`.
template <class T>
StepOutcome adam_step(std::span<const ParamRef<T>> params, std::span<const ad::Matrix<T>> grads,
                      AdamState<T>& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& p = *params[k].value;
    if (grads[k].rows() != p.rows() || grads[k].cols() != p.cols() ||
        state.first_moment[k].rows() != p.rows() || state.first_moment[k].cols() != p.cols()) {
      throw std::invalid_argument("adam_step: shape mismatch for " + params[k].name);
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!grads[k].allFinite()) {
      if (state.config.on_non_finite == NonFinitePolicy::skip) {
        ++state.skipped_steps;
        return StepOutcome::skipped;
      }
      throw NonFiniteGradient("adam_step: non-finite gradient for " + params[k].name);
    }
  }

  const AdamConfig& c = state.config;
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const T b1 = static_cast<T>(c.beta1);
  const T b2 = static_cast<T>(c.beta2);
  const T corr1 = static_cast<T>(1.0 - std::pow(c.beta1, t));
  const T corr2 = static_cast<T>(1.0 - std::pow(c.beta2, t));
  const T lr = static_cast<T>(c.lr);
  const T eps = static_cast<T>(c.eps);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    const auto& g = grads[k];
    m = b1 * m + (T(1) - b1) * g;
    v = (b2 * v.array() + (T(1) - b2) * g.array().square()).matrix();
    auto& p = *params[k].value;
    p.array() -= lr * (m.array() / corr1) / ((v.array() / corr2).sqrt() + eps);
  }
  return StepOutcome::applied;
}

}  // namespace ncam
