#pragma once

#include "ncam/core/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ncam {

/// A scalar objective over a parameter list, with its reverse-mode gradient.
template <class T>
struct Objective {
  std::function<T()> value;
  std::function<std::vector<ad::Matrix<T>>()> gradient;  // one matrix per parameter
};

struct GradCheckOptions {
  double step = 1e-6;
  /// Relative error is |a - b| / max(|a|, |b|, floor).
  double floor = 1e-6;
  /// Entries checked per call; 0 checks every entry.
  std::size_t samples = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst_param;
  Eigen::Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

inline double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// Central differences (f(p+h) - f(p-h)) / 2h per checked entry, compared
/// against the objective's analytic gradient. Parameters are restored.
template <class T>
GradCheckReport finite_diff_check(const Objective<T>& objective, std::span<const ParamRef<T>> params,
                                  const GradCheckOptions& options = {}) {
  if (!(options.step > 0.0)) throw std::invalid_argument("finite_diff_check: step must be > 0");
  const std::vector<ad::Matrix<T>> analytic = objective.gradient();
  if (analytic.size() != params.size()) {
    throw std::invalid_argument("finite_diff_check: gradient count does not match parameter count");
  }

  struct Slot {
    std::size_t param;
    Eigen::Index index;
  };
  std::vector<Slot> slots;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (analytic[k].size() != params[k].value->size()) {
      throw std::invalid_argument("finite_diff_check: gradient shape mismatch for " + params[k].name);
    }
    for (Eigen::Index i = 0; i < params[k].value->size(); ++i) slots.push_back({k, i});
  }
  if (options.samples > 0 && options.samples < slots.size()) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(slots.begin(), slots.end(), rng);
    slots.resize(options.samples);
  }

  GradCheckReport report;
  const T h = static_cast<T>(options.step);
  for (const Slot& s : slots) {
    T& entry = params[s.param].value->data()[s.index];
    const T saved = entry;
    entry = saved + h;
    const double up = static_cast<double>(objective.value());
    entry = saved - h;
    const double down = static_cast<double>(objective.value());
    entry = saved;
    const double numeric = (up - down) / (2.0 * options.step);
    const double a = static_cast<double>(analytic[s.param].data()[s.index]);
    const double err = relative_error(a, numeric, options.floor);
    ++report.checked;
    if (err > report.max_rel_error || report.worst_index < 0) {
      report.max_rel_error = std::max(report.max_rel_error, err);
      report.worst_param = params[s.param].name;
      report.worst_index = s.index;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
  }
  return report;
}

}  // namespace ncam
