#pragma once

#include "ncam/core/ops.hpp"
#include "ncam/core/tape.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ncam {

enum class Head { tanh, softmax, identity };

inline const char* to_string(Head h) {
  switch (h) {
    case Head::tanh: return "tanh";
    case Head::softmax: return "softmax";
    case Head::identity: return "identity";
  }
  return "?";
}

/// Dense ReLU network. `widths` lists every layer width including input and
/// output, so {3, 64, 2} is two affine layers.
struct MlpSpec {
  std::vector<int> widths;
  Head head = Head::tanh;

  std::size_t layers() const { return widths.empty() ? 0 : widths.size() - 1; }
  int inputs() const { return widths.front(); }
  int outputs() const { return widths.back(); }

  void validate() const {
    if (widths.size() < 2) throw std::invalid_argument("MlpSpec: need at least input and output widths");
    for (int w : widths) {
      if (w < 1) throw std::invalid_argument("MlpSpec: widths must be >= 1");
    }
    if (head == Head::softmax && outputs() < 1) throw std::invalid_argument("MlpSpec: empty softmax head");
  }

  bool operator==(const MlpSpec&) const = default;
};

/// Named reference to one trainable tensor, used for optimizer state,
/// checkpoints and gradient checks.
template <class T>
struct ParamRef {
  std::string name;
  ad::Matrix<T>* value;
};

template <class T>
struct Mlp {
  MlpSpec spec;
  std::vector<ad::Matrix<T>> weights;  // weights[l] is widths[l+1] x widths[l]
  std::vector<ad::Matrix<T>> biases;   // biases[l] is widths[l+1] x 1

  static Mlp zeros(const MlpSpec& spec) {
    spec.validate();
    Mlp m;
    m.spec = spec;
    for (std::size_t l = 0; l < spec.layers(); ++l) {
      m.weights.push_back(ad::Matrix<T>::Zero(spec.widths[l + 1], spec.widths[l]));
      m.biases.push_back(ad::Matrix<T>::Zero(spec.widths[l + 1], 1));
    }
    return m;
  }

  /// Uniform fan-in init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and
  /// biases. With `zero_last`, the output layer starts at exactly zero.
  template <class Rng>
  static Mlp random(const MlpSpec& spec, Rng& rng, bool zero_last = false) {
    Mlp m = zeros(spec);
    for (std::size_t l = 0; l < spec.layers(); ++l) {
      if (zero_last && l + 1 == spec.layers()) break;
      const double bound = 1.0 / std::sqrt(static_cast<double>(spec.widths[l]));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (Eigen::Index k = 0; k < m.weights[l].size(); ++k) m.weights[l].data()[k] = static_cast<T>(dist(rng));
      for (Eigen::Index k = 0; k < m.biases[l].size(); ++k) m.biases[l].data()[k] = static_cast<T>(dist(rng));
    }
    return m;
  }

  template <class U>
  Mlp<U> cast() const {
    Mlp<U> out;
    out.spec = spec;
    for (const auto& w : weights) out.weights.push_back(w.template cast<U>());
    for (const auto& b : biases) out.biases.push_back(b.template cast<U>());
    return out;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.push_back({prefix + ".w" + std::to_string(l), &weights[l]});
      out.push_back({prefix + ".b" + std::to_string(l), &biases[l]});
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }
};

/// Tape handles for one network's parameters.
struct MlpVars {
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;
};

template <class T>
MlpVars bind(ad::Tape<T>& tape, const Mlp<T>& mlp, bool trainable) {
  MlpVars vars;
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    vars.weights.push_back(trainable ? tape.variable(mlp.weights[l]) : tape.constant(mlp.weights[l]));
    vars.biases.push_back(trainable ? tape.variable(mlp.biases[l]) : tape.constant(mlp.biases[l]));
  }
  return vars;
}

/// Records the network on `tape`: affine layers, ReLU between them, head
/// activation on the last.
template <class T>
ad::Var forward(ad::Tape<T>& tape, const MlpSpec& spec, const MlpVars& vars, ad::Var x) {
  if (tape.value(x).rows() != spec.inputs()) {
    throw std::invalid_argument("mlp_forward: input has " + std::to_string(tape.value(x).rows()) +
                                " rows, network expects " + std::to_string(spec.inputs()));
  }
  ad::Var h = x;
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    h = ad::affine(tape, vars.weights[l], vars.biases[l], h);
    if (l + 1 < spec.layers()) h = ad::relu(tape, h);
  }
  switch (spec.head) {
    case Head::tanh: return ad::tanh(tape, h);
    case Head::softmax: return ad::softmax_cols(tape, h);
    case Head::identity: return h;
  }
  return h;
}

/// Gradient-free evaluation on a batch (one sample per column).
template <class T>
ad::Matrix<T> mlp_forward(const Mlp<T>& mlp, const ad::Matrix<T>& x) {
  ad::Tape<T> tape;
  const MlpVars vars = bind(tape, mlp, false);
  return tape.value(forward(tape, mlp.spec, vars, tape.constant(x)));
}

}  // namespace ncam
