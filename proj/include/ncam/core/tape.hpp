#pragma once

// Reverse-mode differentiation over dense Eigen matrices.
//
// A Tape records a straight-line computation. Every recorded node owns its
// value and a closure that pushes the node's cotangent into its parents.
// Nodes are appended in evaluation order, so walking ids backwards is a valid
// reverse topological order.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ncam::ad {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

struct Var {
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t id = npos;

  bool valid() const { return id != npos; }
};

template <class T>
class Tape {
 public:
  using Mat = Matrix<T>;
  /// Receives the node's cotangent and its own forward value.
  using Backward = std::function<void(Tape&, const Mat& grad, const Mat& value)>;

  Tape() { nodes_.reserve(256); }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;

  /// Leaf that never receives a gradient.
  Var constant(Mat value) { return push(std::move(value), false, {}); }

  /// Leaf whose gradient is collected by backward().
  Var variable(Mat value) { return push(std::move(value), true, {}); }

  /// Records an interior node. The closure is dropped when no parent needs a
  /// gradient, so constant subgraphs cost nothing on the way back.
  Var record(Mat value, std::initializer_list<Var> parents, Backward fn) {
    bool needs = false;
    for (Var p : parents) {
      check(p);
      needs = needs || nodes_[p.id].requires_grad;
    }
    return push(std::move(value), needs, needs ? std::move(fn) : Backward{});
  }

  Var record(Mat value, const std::vector<Var>& parents, Backward fn) {
    bool needs = false;
    for (Var p : parents) {
      check(p);
      needs = needs || nodes_[p.id].requires_grad;
    }
    return push(std::move(value), needs, needs ? std::move(fn) : Backward{});
  }

  const Mat& value(Var v) const {
    check(v);
    return nodes_[v.id].value;
  }

  bool requires_grad(Var v) const {
    check(v);
    return nodes_[v.id].requires_grad;
  }

  /// Gradient of the last backward() seed w.r.t. leaf `v`; zeros when unreached.
  Mat gradient(Var v) const {
    check(v);
    const Node& n = nodes_[v.id];
    if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  template <class Derived>
  void accumulate(Var v, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Propagates `cotangent` (same shape as value(out)) back through the
  /// recording. Gradients from an earlier call are discarded first.
  void backward(Var out, const Mat& cotangent) {
    if (!out.valid() || out.id >= nodes_.size()) {
      throw std::logic_error("backward: variable was not recorded on this tape");
    }
    const Mat& v = nodes_[out.id].value;
    if (cotangent.rows() != v.rows() || cotangent.cols() != v.cols()) {
      throw std::invalid_argument("backward: cotangent shape " + shape(cotangent) +
                                  " does not match output shape " + shape(v));
    }
    for (Node& n : nodes_) n.grad.resize(0, 0);
    if (!nodes_[out.id].requires_grad) return;
    nodes_[out.id].grad = cotangent;
    for (std::size_t id = out.id + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.backward || n.grad.size() == 0) continue;
      n.backward(*this, n.grad, n.value);
      n.grad.resize(0, 0);  // interior cotangents are not kept
    }
  }

  /// Seeds a 1x1 output with cotangent 1.
  void backward(Var scalar_out) {
    check(scalar_out);
    if (nodes_[scalar_out.id].value.size() != 1) {
      throw std::invalid_argument("backward: implicit seed needs a 1x1 output, got " +
                                  shape(nodes_[scalar_out.id].value));
    }
    backward(scalar_out, Mat::Ones(1, 1));
  }

  std::size_t size() const { return nodes_.size(); }

  static std::string shape(const Mat& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var push(Mat value, bool requires_grad, Backward fn) {
    nodes_.push_back(Node{std::move(value), Mat{}, requires_grad, std::move(fn)});
    return Var{nodes_.size() - 1};
  }

  void check(Var v) const {
    if (!v.valid() || v.id >= nodes_.size()) {
      throw std::logic_error("tape: variable was not recorded on this tape");
    }
  }

  std::vector<Node> nodes_;
};

}  // namespace ncam::ad
