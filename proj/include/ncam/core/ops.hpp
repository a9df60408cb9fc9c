#pragma once

// Differentiable primitives recorded on a Tape. Matrices are laid out with
// one sample per column.

#include "ncam/core/tape.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace ncam::ad {

namespace detail {

template <class T>
void require_same_shape(const Tape<T>& tape, Var a, Var b, const char* op) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + Tape<T>::shape(va) +
                                " vs " + Tape<T>::shape(vb));
  }
}

}  // namespace detail

/// W*x + b, with b broadcast over columns.
template <class T>
Var affine(Tape<T>& tape, Var w, Var b, Var x) {
  const auto& W = tape.value(w);
  const auto& B = tape.value(b);
  const auto& X = tape.value(x);
  if (W.cols() != X.rows() || B.rows() != W.rows() || B.cols() != 1) {
    throw std::invalid_argument("affine: shape mismatch W " + Tape<T>::shape(W) + ", b " +
                                Tape<T>::shape(B) + ", x " + Tape<T>::shape(X));
  }
  Matrix<T> out(W.rows(), X.cols());
  out.noalias() = W * X;
  out.colwise() += B.col(0);
  return tape.record(std::move(out), {w, b, x}, [w, b, x](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
    if (t.requires_grad(w)) {
      Matrix<T> dw(g.rows(), t.value(x).rows());
      dw.noalias() = g * t.value(x).transpose();
      t.accumulate(w, dw);
    }
    if (t.requires_grad(b)) t.accumulate(b, g.rowwise().sum());
    if (t.requires_grad(x)) {
      Matrix<T> dx(t.value(w).cols(), g.cols());
      dx.noalias() = t.value(w).transpose() * g;
      t.accumulate(x, dx);
    }
  });
}

template <class T>
Var relu(Tape<T>& tape, Var x) {
  Matrix<T> out = tape.value(x).cwiseMax(T(0));
  return tape.record(std::move(out), {x}, [x](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
    t.accumulate(x, (t.value(x).array() > T(0)).select(g, T(0)));
  });
}

template <class T>
Var tanh(Tape<T>& tape, Var x) {
  Matrix<T> out = tape.value(x).array().tanh().matrix();
  return tape.record(std::move(out), {x}, [x](Tape<T>& t, const Matrix<T>& g, const Matrix<T>& y) {
    t.accumulate(x, (g.array() * (T(1) - y.array().square())).matrix());
  });
}

/// Column-wise softmax (each column is one simplex).
template <class T>
Var softmax_cols(Tape<T>& tape, Var x) {
  const auto& X = tape.value(x);
  Matrix<T> out(X.rows(), X.cols());
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    const T m = X.col(c).maxCoeff();
    out.col(c) = (X.col(c).array() - m).exp().matrix();
    out.col(c) /= out.col(c).sum();
  }
  return tape.record(std::move(out), {x}, [x](Tape<T>& t, const Matrix<T>& g, const Matrix<T>& s) {
    Matrix<T> dx(s.rows(), s.cols());
    for (Eigen::Index c = 0; c < s.cols(); ++c) {
      const T dot = s.col(c).dot(g.col(c));
      dx.col(c) = (s.col(c).array() * (g.col(c).array() - dot)).matrix();
    }
    t.accumulate(x, dx);
  });
}

template <class T>
Var scale(Tape<T>& tape, Var x, T factor) {
  Matrix<T> out = tape.value(x) * factor;
  return tape.record(std::move(out), {x}, [x, factor](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
    t.accumulate(x, g * factor);
  });
}

/// factor*x + offset elementwise.
template <class T>
Var scale_shift(Tape<T>& tape, Var x, T factor, T offset) {
  Matrix<T> out = ((tape.value(x).array() * factor) + offset).matrix();
  return tape.record(std::move(out), {x}, [x, factor](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
    t.accumulate(x, g * factor);
  });
}

template <class T>
Var add(Tape<T>& tape, Var a, Var b) {
  detail::require_same_shape(tape, a, b, "add");
  Matrix<T> out = tape.value(a) + tape.value(b);
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

template <class T>
Var sub(Tape<T>& tape, Var a, Var b) {
  detail::require_same_shape(tape, a, b, "sub");
  Matrix<T> out = tape.value(a) - tape.value(b);
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

/// Elementwise product.
template <class T>
Var mul(Tape<T>& tape, Var a, Var b) {
  detail::require_same_shape(tape, a, b, "mul");
  Matrix<T> out = tape.value(a).cwiseProduct(tape.value(b));
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
    if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
    if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
  });
}

/// x (R x B) plus a 1 x B row broadcast down every row.
template <class T>
Var add_row(Tape<T>& tape, Var x, Var row) {
  const auto& X = tape.value(x);
  const auto& r = tape.value(row);
  if (r.rows() != 1 || r.cols() != X.cols()) {
    throw std::invalid_argument("add_row: expected 1x" + std::to_string(X.cols()) + " row, got " +
                                Tape<T>::shape(r));
  }
  Matrix<T> out = X;
  out.rowwise() += r.row(0);
  return tape.record(std::move(out), {x, row}, [x, row](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
    t.accumulate(x, g);
    t.accumulate(row, g.colwise().sum());
  });
}

/// 2^x elementwise.
template <class T>
Var exp2(Tape<T>& tape, Var x) {
  Matrix<T> out = tape.value(x).unaryExpr([](T v) { return std::exp2(v); });
  return tape.record(std::move(out), {x}, [x](Tape<T>& t, const Matrix<T>& g, const Matrix<T>& y) {
    t.accumulate(x, (g.array() * y.array() * T(std::numbers::ln2)).matrix());
  });
}

/// log2(x) elementwise; x must be positive.
template <class T>
Var log2(Tape<T>& tape, Var x) {
  const auto& X = tape.value(x);
  if ((X.array() <= T(0)).any()) throw std::domain_error("log2: non-positive input");
  Matrix<T> out = X.unaryExpr([](T v) { return std::log2(v); });
  return tape.record(std::move(out), {x}, [x](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
    t.accumulate(x, (g.array() / (t.value(x).array() * T(std::numbers::ln2))).matrix());
  });
}

template <class T>
Var square(Tape<T>& tape, Var x) {
  Matrix<T> out = tape.value(x).array().square().matrix();
  return tape.record(std::move(out), {x}, [x](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
    t.accumulate(x, (g.array() * T(2) * t.value(x).array()).matrix());
  });
}

/// Clamp to [lo, hi]; the gradient is passed through only strictly inside.
template <class T>
Var clamp(Tape<T>& tape, Var x, T lo, T hi) {
  Matrix<T> out = tape.value(x).cwiseMax(lo).cwiseMin(hi);
  return tape.record(std::move(out), {x}, [x, lo, hi](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
    const auto& v = t.value(x).array();
    t.accumulate(x, ((v >= lo) && (v <= hi)).select(g, T(0)));
  });
}

/// Sum of all entries divided by `denominator` (1x1 result).
template <class T>
Var sum_over(Tape<T>& tape, Var x, T denominator) {
  Matrix<T> out(1, 1);
  out(0, 0) = tape.value(x).sum() / denominator;
  return tape.record(std::move(out), {x}, [x, denominator](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
    const auto& v = t.value(x);
    t.accumulate(x, Matrix<T>::Constant(v.rows(), v.cols(), g(0, 0) / denominator));
  });
}

template <class T>
Var mean(Tape<T>& tape, Var x) {
  return sum_over(tape, x, static_cast<T>(tape.value(x).size()));
}

/// Rows [first, first+count) of x.
template <class T>
Var rows(Tape<T>& tape, Var x, Eigen::Index first, Eigen::Index count) {
  const auto& X = tape.value(x);
  if (first < 0 || count < 0 || first + count > X.rows()) {
    throw std::out_of_range("rows: slice out of range");
  }
  Matrix<T> out = X.middleRows(first, count);
  return tape.record(std::move(out), {x}, [x, first, count](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
    const auto& v = t.value(x);
    Matrix<T> dx = Matrix<T>::Zero(v.rows(), v.cols());
    dx.middleRows(first, count) = g;
    t.accumulate(x, dx);
  });
}

/// Stacks blocks with equal column counts on top of each other.
template <class T>
Var vstack(Tape<T>& tape, const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("vstack: no inputs");
  const Eigen::Index cols = tape.value(parts[0]).cols();
  Eigen::Index total = 0;
  for (Var p : parts) {
    if (tape.value(p).cols() != cols) throw std::invalid_argument("vstack: column count mismatch");
    total += tape.value(p).rows();
  }
  Matrix<T> out(total, cols);
  Eigen::Index r = 0;
  for (Var p : parts) {
    out.middleRows(r, tape.value(p).rows()) = tape.value(p);
    r += tape.value(p).rows();
  }
  return tape.record(std::move(out), parts, [parts](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
    Eigen::Index r0 = 0;
    for (Var p : parts) {
      const Eigen::Index n = t.value(p).rows();
      if (t.requires_grad(p)) t.accumulate(p, g.middleRows(r0, n));
      r0 += n;
    }
  });
}

/// Concatenates blocks with equal row counts side by side.
template <class T>
Var hstack(Tape<T>& tape, const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("hstack: no inputs");
  const Eigen::Index nrows = tape.value(parts[0]).rows();
  Eigen::Index total = 0;
  for (Var p : parts) {
    if (tape.value(p).rows() != nrows) throw std::invalid_argument("hstack: row count mismatch");
    total += tape.value(p).cols();
  }
  Matrix<T> out(nrows, total);
  Eigen::Index c = 0;
  for (Var p : parts) {
    out.middleCols(c, tape.value(p).cols()) = tape.value(p);
    c += tape.value(p).cols();
  }
  return tape.record(std::move(out), parts, [parts](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
    Eigen::Index c0 = 0;
    for (Var p : parts) {
      const Eigen::Index n = t.value(p).cols();
      if (t.requires_grad(p)) t.accumulate(p, g.middleCols(c0, n));
      c0 += n;
    }
  });
}

/// Picks entries of a column vector by index into a 1 x idx.size() row.
template <class T>
Var gather(Tape<T>& tape, Var table, std::vector<int> idx) {
  const auto& tab = tape.value(table);
  if (tab.cols() != 1) throw std::invalid_argument("gather: table must be a column vector");
  Matrix<T> out(1, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] < 0 || idx[k] >= tab.rows()) throw std::out_of_range("gather: index out of range");
    out(0, static_cast<Eigen::Index>(k)) = tab(idx[k], 0);
  }
  return tape.record(std::move(out), {table}, [table, idx = std::move(idx)](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
    Matrix<T> d = Matrix<T>::Zero(t.value(table).rows(), 1);
    for (std::size_t k = 0; k < idx.size(); ++k) d(idx[k], 0) += g(0, static_cast<Eigen::Index>(k));
    t.accumulate(table, d);
  });
}

/// Same values as x, but the gradient stops here.
template <class T>
Var detach(Tape<T>& tape, Var x) {
  return tape.constant(tape.value(x));
}

}  // namespace ncam::ad
