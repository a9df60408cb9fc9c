#pragma once

// Sinusoidal positional encoding.
//
// Layout for an input with components v_0..v_{d-1} and L frequencies:
//
//   [ sin(2^0 pi v_0), cos(2^0 pi v_0), sin(2^1 pi v_0), cos(2^1 pi v_0), ...,
//     sin(2^{L-1} pi v_0), cos(2^{L-1} pi v_0),
//     sin(2^0 pi v_1), ... ]
//
// i.e. row (j * 2L + 2k) holds sin(2^k pi v_j) and the next row the cosine.
// No identity term is appended. Checkpoints depend on this order.

#include "ncam/core/tape.hpp"

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace ncam {

inline void check_frequency_count(int frequencies) {
  if (frequencies < 1) throw std::invalid_argument("positional_encoding: frequency count must be >= 1");
}

/// Encodes every column of `x` (dim x B) into a (2 * L * dim) x B matrix.
template <class T>
ad::Matrix<T> positional_encoding(const ad::Matrix<T>& x, int frequencies) {
  check_frequency_count(frequencies);
  if (!x.allFinite()) throw std::domain_error("positional_encoding: non-finite input");
  const Eigen::Index dim = x.rows();
  const Eigen::Index per = 2 * frequencies;
  ad::Matrix<T> out(dim * per, x.cols());
  for (Eigen::Index j = 0; j < dim; ++j) {
    T freq = std::numbers::pi_v<T>;
    for (int k = 0; k < frequencies; ++k) {
      const auto arg = (x.row(j).array() * freq).eval();
      out.row(j * per + 2 * k) = arg.sin().matrix();
      out.row(j * per + 2 * k + 1) = arg.cos().matrix();
      freq *= T(2);
    }
  }
  return out;
}

template <class T>
std::vector<T> positional_encoding(std::span<const T> v, int frequencies) {
  ad::Matrix<T> x(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t j = 0; j < v.size(); ++j) x(static_cast<Eigen::Index>(j), 0) = v[j];
  const ad::Matrix<T> enc = positional_encoding(x, frequencies);
  return std::vector<T>(enc.data(), enc.data() + enc.size());
}

namespace ad {

template <class T>
Var positional_encoding(Tape<T>& tape, Var x, int frequencies) {
  Matrix<T> out = ncam::positional_encoding(tape.value(x), frequencies);
  return tape.record(std::move(out), {x}, [x, frequencies](Tape<T>& t, const Matrix<T>& g, const Matrix<T>& y) {
    // d sin(a v)/dv = a cos(a v), d cos(a v)/dv = -a sin(a v)
    const Eigen::Index dim = t.value(x).rows();
    const Eigen::Index per = 2 * frequencies;
    Matrix<T> dx = Matrix<T>::Zero(dim, g.cols());
    for (Eigen::Index j = 0; j < dim; ++j) {
      T freq = std::numbers::pi_v<T>;
      for (int k = 0; k < frequencies; ++k) {
        const Eigen::Index s = j * per + 2 * k;
        dx.row(j) += (freq * (g.row(s).array() * y.row(s + 1).array() -
                              g.row(s + 1).array() * y.row(s).array()))
                         .matrix();
        freq *= T(2);
      }
    }
    t.accumulate(x, dx);
  });
}

}  // namespace ad
}  // namespace ncam
