#pragma once

#include <cstddef>
#include <utility>

#include "bro/core/linalg.hpp"
#include "bro/core/ops.hpp"
#include "bro/core/tape.hpp"
#include "bro/core/tensor.hpp"
#include "bro/ortho/reflector.hpp"

namespace bro {

/// Unconstrained m x n parameter of a dense block reflector. Requires n < m:
/// a square full-rank parameter collapses to -I.
class BroParam {
 public:
  explicit BroParam(Tensor v) : v_(std::move(v)) {
    if (v_.rank() != 2) throw ShapeError("BroParam: expected an m x n matrix, got " + shape_string(v_.shape()));
    if (v_.dim(1) == 0) throw ContractError("BroParam: rank must be positive");
    if (v_.dim(1) >= v_.dim(0))
      throw ContractError("BroParam: need n < m (got m=" + std::to_string(v_.dim(0)) +
                          ", n=" + std::to_string(v_.dim(1)) + "); a square parameter degenerates to -I");
  }

  const Tensor& v() const noexcept { return v_; }
  std::size_t m() const { return v_.dim(0); }
  std::size_t n() const { return v_.dim(1); }

 private:
  Tensor v_;
};

/// W = I - 2 V (V^T V)^{-1} V^T without the n < m guard. Exposed for the
/// degenerate-case checks; layers go through bro_orthogonalize.
inline Tensor block_reflector(const Tensor& v) { return to_tensor(materialize(factor_reflector(to_mat(v)))); }

/// Symmetric orthogonal m x m matrix with n eigenvalues -1 and m - n eigenvalues +1.
inline Tensor bro_orthogonalize(const BroParam& p) { return block_reflector(p.v()); }

namespace ops {

/// Differentiable W(V) for a dense block reflector; V is m x n, n <= m.
inline Var bro_weight(Tape& t, Var v) {
  auto factor = factor_reflector(to_mat(t.value(v)));
  Tensor w = to_tensor(materialize(factor));
  return t.record(std::move(w), {v}, [factor = std::move(factor)](const Tensor& g, GradSink& s) {
    s.add(0, to_tensor(reflector_vjp(factor, to_mat(g))));
  });
}

/// Leading rows x cols block of a matrix.
inline Var truncate(Tape& t, Var w, std::size_t rows, std::size_t cols) {
  const Tensor& wv = t.value(w);
  if (rows > wv.dim(0) || cols > wv.dim(1)) throw ShapeError("truncate: block larger than matrix");
  Tensor out({rows, cols});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out(i, j) = wv(i, j);
  const Shape full = wv.shape();
  return t.record(std::move(out), {w}, [full, rows, cols](const Tensor& g, GradSink& s) {
    Tensor gw(full);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) gw(i, j) = g(i, j);
    s.add(0, std::move(gw));
  });
}

/// Batched linear map: x (b x in) -> x W^T (b x out).
inline Var linear(Tape& t, Var x, Var w) {
  const Tensor& xv = t.value(x);
  const Tensor& wv = t.value(w);
  return t.record(matmul_t(xv, false, wv, true), {x, w}, [&xv, &wv](const Tensor& g, GradSink& s) {
    if (s.needs(0)) s.add(0, matmul(g, wv));
    if (s.needs(1)) s.add(1, matmul_t(g, true, xv, false));
  });
}

}  // namespace ops
}  // namespace bro
