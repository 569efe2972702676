#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "bro/core/errors.hpp"
#include "bro/core/linalg.hpp"
#include "bro/core/tensor.hpp"

namespace bro {

template <class T>
struct LotIterate {
  Mat<T> w;                        // V Z_final / sqrt(normalization)
  std::vector<double> condition;   // cond(W_i^H W_i) after each iteration (empty if not traced)
  double normalization = 1.0;      // ||V^H V||_F used to pre-scale Y_0
};

/// Coupled Newton iteration for (V^H V)^{-1/2}:
///   Y_0 = V^H V / ||V^H V||_F, Z_0 = I,
///   T_i = (3I - Z_i Y_i) / 2, Y_{i+1} = Y_i T_i, Z_{i+1} = T_i Z_i.
/// Nothing guarantees convergence; the condition trace is the diagnostic.
template <class T>
LotIterate<T> lot_newton(const Mat<T>& v, std::size_t iters, bool trace = true) {
  require(iters >= 1, "lot: iters must be >= 1");
  const std::size_t m = v.cols();
  Mat<T> y = matmul_adj(v, v);
  const double norm = frobenius(y);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw DivergedError(0, "lot");
  y *= T{1.0 / norm};
  Mat<T> z = Mat<T>::identity(m);
  const double rescale = 1.0 / std::sqrt(norm);

  LotIterate<T> out;
  out.normalization = norm;
  for (std::size_t it = 0; it < iters; ++it) {
    Mat<T> step = matmul(z, y);
    for (auto& x : step.storage()) x *= -0.5;
    for (std::size_t i = 0; i < m; ++i) step(i, i) += 1.5;
    y = matmul(y, step);
    z = matmul(step, z);
    for (const auto& x : z.storage())
      if (!std::isfinite(real_of(x)) || !std::isfinite(abs2(x))) throw DivergedError(it + 1, "lot");
    if (trace) out.condition.push_back(gram_condition(matmul(v, z)));
  }
  out.w = matmul(v, z);
  out.w *= T{rescale};
  return out;
}

struct LotResult {
  Tensor w;
  std::vector<double> condition;
  double normalization = 1.0;
};

/// Dense LOT orthogonalization of a square parameter.
inline LotResult lot_orthogonalize(const Tensor& v, std::size_t iters) {
  if (v.rank() != 2 || v.dim(0) != v.dim(1)) throw ShapeError("lot_orthogonalize: parameter must be square");
  auto r = lot_newton(to_mat(v), iters, true);
  return LotResult{to_tensor(r.w), std::move(r.condition), r.normalization};
}

}  // namespace bro
