#pragma once

// Block reflector W = I - 2 V (V^H V)^{-1} V^H over real or complex scalars.
// Kept in factored form so that applying W costs O(m n) per vector.

#include <cstddef>

#include "bro/core/linalg.hpp"

namespace bro {

template <class T>
struct ReflectorFactor {
  Mat<T> v;   // m x n
  Mat<T> vg;  // V (V^H V)^{-1}, m x n

  std::size_t dim() const { return v.rows(); }
  std::size_t rank() const { return v.cols(); }
};

/// Cholesky of the Gram matrix; throws SingularParameter for rank-deficient V.
template <class T>
ReflectorFactor<T> factor_reflector(const Mat<T>& v) {
  if (v.cols() > v.rows()) throw ContractError("factor_reflector: need n <= m");
  const Mat<T> l = cholesky(matmul_adj(v, v));
  // G V^H solved as an n x m right-hand side, then adjointed back to m x n.
  Mat<T> gvh = cholesky_solve(l, adjoint(v));
  return ReflectorFactor<T>{v, adjoint(gvh)};
}

/// Dense W (m x m).
template <class T>
Mat<T> materialize(const ReflectorFactor<T>& f) {
  const std::size_t m = f.dim(), n = f.rank();
  Mat<T> w = Mat<T>::identity(m);
  for (std::size_t i = 0; i < m; ++i) {
    T* wi = w.row(i);
    const T* vi = f.v.row(i);
    for (std::size_t p = 0; p < n; ++p) {
      const T a = T{2} * vi[p];
      for (std::size_t j = 0; j < m; ++j) wi[j] -= a * conj_of(f.vg(j, p));
    }
  }
  return w;
}

/// y = W x for a single vector; `scratch` must hold rank() values.
template <class T>
void apply_reflector(const ReflectorFactor<T>& f, const T* x, T* y, T* scratch) {
  const std::size_t m = f.dim(), n = f.rank();
  for (std::size_t p = 0; p < n; ++p) scratch[p] = T{};
  for (std::size_t i = 0; i < m; ++i) {
    const T* gi = f.vg.row(i);
    const T xi = x[i];
    for (std::size_t p = 0; p < n; ++p) scratch[p] += conj_of(gi[p]) * xi;
  }
  for (std::size_t i = 0; i < m; ++i) {
    const T* vi = f.v.row(i);
    T acc = x[i];
    for (std::size_t p = 0; p < n; ++p) acc -= T{2} * vi[p] * scratch[p];
    y[i] = acc;
  }
}

/// Same pullback when U = S V G has been accumulated directly (rank-one
/// updates in the convolution backward pass).
template <class T>
Mat<T> reflector_vjp_from_u(const ReflectorFactor<T>& f, const Mat<T>& u) {
  Mat<T> out(u);
  const Mat<T> inner = matmul_adj(f.vg, u);  // n x n
  out -= matmul(f.v, inner);
  return out;
}

/// Pullback of a gradient on W (m x m, conjugate convention for complex) to V.
/// With S = -2 (Wbar + Wbar^H) and U = S V G:
///   Vbar = U - V (V G)^H U.
template <class T>
Mat<T> reflector_vjp(const ReflectorFactor<T>& f, const Mat<T>& w_bar) {
  const std::size_t m = f.dim();
  Mat<T> s(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) s(i, j) = T{-2} * (w_bar(i, j) + conj_of(w_bar(j, i)));
  return reflector_vjp_from_u(f, matmul(s, f.vg));
}

}  // namespace bro
