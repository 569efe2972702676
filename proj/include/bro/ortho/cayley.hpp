#pragma once

#include <cstddef>

#include "bro/core/linalg.hpp"
#include "bro/core/tensor.hpp"

namespace bro {

/// Cayley map of the skew part A = (V - V^H)/2: W = (I - A)(I + A)^{-1}.
/// The two factors commute, so W is obtained from one solve with (I + A).
template <class T>
Mat<T> cayley(const Mat<T>& v) {
  const std::size_t m = v.rows();
  if (v.cols() != m) throw ShapeError("cayley: parameter must be square");
  Mat<T> plus = Mat<T>::identity(m), minus = Mat<T>::identity(m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const T a = (v(i, j) - conj_of(v(j, i))) * 0.5;
      plus(i, j) += a;
      minus(i, j) -= a;
    }
  return lu_solve(std::move(plus), std::move(minus));
}

inline Tensor cayley_orthogonalize(const Tensor& v) { return to_tensor(cayley(to_mat(v))); }

}  // namespace bro
