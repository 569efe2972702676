#pragma once

#include <algorithm>
#include <cstddef>

#include "bro/core/linalg.hpp"
#include "bro/core/tensor.hpp"

namespace bro {

/// Leading c_out x c_in block of a c x c orthogonal matrix, c = max(c_out, c_in).
/// Expanding (c_in < c_out) keeps orthonormal columns; reducing keeps
/// orthonormal rows, so the result is 1-Lipschitz either way.
inline Tensor semi_ortho_truncate(const Tensor& w, std::size_t c_out, std::size_t c_in) {
  if (w.rank() != 2 || w.dim(0) != w.dim(1)) throw ShapeError("semi_ortho_truncate: w must be square");
  const std::size_t c = w.dim(0);
  if (std::max(c_out, c_in) != c)
    throw ContractError("semi_ortho_truncate: max(c_out, c_in) must equal " + std::to_string(c));
  if (orthogonality_error(to_mat(w)) > 1e-8) throw ContractError("semi_ortho_truncate: w is not orthogonal");
  Tensor out({c_out, c_in});
  for (std::size_t i = 0; i < c_out; ++i)
    for (std::size_t j = 0; j < c_in; ++j) out(i, j) = w(i, j);
  return out;
}

}  // namespace bro
