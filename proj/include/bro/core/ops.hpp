#pragma once

// Differentiable primitives on Tape. Shapes follow Tensor conventions;
// matmul is strictly 2D.

#include <cstddef>
#include <utility>

#include "bro/core/errors.hpp"
#include "bro/core/tape.hpp"
#include "bro/core/tensor.hpp"

namespace bro::ops {

inline Var add(Tape& t, Var a, Var b) {
  Tensor out = t.value(a) + t.value(b);
  return t.record(std::move(out), {a, b}, [](const Tensor& g, GradSink& s) {
    s.add(0, g);
    s.add(1, g);
  });
}

inline Var sub(Tape& t, Var a, Var b) {
  Tensor out = t.value(a) - t.value(b);
  return t.record(std::move(out), {a, b}, [](const Tensor& g, GradSink& s) {
    s.add(0, g);
    s.add(1, -1.0 * g);
  });
}

inline Var scale(Tape& t, Var a, double k) {
  Tensor out = k * t.value(a);
  return t.record(std::move(out), {a}, [k](const Tensor& g, GradSink& s) { s.add(0, k * g); });
}

/// Scalar variable times tensor variable.
inline Var scale_by(Tape& t, Var scalar, Var a) {
  const double k = t.value(scalar).item();
  Tensor out = k * t.value(a);
  const Tensor& av = t.value(a);
  const Shape scalar_shape = t.value(scalar).shape();
  return t.record(std::move(out), {scalar, a}, [k, &av, scalar_shape](const Tensor& g, GradSink& s) {
    if (s.needs(0)) s.add(0, Tensor(scalar_shape, std::vector<double>{dot(g, av)}));
    s.add(1, k * g);
  });
}

/// Elementwise product.
inline Var mul(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (av.shape() != bv.shape()) throw ShapeError("ops::mul: shape mismatch");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return t.record(std::move(out), {a, b}, [&av, &bv](const Tensor& g, GradSink& s) {
    Tensor ga(g.shape()), gb(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] = g[i] * bv[i];
      gb[i] = g[i] * av[i];
    }
    s.add(0, std::move(ga));
    s.add(1, std::move(gb));
  });
}

inline Var square(Tape& t, Var a) { return mul(t, a, a); }

inline Var sum(Tape& t, Var a) {
  const Shape in_shape = t.value(a).shape();
  return t.record(Tensor::scalar(t.value(a).sum()), {a},
                  [in_shape](const Tensor& g, GradSink& s) { s.add(0, Tensor(in_shape, g.item())); });
}

inline Var mean(Tape& t, Var a) {
  const double n = static_cast<double>(t.value(a).size());
  return scale(t, sum(t, a), 1.0 / n);
}

inline Var reshape(Tape& t, Var a, Shape shape) {
  const Shape in_shape = t.value(a).shape();
  return t.record(t.value(a).reshaped(std::move(shape)), {a},
                  [in_shape](const Tensor& g, GradSink& s) { s.add(0, g.reshaped(in_shape)); });
}

namespace impl {
// c (m x n) = op(a) * op(b), op = transpose when flagged.
inline Tensor gemm(const Tensor& a, bool ta, const Tensor& b, bool tb) {
  const std::size_t m = ta ? a.dim(1) : a.dim(0);
  const std::size_t k = ta ? a.dim(0) : a.dim(1);
  const std::size_t kb = tb ? b.dim(1) : b.dim(0);
  const std::size_t n = tb ? b.dim(0) : b.dim(1);
  if (k != kb) throw ShapeError("matmul: inner dimensions " + std::to_string(k) + " vs " + std::to_string(kb));
  Tensor c({m, n});
  const std::size_t lda = a.dim(1), ldb = b.dim(1);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ta ? a[p * lda + i] : a[i * lda + p];
      if (aip == 0.0) continue;
      double* ci = c.data().data() + i * n;
      if (!tb) {
        const double* bp = b.data().data() + p * ldb;
        for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) ci[j] += aip * b[j * ldb + p];
      }
    }
  }
  return c;
}
}  // namespace impl

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul: operands must be matrices");
  return impl::gemm(a, false, b, false);
}

inline Tensor matmul_t(const Tensor& a, bool ta, const Tensor& b, bool tb) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul: operands must be matrices");
  return impl::gemm(a, ta, b, tb);
}

inline Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose: operand must be a matrix");
  Tensor t({a.dim(1), a.dim(0)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < a.dim(1); ++j) t(j, i) = a(i, j);
  return t;
}

inline Var matmul(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  return t.record(matmul(av, bv), {a, b}, [&av, &bv](const Tensor& g, GradSink& s) {
    if (s.needs(0)) s.add(0, matmul_t(g, false, bv, true));
    if (s.needs(1)) s.add(1, matmul_t(av, true, g, false));
  });
}

}  // namespace bro::ops
