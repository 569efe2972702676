#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bro/core/errors.hpp"
#include "bro/core/ops.hpp"
#include "bro/core/tape.hpp"
#include "bro/core/tensor.hpp"
#include "bro/loss/losses.hpp"
#include "bro/ortho/bro_conv.hpp"

namespace bro {

namespace detail {

// Per-sample size and channel-half size for a batched tensor b x C x ...
inline std::pair<std::size_t, std::size_t> maxmin_layout(const Tensor& x, bool batched) {
  const std::size_t axis = batched ? 1 : 0;
  if (x.rank() <= axis) throw ShapeError("maxmin: missing channel axis");
  const std::size_t channels = x.dim(axis);
  if (channels % 2) throw ContractError("maxmin: channel count " + std::to_string(channels) + " is odd");
  const std::size_t per = batched ? x.size() / x.dim(0) : x.size();
  return {per, per / 2};
}

inline Tensor maxmin_impl(const Tensor& x, bool batched) {
  const auto [per, half] = maxmin_layout(x, batched);
  Tensor out(x.shape());
  for (std::size_t base = 0; base < x.size(); base += per)
    for (std::size_t j = 0; j < half; ++j) {
      const double a = x[base + j], b = x[base + half + j];
      out[base + j] = std::max(a, b);
      out[base + half + j] = std::min(a, b);
    }
  return out;
}

inline void check_pool(const Tensor& x, std::size_t p, bool batched) {
  const std::size_t r = batched ? 4 : 3;
  if (x.rank() != r) throw ShapeError("l2_pool: expected " + std::string(batched ? "b x c x s x s" : "c x s x s"));
  require(p >= 1, "l2_pool: patch must be positive");
  const std::size_t s = x.dim(r - 1);
  if (x.dim(r - 2) != s) throw ShapeError("l2_pool: spatial dims must be square");
  if (s % p) throw ContractError("l2_pool: patch " + std::to_string(p) + " does not divide " + std::to_string(s));
}

}  // namespace detail

/// Splits channels into halves (a, b) and returns (max(a, b), min(a, b)).
/// Input is c x ... with the channel axis first.
inline Tensor maxmin(const Tensor& x) { return detail::maxmin_impl(x, false); }

/// l2 norm of each non-overlapping p x p patch: c x s x s -> c x s/p x s/p.
inline Tensor l2_pool(const Tensor& x, std::size_t p) {
  detail::check_pool(x, p, false);
  const std::size_t c = x.dim(0), s = x.dim(1), so = s / p;
  Tensor out({c, so, so});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < s; ++j) out(ch, i / p, j / p) += x(ch, i, j) * x(ch, i, j);
  for (auto& v : out.data()) v = std::sqrt(v);
  return out;
}

/// Rows scaled to unit l2 norm.
inline Tensor normalize_rows(const Tensor& w) {
  if (w.rank() != 2) throw ShapeError("normalize_rows: expected a matrix");
  Tensor out(w);
  for (std::size_t i = 0; i < w.dim(0); ++i) {
    double n2 = 0.0;
    for (std::size_t j = 0; j < w.dim(1); ++j) n2 += w(i, j) * w(i, j);
    if (n2 == 0.0) throw ContractError("normalize_rows: zero row " + std::to_string(i));
    const double inv = 1.0 / std::sqrt(n2);
    for (std::size_t j = 0; j < w.dim(1); ++j) out(i, j) *= inv;
  }
  return out;
}

enum class LossKind { la, ce, ce_cr };

namespace ops {

/// Batched MaxMin over axis 1 of b x C x ...
inline Var maxmin(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  Tensor out = detail::maxmin_impl(xv, true);
  return t.record(std::move(out), {x}, [&xv](const Tensor& g, GradSink& s) {
    const auto [per, half] = detail::maxmin_layout(xv, true);
    Tensor gx(xv.shape());
    for (std::size_t base = 0; base < xv.size(); base += per)
      for (std::size_t j = 0; j < half; ++j) {
        const bool a_max = xv[base + j] >= xv[base + half + j];
        gx[base + j] = a_max ? g[base + j] : g[base + half + j];
        gx[base + half + j] = a_max ? g[base + half + j] : g[base + j];
      }
    s.add(0, std::move(gx));
  });
}

/// Batched l2 pooling of b x c x s x s.
inline Var l2_pool(Tape& t, Var x, std::size_t p) {
  const Tensor& xv = t.value(x);
  detail::check_pool(xv, p, true);
  const std::size_t b = xv.dim(0), c = xv.dim(1), s = xv.dim(2), so = s / p;
  Tensor out({b, c, so, so});
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < s; ++j) out(n, ch, i / p, j / p) += xv(n, ch, i, j) * xv(n, ch, i, j);
  for (auto& v : out.data()) v = std::sqrt(v);
  auto pooled = std::make_shared<const Tensor>(out);
  return t.record(std::move(out), {x}, [&xv, pooled, p](const Tensor& g, GradSink& sink) {
    const Tensor& ov = *pooled;
    Tensor gx(xv.shape());
    for (std::size_t n = 0; n < xv.dim(0); ++n)
      for (std::size_t ch = 0; ch < xv.dim(1); ++ch)
        for (std::size_t i = 0; i < xv.dim(2); ++i)
          for (std::size_t j = 0; j < xv.dim(3); ++j) {
            const double norm = ov(n, ch, i / p, j / p);
            if (norm > 0.0) gx(n, ch, i, j) = g(n, ch, i / p, j / p) * xv(n, ch, i, j) / norm;
          }
    sink.add(0, std::move(gx));
  });
}

/// Row normalization W -> diag(1/||w_i||) W.
inline Var normalize_rows(Tape& t, Var w) {
  const Tensor& wv = t.value(w);
  Tensor out = bro::normalize_rows(wv);
  return t.record(std::move(out), {w}, [&wv](const Tensor& g, GradSink& s) {
    // d(w/|w|) = (g - (g.u) u) / |w| with u = w/|w|.
    Tensor gw(wv.shape());
    for (std::size_t i = 0; i < wv.dim(0); ++i) {
      double n2 = 0.0, gu = 0.0;
      for (std::size_t j = 0; j < wv.dim(1); ++j) n2 += wv(i, j) * wv(i, j);
      const double n = std::sqrt(n2);
      for (std::size_t j = 0; j < wv.dim(1); ++j) gu += g(i, j) * wv(i, j) / n;
      for (std::size_t j = 0; j < wv.dim(1); ++j) gw(i, j) = (g(i, j) - gu * wv(i, j) / n) / n;
    }
    s.add(0, std::move(gw));
  });
}

/// Identity residual of a conv parameter: I + (alpha / depth) V.
inline Var conv_residual(Tape& t, Var v, Var alpha, double depth) {
  const Tensor& vv = t.value(v);
  const double a = t.value(alpha).item();
  Tensor out = identity_kernel(vv.dim(0), vv.dim(1), vv.dim(2));
  out.axpy(a / depth, vv);
  const Shape alpha_shape = t.value(alpha).shape();
  return t.record(std::move(out), {v, alpha}, [&vv, a, depth, alpha_shape](const Tensor& g, GradSink& s) {
    if (s.needs(0)) s.add(0, (a / depth) * g);
    if (s.needs(1)) s.add(1, Tensor(alpha_shape, dot(g, vv) / depth));
  });
}

/// Mean classification loss of b x K logits.
inline Var classification_loss(Tape& t, Var logits, std::span<const std::size_t> labels, LossKind kind,
                               const LossConfig& cfg) {
  const Tensor& z = t.value(logits);
  if (z.rank() != 2 || z.dim(0) != labels.size()) throw ShapeError("classification_loss: logits must be b x K");
  const std::size_t b = z.dim(0), k = z.dim(1);
  Tensor grad({b, k});
  double total = 0.0;
  Tensor row({k});
  for (std::size_t n = 0; n < b; ++n) {
    for (std::size_t j = 0; j < k; ++j) row[j] = z(n, j);
    LossResult r = kind == LossKind::la   ? la_loss(row, labels[n], cfg)
                   : kind == LossKind::ce ? ce_loss(row, labels[n])
                                          : ce_cr_loss(row, labels[n], cfg);
    total += r.loss;
    for (std::size_t j = 0; j < k; ++j) grad(n, j) = r.grad[j] / static_cast<double>(b);
  }
  return t.record(Tensor::scalar(total / static_cast<double>(b)), {logits},
                  [grad = std::move(grad)](const Tensor& g, GradSink& s) { s.add(0, g.item() * grad); });
}

/// z_t - z_r for a single row of logits, with r the runner-up at the recorded point.
inline Var margin_of(Tape& t, Var logits, std::size_t label) {
  const Tensor& z = t.value(logits);
  const std::size_t k = z.size();
  require(k >= 2 && label < k, "margin_of: bad label");
  std::size_t runner = label == 0 ? 1 : 0;
  for (std::size_t j = 0; j < k; ++j)
    if (j != label && z[j] > z[runner]) runner = j;
  const Shape shape = z.shape();
  return t.record(Tensor::scalar(z[label] - z[runner]), {logits}, [shape, label, runner](const Tensor& g, GradSink& s) {
    Tensor gz(shape);
    gz[label] = g.item();
    gz[runner] = -g.item();
    s.add(0, std::move(gz));
  });
}

}  // namespace ops
}  // namespace bro
