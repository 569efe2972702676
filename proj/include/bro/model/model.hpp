#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bro/cert/certification.hpp"
#include "bro/core/errors.hpp"
#include "bro/core/ops.hpp"
#include "bro/core/tape.hpp"
#include "bro/core/tensor.hpp"
#include "bro/model/layers.hpp"
#include "bro/ortho/bro_conv.hpp"
#include "bro/ortho/bro_dense.hpp"

namespace bro {

enum class LayerKind { bro_conv, bro_dense, semi_ortho, maxmin, l2_pool, lln_head };

inline std::string_view layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::bro_conv: return "bro_conv";
    case LayerKind::bro_dense: return "bro_dense";
    case LayerKind::semi_ortho: return "semi_ortho";
    case LayerKind::maxmin: return "maxmin";
    case LayerKind::l2_pool: return "l2_pool";
    case LayerKind::lln_head: return "lln_head";
  }
  return "?";
}

inline LayerKind parse_layer_kind(std::string_view s) {
  for (auto k : {LayerKind::bro_conv, LayerKind::bro_dense, LayerKind::semi_ortho, LayerKind::maxmin,
                 LayerKind::l2_pool, LayerKind::lln_head})
    if (layer_kind_name(k) == s) return k;
  throw FormatError("unknown layer kind '" + std::string(s) + "'");
}

/// One layer of a Lipschitz network. `in` is optional (0 = inferred from the
/// previous layer) and checked when given.
///   bro_conv:   out channels, rank n, kernel k; identity residual I + (alpha/depth) V
///   bro_dense:  square orthogonal map on `out` features
///   semi_ortho: truncated orthogonal map in -> out features
///   l2_pool:    patch size
///   lln_head:   out classes; rows normalized on application
struct LayerSpec {
  LayerKind kind = LayerKind::maxmin;
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t rank = 0;
  std::size_t kernel = 3;
  std::size_t patch = 2;

  static LayerSpec conv(std::size_t out, std::size_t rank, std::size_t kernel = 3) {
    return {LayerKind::bro_conv, 0, out, rank, kernel, 2};
  }
  static LayerSpec dense(std::size_t width, std::size_t rank) { return {LayerKind::bro_dense, 0, width, rank, 1, 2}; }
  static LayerSpec semi(std::size_t out, std::size_t rank) { return {LayerKind::semi_ortho, 0, out, rank, 1, 2}; }
  static LayerSpec activation() { return {LayerKind::maxmin, 0, 0, 0, 1, 2}; }
  static LayerSpec pool(std::size_t p) { return {LayerKind::l2_pool, 0, 0, 0, 1, p}; }
  static LayerSpec head(std::size_t classes) { return {LayerKind::lln_head, 0, classes, 0, 1, 2}; }
};

struct Model {
  Shape input_shape;                           // per-sample, e.g. {d} or {c, s, s}
  std::vector<LayerSpec> specs;
  std::vector<Tensor> params;                  // declaration order
  std::vector<std::vector<std::size_t>> slots; // per layer, indices into params
  std::vector<Shape> shapes;                   // per-sample activation shape after each layer
  std::uint64_t seed = 0;

  std::size_t classes() const { return shapes.empty() ? 0 : shape_size(shapes.back()); }
  std::size_t conv_depth() const {
    std::size_t d = 0;
    for (const auto& s : specs) d += s.kind == LayerKind::bro_conv;
    return d;
  }
  bool has_lln_head() const { return !specs.empty() && specs.back().kind == LayerKind::lln_head; }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.size();
    return n;
  }
};

namespace detail {

inline void check_in(const LayerSpec& s, std::size_t actual, std::size_t index) {
  if (s.in != 0 && s.in != actual)
    throw ShapeError("layer " + std::to_string(index) + " (" + std::string(layer_kind_name(s.kind)) +
                     "): expects " + std::to_string(s.in) + " inputs, previous layer gives " + std::to_string(actual));
}

// Validates geometry and fills shapes; when rng is given also draws parameters.
inline void layout_model(Model& m, std::mt19937_64* rng) {
  require(!m.input_shape.empty() && shape_size(m.input_shape) > 0, "build_model: empty input shape");
  require(!m.specs.empty(), "build_model: no layers");
  m.shapes.clear();
  m.slots.assign(m.specs.size(), {});
  if (rng) m.params.clear();
  std::size_t next_param = 0;
  auto add_param = [&](std::size_t layer, Tensor init) {
    if (rng) m.params.push_back(std::move(init));
    m.slots[layer].push_back(next_param++);
  };

  Shape cur = m.input_shape;
  for (std::size_t i = 0; i < m.specs.size(); ++i) {
    LayerSpec& s = m.specs[i];
    const std::string where = "layer " + std::to_string(i) + " (" + std::string(layer_kind_name(s.kind)) + ")";
    switch (s.kind) {
      case LayerKind::bro_conv: {
        if (cur.size() != 3 || cur[1] != cur[2]) throw ShapeError(where + ": needs c x s x s input");
        check_in(s, cur[0], i);
        require(s.out > 0, where + ": out channels must be positive");
        const ConvGeometry g{cur[0], s.out, cur[1], s.kernel, false};
        g.validate();
        const std::size_t c = g.channels();
        if (s.rank == 0 || s.rank >= c) throw ContractError(where + ": need 0 < rank < max(c_in, c_out)");
        if (rng) {
          add_param(i, Tensor::randn({c, s.rank, s.kernel, s.kernel}, *rng, 1.0 / std::sqrt(static_cast<double>(c))));
          add_param(i, Tensor::scalar(1.0));
        } else {
          add_param(i, {});
          add_param(i, {});
        }
        cur = {s.out, cur[1], cur[2]};
        break;
      }
      case LayerKind::bro_dense:
      case LayerKind::semi_ortho: {
        const std::size_t in = shape_size(cur);
        check_in(s, in, i);
        const std::size_t out = s.kind == LayerKind::bro_dense ? (s.out ? s.out : in) : s.out;
        s.out = out;
        if (s.kind == LayerKind::bro_dense && out != in)
          throw ShapeError(where + ": square map needs out == in (" + std::to_string(in) + ")");
        require(out > 0, where + ": out must be positive");
        const std::size_t c = std::max(in, out);
        if (s.rank == 0 || s.rank >= c) throw ContractError(where + ": need 0 < rank < " + std::to_string(c));
        add_param(i, rng ? Tensor::randn({c, s.rank}, *rng, 1.0 / std::sqrt(static_cast<double>(c))) : Tensor{});
        cur = {out};
        break;
      }
      case LayerKind::maxmin:
        if (cur[0] % 2) throw ContractError(where + ": channel count " + std::to_string(cur[0]) + " is odd");
        break;
      case LayerKind::l2_pool:
        if (cur.size() != 3 || cur[1] != cur[2]) throw ShapeError(where + ": needs c x s x s input");
        if (s.patch == 0 || cur[1] % s.patch)
          throw ContractError(where + ": patch " + std::to_string(s.patch) + " does not divide " +
                              std::to_string(cur[1]));
        cur = {cur[0], cur[1] / s.patch, cur[2] / s.patch};
        break;
      case LayerKind::lln_head: {
        const std::size_t in = shape_size(cur);
        check_in(s, in, i);
        require(s.out >= 2, where + ": need at least two classes");
        if (i + 1 != m.specs.size()) throw ContractError(where + ": head must be the last layer");
        add_param(i, rng ? Tensor::randn({s.out, in}, *rng, 1.0 / std::sqrt(static_cast<double>(in))) : Tensor{});
        cur = {s.out};
        break;
      }
    }
    m.shapes.push_back(cur);
  }
  if (!rng && next_param != m.params.size())
    throw FormatError("model: expected " + std::to_string(next_param) + " parameter tensors, got " +
                      std::to_string(m.params.size()));
}

}  // namespace detail

/// Builds a model and draws its parameters: BRO parameters are i.i.d.
/// N(0, 1/m) with m the operator dimension, residual scales start at 1.
inline Model build_model(Shape input_shape, std::vector<LayerSpec> specs, std::uint64_t seed) {
  Model m;
  m.input_shape = std::move(input_shape);
  m.specs = std::move(specs);
  m.seed = seed;
  std::mt19937_64 rng(seed);
  detail::layout_model(m, &rng);
  return m;
}

/// Re-derives slots and shapes for a model whose params were supplied externally.
inline void relayout_model(Model& m) { detail::layout_model(m, nullptr); }

/// Every layer is 1-Lipschitz by construction; the head contributes 1 here and
/// is certified through its pairwise bound.
inline LipschitzModel lipschitz_model(const Model& m) {
  LipschitzModel lm;
  for (const auto& s : m.specs) lm.layers.push_back({std::string(layer_kind_name(s.kind)), 1.0});
  return lm;
}

inline std::vector<Var> bind_params(Tape& t, const Model& m, bool trainable) {
  std::vector<Var> vars;
  vars.reserve(m.params.size());
  for (const auto& p : m.params) vars.push_back(trainable ? t.leaf(p) : t.constant(p));
  return vars;
}

/// Batched forward pass: x is b x input_shape, returns b x classes (or the
/// last activation when there is no head).
inline Var forward(Tape& t, const Model& m, std::span<const Var> params, Var x) {
  const Tensor& xv = t.value(x);
  if (xv.rank() != m.input_shape.size() + 1) throw ShapeError("forward: expected batched input");
  for (std::size_t i = 0; i < m.input_shape.size(); ++i)
    if (xv.dim(i + 1) != m.input_shape[i])
      throw ShapeError("forward: input shape " + shape_string(xv.shape()) + " does not match model");
  const std::size_t b = xv.dim(0);
  const double depth = static_cast<double>(std::max<std::size_t>(1, m.conv_depth()));
  Var h = x;
  Shape cur = m.input_shape;
  for (std::size_t i = 0; i < m.specs.size(); ++i) {
    const LayerSpec& s = m.specs[i];
    const auto& slot = m.slots[i];
    switch (s.kind) {
      case LayerKind::bro_conv: {
        const ConvGeometry g{cur[0], s.out, cur[1], s.kernel, false};
        const Var v = ops::conv_residual(t, params[slot[0]], params[slot[1]], depth);
        h = ops::bro_conv(t, v, h, g);
        break;
      }
      case LayerKind::bro_dense:
      case LayerKind::semi_ortho: {
        const std::size_t in = shape_size(cur);
        if (t.value(h).rank() != 2) h = ops::reshape(t, h, {b, in});
        Var w = ops::bro_weight(t, params[slot[0]]);
        if (s.kind == LayerKind::semi_ortho) w = ops::truncate(t, w, s.out, in);
        h = ops::linear(t, h, w);
        break;
      }
      case LayerKind::maxmin: h = ops::maxmin(t, h); break;
      case LayerKind::l2_pool: h = ops::l2_pool(t, h, s.patch); break;
      case LayerKind::lln_head: {
        const std::size_t in = shape_size(cur);
        if (t.value(h).rank() != 2) h = ops::reshape(t, h, {b, in});
        h = ops::linear(t, h, ops::normalize_rows(t, params[slot[0]]));
        break;
      }
    }
    cur = m.shapes[i];
  }
  return h;
}

/// Forward without gradients. Accepts a single sample or a batch.
inline Tensor predict(const Model& m, const Tensor& x) {
  const bool single = x.rank() == m.input_shape.size();
  Shape batched = m.input_shape;
  batched.insert(batched.begin(), single ? 1 : x.dim(0));
  Tape t;
  const auto params = bind_params(t, m, false);
  const Var in = t.constant(x.reshaped(batched));
  Tensor out = t.value(forward(t, m, params, in));
  if (single) out.reshape({out.size()});
  return out;
}

/// Unit-norm head rows, or nullopt without an LLN head.
inline std::optional<Tensor> head_rows(const Model& m) {
  if (!m.has_lln_head()) return std::nullopt;
  return normalize_rows(m.params[m.slots.back().at(0)]);
}

/// Certified radius of one logit vector under this model's bound.
inline double model_radius(const Model& m, std::span<const double> logits, std::size_t t) {
  const double lip = compose_lipschitz(lipschitz_model(m));
  if (auto rows = head_rows(m)) return lln_certified_radius(logits, t, *rows, lip);
  return certified_radius(margin(logits, t), lip);
}

/// Certifies every row of x (n x input_shape) against labels.
inline CertificationReport certify(const Model& m, const Tensor& x, std::span<const std::size_t> labels,
                                   const std::vector<double>& grid) {
  const Tensor logits = predict(m, x);
  require(logits.dim(0) == labels.size(), "certify: label count mismatch");
  const std::size_t k = logits.dim(1);
  std::vector<CertificationRecord> records;
  records.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::span<const double> row(logits.data().data() + i * k, k);
    records.push_back(certify_logits(row, labels[i], model_radius(m, row, labels[i])));
  }
  return make_report(std::move(records), grid);
}

/// LipConvNet-mini: two BRO convolutions with MaxMin, a semi-orthogonal
/// projection and an LLN head. Input c x s x s.
inline std::vector<LayerSpec> lipconvnet_mini(std::size_t classes, std::size_t width = 8, std::size_t features = 32) {
  return {LayerSpec::conv(width, width / 2), LayerSpec::activation(), LayerSpec::conv(width, width / 2),
          LayerSpec::activation(), LayerSpec::semi(features, features / 2), LayerSpec::head(classes)};
}

/// BRONet-mini: dense BRO blocks on flat input.
inline std::vector<LayerSpec> bronet_mini(std::size_t classes, std::size_t width = 16, std::size_t blocks = 2) {
  std::vector<LayerSpec> specs{LayerSpec::semi(width, width / 2), LayerSpec::activation()};
  for (std::size_t i = 0; i < blocks; ++i) {
    specs.push_back(LayerSpec::dense(width, width / 2));
    specs.push_back(LayerSpec::activation());
  }
  specs.push_back(LayerSpec::head(classes));
  return specs;
}

}  // namespace bro
