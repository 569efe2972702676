#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "bro/core/errors.hpp"
#include "bro/core/tape.hpp"
#include "bro/core/tensor.hpp"
#include "bro/model/layers.hpp"
#include "bro/model/model.hpp"

namespace bro {

struct PgdResult {
  Tensor x_adv;
  double margin = 0.0;  // margin at x_adv
  bool flipped = false;
};

/// Margin and its input gradient for one sample.
inline std::pair<double, Tensor> margin_and_gradient(const Model& m, const Tensor& x, std::size_t label) {
  Tape t;
  const auto params = bind_params(t, m, false);
  Shape batched = m.input_shape;
  batched.insert(batched.begin(), 1);
  const Var xv = t.leaf(x.reshaped(batched));
  const Var logits = forward(t, m, params, xv);
  const Var mg = ops::margin_of(t, logits, label);
  return {t.value(mg).item(), t.backward(mg).of(xv).reshaped(x.shape())};
}

/// l2 PGD minimizing the margin inside the ball of the given radius:
/// normalized-gradient steps of 2.5 * radius / steps, projected back onto the
/// ball. The lowest-margin iterate is returned.
inline PgdResult pgd_attack(const Model& m, const Tensor& x, std::size_t label, double radius, std::size_t steps) {
  require(radius >= 0.0, "pgd_attack: radius must be non-negative");
  require(steps >= 1, "pgd_attack: need at least one step");
  auto [m0, g0] = margin_and_gradient(m, x, label);
  PgdResult best{x, m0, m0 < 0.0};
  if (radius == 0.0) return best;
  const double step = 2.5 * radius / static_cast<double>(steps);
  Tensor delta(x.shape());
  Tensor grad = std::move(g0);
  for (std::size_t it = 0; it < steps; ++it) {
    const double gn = grad.norm();
    if (gn == 0.0) break;
    delta.axpy(-step / gn, grad);
    const double dn = delta.norm();
    if (dn > radius) delta *= radius / dn;
    Tensor probe = x + delta;
    auto [mg, g] = margin_and_gradient(m, probe, label);
    if (mg < best.margin) best = {probe, mg, mg < 0.0};
    grad = std::move(g);
  }
  return best;
}

}  // namespace bro
