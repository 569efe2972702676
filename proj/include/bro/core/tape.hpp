#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "bro/core/errors.hpp"
#include "bro/core/tensor.hpp"

namespace bro {

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

class Tape;

/// Passed to a node's backward function; routes input gradients into the
/// tape's accumulation buffers.
class GradSink {
 public:
  GradSink(std::vector<std::optional<Tensor>>& grads, const std::vector<Var>& inputs,
           const std::vector<bool>& needs_grad)
      : grads_(grads), inputs_(inputs), needs_grad_(needs_grad) {}

  bool needs(std::size_t k) const { return needs_grad_[inputs_[k].id]; }

  void add(std::size_t k, const Tensor& g) {
    const std::size_t id = inputs_[k].id;
    if (!needs_grad_[id]) return;
    auto& slot = grads_[id];
    if (!slot)
      slot = g;
    else
      *slot += g;
  }
  void add(std::size_t k, Tensor&& g) {
    const std::size_t id = inputs_[k].id;
    if (!needs_grad_[id]) return;
    auto& slot = grads_[id];
    if (!slot)
      slot = std::move(g);
    else
      *slot += g;
  }

 private:
  std::vector<std::optional<Tensor>>& grads_;
  const std::vector<Var>& inputs_;
  const std::vector<bool>& needs_grad_;
};

/// Gradients of a scalar output with respect to every recorded node.
class Gradients {
 public:
  Gradients(std::vector<std::optional<Tensor>> grads, std::vector<Shape> shapes)
      : grads_(std::move(grads)), shapes_(std::move(shapes)) {}

  /// Gradient for `v`; zeros when the output does not depend on it.
  Tensor of(Var v) const {
    const auto& g = grads_.at(v.id);
    return g ? *g : Tensor(shapes_.at(v.id));
  }
  bool reached(Var v) const { return grads_.at(v.id).has_value(); }

 private:
  std::vector<std::optional<Tensor>> grads_;
  std::vector<Shape> shapes_;
};

/// Append-only record of primitive operations for reverse-mode
/// differentiation. Forward values are saved eagerly. Single-threaded.
class Tape {
 public:
  using Backward = std::function<void(const Tensor& grad_out, GradSink& sink)>;

  Var leaf(Tensor value) { return push(std::move(value), {}, nullptr, true); }
  Var constant(Tensor value) { return push(std::move(value), {}, nullptr, false); }

  /// Records an op. Inputs must already be on this tape, which keeps the
  /// node list topologically ordered.
  Var record(Tensor value, std::vector<Var> inputs, Backward backward) {
    bool needs = false;
    for (const auto& in : inputs) {
      if (in.id >= nodes_.size()) throw ContractError("Tape::record: input not on this tape");
      needs = needs || needs_grad_[in.id];
    }
    return push(std::move(value), std::move(inputs), needs ? std::move(backward) : nullptr, needs);
  }

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return needs_grad_.at(v.id); }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse sweep from a scalar output. Each node is visited once.
  Gradients backward(Var output) const {
    if (output.id >= nodes_.size()) throw ContractError("Tape::backward: unknown output");
    if (nodes_[output.id].value.size() != 1)
      throw ContractError("Tape::backward: output must be scalar, got shape " +
                          shape_string(nodes_[output.id].value.shape()));
    std::vector<std::optional<Tensor>> grads(nodes_.size());
    grads[output.id] = Tensor(nodes_[output.id].value.shape(), 1.0);
    for (std::size_t i = output.id + 1; i-- > 0;) {
      const Node& node = nodes_[i];
      if (!grads[i] || !node.backward) continue;
      GradSink sink(grads, node.inputs, needs_grad_);
      const Tensor g = *grads[i];
      node.backward(g, sink);
    }
    std::vector<Shape> shapes;
    shapes.reserve(nodes_.size());
    for (const auto& n : nodes_) shapes.push_back(n.value.shape());
    return Gradients(std::move(grads), std::move(shapes));
  }

 private:
  struct Node {
    Tensor value;
    std::vector<Var> inputs;
    Backward backward;
  };

  Var push(Tensor value, std::vector<Var> inputs, Backward backward, bool needs) {
    nodes_.push_back(Node{std::move(value), std::move(inputs), std::move(backward)});
    needs_grad_.push_back(needs);
    return Var{nodes_.size() - 1};
  }

  // deque keeps saved values at stable addresses, so backward closures may
  // hold references to their inputs' values.
  std::deque<Node> nodes_;
  std::vector<bool> needs_grad_;
};

/// Builds a scalar function of one tensor on a fresh tape.
using TapeFunction = std::function<Var(Tape&, Var)>;

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
/// Any NaN along the way yields NaN.
inline double grad_check(const TapeFunction& f, const Tensor& x, double h) {
  require(h > 0.0, "grad_check: step must be positive");
  Tape tape;
  const Var xv = tape.leaf(x);
  const Var out = f(tape, xv);
  const Tensor analytic = tape.backward(out).of(xv);

  auto eval = [&](const Tensor& at) {
    Tape t;
    const Var v = t.constant(at);
    return t.value(f(t, v)).item();
  };
  double worst = 0.0;
  Tensor probe(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = eval(probe);
    probe[i] = x[i] - h;
    const double down = eval(probe);
    probe[i] = x[i];
    const double fd = (up - down) / (2.0 * h);
    const double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(analytic[i]));
    if (std::isnan(err)) return std::numeric_limits<double>::quiet_NaN();
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace bro
