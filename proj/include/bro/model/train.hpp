#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <string_view>
#include <vector>

#include "bro/cert/certification.hpp"
#include "bro/core/errors.hpp"
#include "bro/core/tape.hpp"
#include "bro/core/tensor.hpp"
#include "bro/loss/losses.hpp"
#include "bro/model/data.hpp"
#include "bro/model/layers.hpp"
#include "bro/model/model.hpp"

namespace bro {

enum class Schedule { constant, cosine };

inline LossKind parse_loss_kind(std::string_view s) {
  if (s == "la") return LossKind::la;
  if (s == "ce") return LossKind::ce;
  if (s == "ce_cr" || s == "cecr") return LossKind::ce_cr;
  throw ContractError("unknown loss '" + std::string(s) + "'");
}

inline std::string_view loss_kind_name(LossKind k) {
  return k == LossKind::la ? "la" : k == LossKind::ce ? "ce" : "ce_cr";
}

struct TrainConfig {
  std::uint64_t seed = 0;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double lr = 0.1;
  Schedule schedule = Schedule::constant;
  double momentum = 0.9;
  LossKind loss = LossKind::la;
  LossConfig loss_cfg;
  std::vector<double> radii{0.0};

  void validate() const {
    require(batch_size > 0, "TrainConfig: batch size must be positive");
    require(lr >= 0.0, "TrainConfig: learning rate must be non-negative");
    require(momentum >= 0.0 && momentum < 1.0, "TrainConfig: momentum must lie in [0, 1)");
    require(std::is_sorted(radii.begin(), radii.end()), "TrainConfig: radii must be ascending");
    loss_cfg.validate();
  }

  double lr_at(std::size_t epoch) const {
    if (schedule == Schedule::constant || epochs <= 1) return lr;
    return 0.5 * lr * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(epochs)));
  }
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;        // mean over samples
  double clean_accuracy = 0.0;
  double mean_margin = 0.0;
  std::vector<double> certified;  // at TrainConfig::radii
  double grad_ratio_min = 0.0;    // first / last BRO layer gradient norm
  double grad_ratio_max = 0.0;

  bool operator==(const EpochLog&) const = default;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
};

namespace detail {

inline bool is_bro_layer(LayerKind k) {
  return k == LayerKind::bro_conv || k == LayerKind::bro_dense || k == LayerKind::semi_ortho;
}

}  // namespace detail

/// Gradient of the mean loss over a batch with respect to every parameter.
inline std::pair<double, std::vector<Tensor>> loss_and_gradients(const Model& m, const Tensor& x,
                                                                 std::span<const std::size_t> y, LossKind kind,
                                                                 const LossConfig& cfg) {
  Tape t;
  const auto params = bind_params(t, m, true);
  const Var logits = forward(t, m, params, t.constant(x));
  const Var loss = ops::classification_loss(t, logits, y, kind, cfg);
  const Gradients g = t.backward(loss);
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (const auto& p : params) grads.push_back(g.of(p));
  return {t.value(loss).item(), std::move(grads)};
}

/// Minibatch SGD with momentum on the tape. Deterministic for a fixed seed.
inline TrainLog train(Model& m, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  require(!data.empty(), "train: empty dataset");
  require(data.sample_shape == m.input_shape, "train: dataset shape " + shape_string(data.sample_shape) +
                                                  " does not match model input " + shape_string(m.input_shape));
  require(data.classes == m.classes(), "train: class count mismatch");

  std::vector<std::size_t> first_last;
  for (std::size_t i = 0; i < m.specs.size(); ++i)
    if (detail::is_bro_layer(m.specs[i].kind)) first_last.push_back(m.slots[i].front());
  std::vector<Tensor> velocity;
  for (const auto& p : m.params) velocity.emplace_back(p.shape());

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  TrainLog log;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = cfg.lr_at(epoch);
    EpochLog e;
    e.epoch = epoch;
    e.grad_ratio_min = std::numeric_limits<double>::infinity();
    e.grad_ratio_max = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(
                                                             std::min(order.size(), start + cfg.batch_size)));
      const Dataset batch = data.subset(idx);
      auto [loss, grads] = loss_and_gradients(m, batch.x, batch.y, cfg.loss, cfg.loss_cfg);
      if (!std::isfinite(loss))
        throw DivergedError(epoch * ((order.size() + cfg.batch_size - 1) / cfg.batch_size) + batches,
                            "train: non-finite loss");
      if (first_last.size() >= 2) {
        const double ratio = grads[first_last.front()].norm() / grads[first_last.back()].norm();
        e.grad_ratio_min = std::min(e.grad_ratio_min, ratio);
        e.grad_ratio_max = std::max(e.grad_ratio_max, ratio);
      }
      for (std::size_t i = 0; i < m.params.size(); ++i) {
        velocity[i] *= cfg.momentum;
        velocity[i] += grads[i];
        m.params[i].axpy(-lr, velocity[i]);
      }
      e.loss += loss * static_cast<double>(idx.size());
      ++batches;
    }
    e.loss /= static_cast<double>(data.size());
    if (first_last.size() < 2) e.grad_ratio_min = e.grad_ratio_max = 1.0;

    const CertificationReport rep = certify(m, data.x, data.y, cfg.radii);
    std::size_t correct = 0;
    for (const auto& r : rep.records) {
      correct += r.correct();
      e.mean_margin += r.margin;
    }
    e.clean_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    e.mean_margin /= static_cast<double>(data.size());
    for (const auto& p : rep.curve) e.certified.push_back(p.accuracy);
    log.epochs.push_back(std::move(e));
  }
  return log;
}

}  // namespace bro
