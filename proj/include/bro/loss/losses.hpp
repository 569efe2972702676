#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <span>
#include <vector>

#include "bro/core/errors.hpp"
#include "bro/core/tensor.hpp"

namespace bro {

struct LossConfig {
  double temperature = 0.75;  // T
  double offset = 2.0;        // xi
  double anneal = 5.0;        // beta
  double cr_weight = 0.5;     // gamma
  double ramp_width = 1.0;    // tau

  void validate() const {
    require(temperature > 0.0, "LossConfig: temperature must be positive");
    require(offset >= 0.0, "LossConfig: offset must be non-negative");
    require(anneal >= 0.0, "LossConfig: anneal must be non-negative");
    require(cr_weight >= 0.0, "LossConfig: cr_weight must be non-negative");
    require(ramp_width > 0.0, "LossConfig: ramp_width must be positive");
  }
};

struct LossResult {
  double loss = 0.0;
  Tensor grad;
  bool saturated = false;  // p_t fell below the clamp
};

inline constexpr double kProbFloor = 1e-300;

namespace detail {

struct Softmax {
  std::vector<double> p;
  double log_pt = 0.0;
  double one_minus_pt = 0.0;  // summed over the other classes, not 1 - p_t
};

inline Softmax softmax_at(std::span<const double> u, std::size_t t) {
  const double mx = *std::max_element(u.begin(), u.end());
  Softmax s;
  s.p.resize(u.size());
  double z = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) z += (s.p[k] = std::exp(u[k] - mx));
  for (auto& x : s.p) x /= z;
  s.log_pt = (u[t] - mx) - std::log(z);
  for (std::size_t k = 0; k < u.size(); ++k)
    if (k != t) s.one_minus_pt += s.p[k];
  return s;
}

inline void check_logits(std::span<const double> z, std::size_t t) {
  require(z.size() >= 2, "loss: need at least two classes");
  require(t < z.size(), "loss: label out of range");
}

}  // namespace detail

/// Cross-entropy -log softmax(z)_t.
inline LossResult ce_loss(const Tensor& z, std::size_t t) {
  detail::check_logits(z.data(), t);
  auto s = detail::softmax_at(z.data(), t);
  LossResult r;
  r.loss = -s.log_pt;
  r.grad = Tensor({z.size()}, s.p);
  r.grad[t] -= 1.0;
  return r;
}

/// Logit annealing: p = softmax((z - xi e_t)/T), loss = -T (1-p_t)^beta log p_t.
inline LossResult la_loss(const Tensor& z, std::size_t t, const LossConfig& cfg) {
  cfg.validate();
  detail::check_logits(z.data(), t);
  const std::size_t k = z.size();
  std::vector<double> u(k);
  for (std::size_t i = 0; i < k; ++i) u[i] = (z[i] - (i == t ? cfg.offset : 0.0)) / cfg.temperature;
  auto s = detail::softmax_at(u, t);

  LossResult r;
  double log_pt = s.log_pt;
  if (log_pt < std::log(kProbFloor)) {
    log_pt = std::log(kProbFloor);
    r.saturated = true;
  }
  const double pt = std::exp(log_pt);
  const double q = s.one_minus_pt;
  const double beta = cfg.anneal;
  const double q_beta = beta == 0.0 ? 1.0 : std::pow(q, beta);
  r.loss = -cfg.temperature * q_beta * log_pt;

  // dL/dp_t, then dp_t/du_i = p_t (delta_ti - p_i) and du/dz = 1/T.
  double dq_term = 0.0;
  if (beta != 0.0 && q > 0.0) dq_term = beta * std::pow(q, beta - 1.0) * log_pt;
  const double dl_dpt = cfg.temperature * (dq_term - q_beta / pt);
  r.grad = Tensor({k});
  for (std::size_t i = 0; i < k; ++i) {
    const double dpt_du = pt * ((i == t ? 1.0 : 0.0) - s.p[i]);
    r.grad[i] = dl_dpt * dpt_du / cfg.temperature;
  }
  return r;
}

/// Cross-entropy minus gamma * max(margin, 0). At margin 0 the regularizer
/// takes its inactive branch.
inline LossResult ce_cr_loss(const Tensor& z, std::size_t t, const LossConfig& cfg) {
  cfg.validate();
  LossResult r = ce_loss(z, t);
  std::size_t runner = t == 0 ? 1 : 0;
  for (std::size_t i = 0; i < z.size(); ++i)
    if (i != t && z[i] > z[runner]) runner = i;
  const double m = z[t] - z[runner];
  if (m > 0.0) {
    r.loss -= cfg.cr_weight * m;
    r.grad[t] -= cfg.cr_weight;
    r.grad[runner] += cfg.cr_weight;
  }
  return r;
}

/// 1 for m <= 0, 0 for m >= tau, linear in between.
inline double ramp_loss(double m, double tau) {
  require(tau > 0.0, "ramp_loss: tau must be positive");
  if (m >= tau) return 0.0;
  if (m <= 0.0) return 1.0;
  return 1.0 - m / tau;
}

/// Mean of the regularizer alone, -gamma * max(m, 0).
inline double cr_risk(std::span<const double> margins, double gamma) {
  require(!margins.empty(), "cr_risk: empty batch");
  double acc = 0.0;
  for (double m : margins) acc += -gamma * std::max(m, 0.0);
  return acc / static_cast<double>(margins.size());
}

inline double ramp_risk(std::span<const double> margins, double tau) {
  require(!margins.empty(), "ramp_risk: empty batch");
  double acc = 0.0;
  for (double m : margins) acc += ramp_loss(m, tau);
  return acc / static_cast<double>(margins.size());
}

struct LossCurvePoint {
  double p_t = 0.0;
  double la = 0.0;
  double la_grad = 0.0;
  double ce = 0.0;
  double cecr = 0.0;
  double cecr_grad = 0.0;
};

/// Two-class reduction: p_t is the plain softmax probability of the target,
/// realised by logits (g, 0) with g = log(p_t / (1 - p_t)). Derivatives are
/// with respect to p_t.
inline std::vector<LossCurvePoint> loss_curves(const LossConfig& cfg, const std::vector<double>& grid) {
  cfg.validate();
  std::vector<LossCurvePoint> out;
  out.reserve(grid.size());
  for (double p : grid) {
    require(p > 0.0 && p < 1.0, "loss_curves: grid points must lie in (0, 1)");
    const double g = std::log(p) - std::log1p(-p);
    const double dg_dp = 1.0 / (p * (1.0 - p));
    const Tensor z({2}, std::vector<double>{g, 0.0});
    const auto la = la_loss(z, 0, cfg);
    const auto ce = ce_loss(z, 0);
    const auto cr = ce_cr_loss(z, 0, cfg);
    out.push_back({p, la.loss, la.grad[0] * dg_dp, ce.loss, cr.loss, cr.grad[0] * dg_dp});
  }
  return out;
}

inline std::vector<double> uniform_grid(double lo, double hi, std::size_t points) {
  require(points >= 2 && lo < hi, "uniform_grid: need lo < hi and at least two points");
  std::vector<double> g(points);
  for (std::size_t i = 0; i < points; ++i)
    g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  return g;
}

inline void write_loss_curves_csv(std::ostream& os, const std::vector<LossCurvePoint>& rows) {
  const auto old = os.precision(std::numeric_limits<double>::max_digits10);
  os << "p_t,la,la_grad,ce,cecr,cecr_grad\n";
  for (const auto& r : rows)
    os << r.p_t << ',' << r.la << ',' << r.la_grad << ',' << r.ce << ',' << r.cecr << ',' << r.cecr_grad << '\n';
  os.precision(old);
}

}  // namespace bro
