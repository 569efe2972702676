// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bro/bro.hpp"

using namespace bro;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double time_limit_s;  // 0: no limit
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Var weighted_sum(Tape& t, Var y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ops::sum(t, ops::mul(t, t.constant(Tensor::randn(t.value(y).shape(), rng)), y));
}

Outcome bro_orthogonality() {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> md(2, 64);
  double worst_orth = 0.0, worst_sym = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t m = md(rng);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, m - 1)(rng);
    const Tensor w = bro_orthogonalize(BroParam(Tensor::randn({m, n}, rng)));
    worst_orth = std::max(worst_orth, orthogonality_error(to_mat(w)));
    worst_sym = std::max(worst_sym, (w - ops::transpose(w)).norm());
  }
  return {worst_orth < 1e-10 && worst_sym < 1e-12,
          fmt("max ||W^T W - I||_F = %.2e, max ||W - W^T||_F = %.2e over 100 draws", worst_orth, worst_sym)};
}

Outcome eigenstructure() {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> md(2, 64);
  bool counts_ok = true;
  double worst_dev = 0.0;
  for (int i = 0; i < 50; ++i) {
    const std::size_t m = md(rng);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, m - 1)(rng);
    const auto ev = hermitian_eigenvalues(to_mat(bro_orthogonalize(BroParam(Tensor::randn({m, n}, rng)))));
    for (std::size_t k = 0; k < m; ++k) worst_dev = std::max(worst_dev, std::abs(ev[k] - (k < n ? -1.0 : 1.0)));
  }
  counts_ok = worst_dev < 1e-8;
  double worst_square = 0.0;
  for (std::size_t m : {1u, 2u, 5u, 8u, 16u}) {
    const Tensor w = block_reflector(Tensor::randn({m, m}, rng));
    worst_square = std::max(worst_square, (w + Tensor::eye(m)).norm());
  }
  return {counts_ok && worst_square < 1e-12,
          fmt("max eigenvalue deviation %.2e (n x -1, m-n x +1); square V: max ||W + I||_F = %.2e", worst_dev,
              worst_square)};
}

Outcome conv_oracle() {
  const auto cases = conv_oracle_suite(8, 8, 3);
  double apply = 0.0, orth = 0.0;
  std::size_t failed = 0;
  for (const auto& r : cases) {
    apply = std::max(apply, r.apply_error);
    orth = std::max(orth, r.orth_error);
    failed += !conv_oracle_passes(r);
  }
  return {failed == 0 && cases.size() == 75,
          fmt("%zu (c, s, n) cases, %zu failed; max rel. error %.2e, max orthogonality error %.2e", cases.size(),
              failed, apply, orth)};
}

Outcome padding_norms() {
  std::mt19937_64 rng(4);
  const BroConvKernel kernel{Tensor::randn({4, 2, 3, 3}, rng), 1.0, 1.0};
  const Tensor x = Tensor::randn({1000, 4, 6, 6}, rng);
  const Tensor kept = bro_conv_forward(kernel, x, {4, 4, 6, 3, true});
  const Tensor cropped = bro_conv_forward(kernel, x, {4, 4, 6, 3, false});
  const std::size_t per_in = 4 * 36, per_kept = kept.size() / 1000, per_crop = cropped.size() / 1000;
  double worst_keep = 0.0, worst_ratio = 0.0;
  for (std::size_t b = 0; b < 1000; ++b) {
    double nx = 0, nk = 0, nc = 0;
    for (std::size_t i = 0; i < per_in; ++i) nx += x[b * per_in + i] * x[b * per_in + i];
    for (std::size_t i = 0; i < per_kept; ++i) nk += kept[b * per_kept + i] * kept[b * per_kept + i];
    for (std::size_t i = 0; i < per_crop; ++i) nc += cropped[b * per_crop + i] * cropped[b * per_crop + i];
    worst_keep = std::max(worst_keep, std::abs(std::sqrt(nk) - std::sqrt(nx)) / std::sqrt(nx));
    worst_ratio = std::max(worst_ratio, std::sqrt(nc / nx));
  }
  return {worst_keep < 1e-9 && worst_ratio <= 1.0 + 1e-12,
          fmt("keep_padding max rel. norm change %.2e; cropped max ||Y||/||X|| = %.6f", worst_keep, worst_ratio)};
}

Outcome gradients() {
  std::mt19937_64 rng(5);
  std::vector<std::pair<std::string, double>> errs;
  const double h = 1e-6;
  errs.emplace_back("bro_dense", grad_check([](Tape& t, Var v) { return weighted_sum(t, ops::bro_weight(t, v), 1); },
                                            Tensor::randn({6, 3}, rng), h));
  const ConvGeometry g{3, 4, 5, 3, false};
  const Tensor cx = Tensor::randn({2, 3, 5, 5}, rng), cv = Tensor::randn({4, 2, 3, 3}, rng, 0.5);
  errs.emplace_back("bro_conv(v)", grad_check(
                                       [&](Tape& t, Var v) { return weighted_sum(t, ops::bro_conv(t, v, t.constant(cx), g), 2); },
                                       cv, h));
  errs.emplace_back("bro_conv(x)", grad_check(
                                       [&](Tape& t, Var x) { return weighted_sum(t, ops::bro_conv(t, t.constant(cv), x, g), 3); },
                                       cx, h));
  errs.emplace_back("maxmin", grad_check([](Tape& t, Var v) { return weighted_sum(t, ops::maxmin(t, v), 4); },
                                         Tensor::randn({2, 4, 3, 3}, rng), h));
  errs.emplace_back("l2_pool", grad_check([](Tape& t, Var v) { return weighted_sum(t, ops::l2_pool(t, v, 2), 5); },
                                          Tensor::randn({2, 2, 4, 4}, rng), h));
  const std::vector<std::size_t> labels{0, 2, 1};
  const Tensor logits = Tensor::randn({3, 4}, rng, 1.5);
  for (LossKind kind : {LossKind::la, LossKind::ce_cr})
    errs.emplace_back(std::string(kind == LossKind::la ? "la" : "ce_cr"),
                      grad_check([&](Tape& t, Var z) { return ops::classification_loss(t, z, labels, kind, {}); },
                                 logits, h));
  const Model m = build_model({1, 4, 4}, lipconvnet_mini(3, 4, 8), 6);
  const Tensor x = Tensor::randn({3, 1, 4, 4}, rng);
  double e2e = 0.0;
  for (std::size_t p = 0; p < m.params.size(); ++p)
    e2e = std::max(e2e, grad_check(
                            [&](Tape& t, Var v) {
                              auto params = bind_params(t, m, false);
                              params[p] = v;
                              return ops::classification_loss(t, forward(t, m, params, t.constant(x)), labels,
                                                              LossKind::la, {});
                            },
                            m.params[p], h));
  errs.emplace_back("end_to_end", e2e);
  bool pass = true;
  std::string detail;
  for (const auto& [name, e] : errs) {
    pass = pass && e < 1e-5;
    detail += fmt("%s %.1e  ", name.c_str(), e);
  }
  return {pass, detail};
}

Outcome la_ce_reduction() {
  std::mt19937_64 rng(7);
  const LossConfig cfg{1.0, 0.0, 0.0, 0.5, 1.0};
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t k = 2 + i % 9;
    const Tensor z = Tensor::randn({k}, rng, 3.0);
    worst = std::max(worst, std::abs(la_loss(z, i % k, cfg).loss - ce_loss(z, i % k).loss));
  }
  return {worst < 1e-12, fmt("max |LA - CE| = %.2e over 1000 logit vectors", worst)};
}

Outcome cr_ramp_identity() {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.5, 1.0);
  double worst = 0.0;
  for (int b = 0; b < 100; ++b) {
    std::vector<double> m(32 + b);
    for (auto& v : m) v = g(rng);
    const double tau = *std::max_element(m.begin(), m.end());
    worst = std::max(worst, std::abs(cr_risk(m, 1.0 / tau) - (ramp_risk(m, tau) - 1.0)));
  }
  return {worst < 1e-10, fmt("max |CR - (ramp - 1)| = %.2e over 100 batches", worst)};
}

Outcome certificate_soundness() {
  const auto all = toy_dataset(ToyKind::blobs, 300, 16, 8, {3, 2.0, 0.3}).reshaped({1, 4, 4});
  auto [train_set, test_set] = split(all, 200);
  Model m = build_model({1, 4, 4}, lipconvnet_mini(3), 8);
  TrainConfig cfg;
  cfg.seed = 8;
  cfg.epochs = 30;
  cfg.lr = 0.05;
  cfg.batch_size = 16;
  train(m, train_set, cfg);
  const auto rep = certify(m, test_set.x, test_set.y, {0.0});
  std::size_t certified = 0, inside_flips = 0, outside_flips = 0;
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    const auto& r = rep.records[i];
    if (!r.correct() || !(r.radius > 0.0) || std::isinf(r.radius)) continue;
    ++certified;
    inside_flips += pgd_attack(m, test_set.sample(i), r.label, 0.999 * r.radius, 50).flipped;
    outside_flips += pgd_attack(m, test_set.sample(i), r.label, 1.5 * r.radius, 50).flipped;
  }
  return {certified > 0 && inside_flips == 0 && outside_flips > 0,
          fmt("%zu certified test points; flips at 0.999 eps: %zu, at 1.5 eps: %zu (clean acc %.3f)", certified,
              inside_flips, outside_flips, rep.curve[0].accuracy)};
}

Outcome lot_instability() {
  const auto id = lot_orthogonalize(Tensor::eye(8), 10);
  std::size_t first = 0;
  while (first < id.condition.size() && !(id.condition[first] < 1.0 + 1e-6)) ++first;
  std::mt19937_64 rng(12159447);
  const auto kaiming = lot_orthogonalize(Tensor::randn({8, 8}, rng, std::sqrt(2.0 / 8.0)), 50);
  const double last = kaiming.condition.back();
  return {first < 10 && last > 1.0 + 1e-2,
          fmt("identity: cond < 1+1e-6 after %zu iteration(s); Kaiming seed 12159447: cond after 50 = %.3f", first + 1,
              last)};
}

Outcome rank_time_scaling() {
  std::vector<BenchResult> rows;
  std::string detail = "medians (s) at kappa 1/8, 1/4, 1/2, 3/4:";
  for (std::size_t n : {32u, 64u, 128u, 192u}) {
    BenchCase c;
    c.channels = 256;
    c.spatial = 16;
    c.rank = n;
    c.reps = 10;
    rows.push_back(run_bench(c));
    detail += fmt(" %.3f", rows.back().median_s);
  }
  return {non_decreasing_medians(rows), detail};
}

Outcome loss_curve_pathology() {
  const double eps = 1e-9;
  std::vector<double> jumps;
  for (double gamma : {0.25, 0.5}) {
    LossConfig cfg;
    cfg.cr_weight = gamma;
    const auto rows = loss_curves(cfg, {0.5 - eps, 0.5 + eps});
    jumps.push_back(rows[1].cecr_grad - rows[0].cecr_grad);
  }
  LossConfig cfg;  // T = 0.75, xi = 2, beta = 5
  const auto rows = loss_curves(cfg, {0.6, 0.99});
  const double ratio = std::abs(rows[1].la_grad) / std::abs(rows[0].la_grad);
  const bool jump_ok = std::abs(jumps[0]) > 1e-3 && std::abs(jumps[1]) > 1e-3 && std::abs(jumps[0] - jumps[1]) > 1e-3;
  return {jump_ok && ratio < 0.1,
          fmt("CE+CR derivative jump at p_t = 0.5: %.4f (gamma 0.25), %.4f (gamma 0.5); |LA'(0.99)| / |LA'(0.6)| = %.2e",
              jumps[0], jumps[1], ratio)};
}

Outcome skewness_direction() {
  std::string detail;
  bool pass = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto all = with_constant_feature(toy_dataset(ToyKind::two_rings, 400, 2, seed, {2, 1.0, 0.1}), 1.0);
    auto [train_set, test_set] = split(all, 300);
    double skew[2];
    int i = 0;
    for (LossKind kind : {LossKind::la, LossKind::ce_cr}) {
      Model m = build_model({3}, bronet_mini(2), seed);
      TrainConfig cfg;
      cfg.seed = seed;
      cfg.epochs = 60;
      cfg.lr = 0.05;
      cfg.schedule = Schedule::cosine;
      cfg.loss = kind;
      cfg.loss_cfg.cr_weight = 0.1;
      train(m, train_set, cfg);
      skew[i++] = certify(m, test_set.x, test_set.y, {0.0}).stats.skewness;
    }
    pass = pass && skew[0] <= skew[1];
    detail += fmt("seed %llu: %.3f <= %.3f  ", static_cast<unsigned long long>(seed), skew[0], skew[1]);
  }
  return {pass, "radius skewness LA vs CE+CR, " + detail};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "BRO orthogonality", 5.0, bro_orthogonality},
      {2, "Eigenstructure", 0.0, eigenstructure},
      {3, "Conv-oracle equivalence", 60.0, conv_oracle},
      {4, "Padding norm behaviour", 0.0, padding_norms},
      {5, "Gradient correctness", 0.0, gradients},
      {6, "LA to CE reduction", 0.0, la_ce_reduction},
      {7, "CR-ramp identity", 0.0, cr_ramp_identity},
      {8, "Certificate soundness", 300.0, certificate_soundness},
      {9, "LOT instability", 0.0, lot_instability},
      {10, "Rank-time scaling", 0.0, rank_time_scaling},
      {11, "Loss-curve pathology", 0.0, loss_curve_pathology},
      {12, "Skewness direction on two_rings", 0.0, skewness_direction},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.time_limit_s > 0.0 && secs > c.time_limit_s) {
      o.pass = false;
      o.detail += fmt(" [over time limit %.0f s]", c.time_limit_s);
    }
    failures += !o.pass;
    std::printf("%s  criterion %2d  %-32s %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
