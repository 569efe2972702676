#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <ostream>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "bro/core/alloc_stats.hpp"
#include "bro/core/errors.hpp"
#include "bro/core/fft.hpp"
#include "bro/core/linalg.hpp"
#include "bro/core/tensor.hpp"
#include "bro/ortho/bro_conv.hpp"
#include "bro/ortho/bro_dense.hpp"
#include "bro/ortho/cayley.hpp"
#include "bro/ortho/lot.hpp"

namespace bro {

enum class BenchMethod { bro, cayley, lot };
enum class BenchPhase { param_transform, input_transform };

inline std::string_view bench_method_name(BenchMethod m) {
  return m == BenchMethod::bro ? "bro" : m == BenchMethod::cayley ? "cayley" : "lot";
}
inline std::string_view bench_phase_name(BenchPhase p) {
  return p == BenchPhase::param_transform ? "param_transform" : "input_transform";
}
inline BenchMethod parse_bench_method(std::string_view s) {
  if (s == "bro") return BenchMethod::bro;
  if (s == "cayley") return BenchMethod::cayley;
  if (s == "lot") return BenchMethod::lot;
  throw ContractError("unknown method '" + std::string(s) + "'");
}

inline constexpr std::size_t kMinBenchReps = 10;
inline constexpr std::size_t kMaxBenchChannels = 512;
inline constexpr std::size_t kMaxBenchSpatial = 32;

/// Convolution geometry when spatial > 0, otherwise a dense m = channels operator.
struct BenchCase {
  BenchMethod method = BenchMethod::bro;
  BenchPhase phase = BenchPhase::param_transform;
  std::size_t channels = 16;
  std::size_t spatial = 0;
  std::size_t kernel = 3;
  std::size_t rank = 8;      // BRO only
  std::size_t lot_iters = 10;
  std::size_t batch = 1;     // input transform only
  std::size_t reps = kMinBenchReps;
  std::uint64_t seed = 0;

  bool conv() const { return spatial > 0; }

  void validate() const {
    require(reps >= kMinBenchReps, "bench: repetitions must be >= " + std::to_string(kMinBenchReps));
    require(channels >= 1 && channels <= kMaxBenchChannels,
            "bench: channels must lie in [1, " + std::to_string(kMaxBenchChannels) + "]");
    require(spatial <= kMaxBenchSpatial, "bench: spatial size must be <= " + std::to_string(kMaxBenchSpatial));
    if (method == BenchMethod::bro) require(rank >= 1 && rank < channels, "bench: BRO needs 0 < rank < channels");
    if (method == BenchMethod::lot) require(lot_iters >= 1, "bench: LOT needs iters >= 1");
    if (conv()) require(kernel % 2 == 1, "bench: kernel size must be odd");
    require(batch >= 1, "bench: batch must be positive");
  }
};

struct BenchResult {
  BenchCase config;
  double median_s = 0.0;
  double min_s = 0.0;
  double max_s = 0.0;
  std::size_t alloc_bytes = 0;  // per repetition, from the library's allocation counters
  std::size_t allocations = 0;
  std::string timer_note;
};

/// Median (midpoint for even counts), min and max of a set of timings.
struct TimingSummary {
  double median = 0.0, min = 0.0, max = 0.0;
};

inline TimingSummary summarize_timings(std::vector<double> t) {
  require(!t.empty(), "summarize_timings: no samples");
  std::sort(t.begin(), t.end());
  const std::size_t n = t.size();
  return {n % 2 ? t[n / 2] : 0.5 * (t[n / 2 - 1] + t[n / 2]), t.front(), t.back()};
}

inline std::string timer_note() {
  using clock = std::chrono::steady_clock;
  const double tick = static_cast<double>(clock::period::num) / static_cast<double>(clock::period::den);
  return "steady_clock tick " + std::to_string(tick) + " s";
}

namespace detail {

// Per-frequency dense c x c matrices from a c x c x N x N spectrum, one per
// mirror pair; `make` maps the gathered spectrum matrix to the operator.
inline std::vector<CMat> per_frequency(const CTensor& spec, const std::function<CMat(const CMat&)>& make) {
  const std::size_t grid = spec.dim(2), plane = grid * grid;
  std::vector<CMat> out;
  for (std::size_t f = 0; f < plane; ++f)
    if (mirror_frequency(f, grid) >= f) out.push_back(make(spectrum_matrix(spec, f)));
  return out;
}

inline CMat lot_matrix(const CMat& v, std::size_t iters) { return lot_newton(v, iters, false).w; }

// Applies dense per-frequency matrices (stored for canonical frequencies) to a
// b x c x N x N spectrum.
inline CTensor apply_dense_spectrum(const std::vector<CMat>& mats, const CTensor& xs) {
  const std::size_t batch = xs.dim(0), c = xs.dim(1), grid = xs.dim(2), plane = grid * grid;
  CTensor out(xs.shape());
  std::vector<std::size_t> slot(plane);
  std::vector<bool> conj(plane, false);
  for (std::size_t f = 0, k = 0; f < plane; ++f) {
    const std::size_t mf = mirror_frequency(f, grid);
    if (mf < f) {
      slot[f] = slot[mf];
      conj[f] = true;
    } else {
      slot[f] = k++;
    }
  }
  std::vector<cplx> x(c);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t f = 0; f < plane; ++f) {
      for (std::size_t a = 0; a < c; ++a) {
        const std::size_t idx = (b * c + a) * plane + f;
        x[a] = {xs.re()[idx], conj[f] ? -xs.im()[idx] : xs.im()[idx]};
      }
      const CMat& w = mats[slot[f]];
      for (std::size_t a = 0; a < c; ++a) {
        cplx acc{};
        const cplx* row = w.row(a);
        for (std::size_t j = 0; j < c; ++j) acc += row[j] * x[j];
        const std::size_t idx = (b * c + a) * plane + f;
        out.re()[idx] = acc.real();
        out.im()[idx] = conj[f] ? -acc.imag() : acc.imag();
      }
    }
  return out;
}

}  // namespace detail

/// Times one case: median of `reps` runs on a monotonic clock, after one
/// untimed warm-up run. Allocation counters cover one repetition.
inline BenchResult run_bench(const BenchCase& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const std::size_t c = cfg.channels;
  const std::size_t grid = cfg.conv() ? cfg.spatial + 2 * (cfg.kernel / 2) : 0;
  const std::size_t cols = cfg.method == BenchMethod::bro ? cfg.rank : c;
  const double std_dev = 1.0 / std::sqrt(static_cast<double>(c));
  const Tensor v = cfg.conv() ? Tensor::randn({c, cols, cfg.kernel, cfg.kernel}, rng, std_dev)
                              : Tensor::randn({c, cols}, rng, std_dev);

  std::function<CMat(const CMat&)> make;
  switch (cfg.method) {
    case BenchMethod::bro: make = [](const CMat& m) { return materialize(factor_reflector(m)); }; break;
    case BenchMethod::cayley: make = [](const CMat& m) { return cayley(m); }; break;
    case BenchMethod::lot: make = [it = cfg.lot_iters](const CMat& m) { return detail::lot_matrix(m, it); }; break;
  }

  std::function<void()> work;
  // Objects prepared outside the timed region for the input-transform phase.
  std::shared_ptr<BroConvOperator> bro_op;
  std::vector<CMat> dense_ops;
  Tensor x;
  RMat dense_w;
  ReflectorFactor<double> dense_factor;
  double sink = 0.0;

  if (cfg.phase == BenchPhase::param_transform) {
    if (cfg.conv()) {
      if (cfg.method == BenchMethod::bro)
        work = [&] { sink += static_cast<double>(BroConvOperator(v, grid).factored_frequencies()); };
      else
        work = [&] { sink += static_cast<double>(detail::per_frequency(kernel_spectrum(v, grid), make).size()); };
    } else {
      switch (cfg.method) {
        case BenchMethod::bro: work = [&] { sink += materialize(factor_reflector(to_mat(v)))(0, 0); }; break;
        case BenchMethod::cayley: work = [&] { sink += cayley(to_mat(v))(0, 0); }; break;
        case BenchMethod::lot: work = [&] { sink += lot_newton(to_mat(v), cfg.lot_iters, false).w(0, 0); }; break;
      }
    }
  } else {
    if (cfg.conv()) {
      x = Tensor::randn({cfg.batch, c, grid, grid}, rng);
      if (cfg.method == BenchMethod::bro) {
        bro_op = std::make_shared<BroConvOperator>(v, grid);
        work = [&] { sink += ifft2d(bro_op->apply_spectrum(fft2d(x))).re()[0]; };
      } else {
        dense_ops = detail::per_frequency(kernel_spectrum(v, grid), make);
        work = [&] { sink += ifft2d(detail::apply_dense_spectrum(dense_ops, fft2d(x))).re()[0]; };
      }
    } else {
      x = Tensor::randn({cfg.batch, c}, rng);
      if (cfg.method == BenchMethod::bro) {
        dense_factor = factor_reflector(to_mat(v));
        work = [&] {
          std::vector<double> y(c), scratch(cfg.rank);
          for (std::size_t b = 0; b < cfg.batch; ++b) {
            apply_reflector(dense_factor, x.data().data() + b * c, y.data(), scratch.data());
            sink += y[0];
          }
        };
      } else {
        dense_w = cfg.method == BenchMethod::cayley ? cayley(to_mat(v)) : lot_newton(to_mat(v), cfg.lot_iters, false).w;
        work = [&] { sink += matmul(to_mat(x), adjoint(dense_w))(0, 0); };
      }
    }
  }

  work();  // warm-up
  reset_alloc_stats();
  std::vector<double> times;
  times.reserve(cfg.reps);
  for (std::size_t r = 0; r < cfg.reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    work();
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  const AllocStats stats = alloc_stats();
  const TimingSummary ts = summarize_timings(times);
  BenchResult res{cfg, ts.median, ts.min, ts.max, stats.bytes / cfg.reps, stats.allocations / cfg.reps, timer_note()};
  if (!std::isfinite(sink)) res.timer_note += "; non-finite output";
  return res;
}

inline constexpr std::string_view kBenchCsvHeader =
    "method,phase,m,c,s,k,n,kappa,iters,batch,reps,median_s,min_s,max_s,alloc_bytes,allocations";

inline void write_bench_csv(std::ostream& os, const std::vector<BenchResult>& rows, bool header = true) {
  if (header) os << kBenchCsvHeader << '\n';
  for (const auto& r : rows) {
    const auto& c = r.config;
    const std::size_t n = c.method == BenchMethod::bro ? c.rank : 0;
    const double kappa = n ? static_cast<double>(n) / static_cast<double>(c.channels) : 0.0;
    os << bench_method_name(c.method) << ',' << bench_phase_name(c.phase) << ',' << (c.conv() ? 0 : c.channels)
       << ',' << (c.conv() ? c.channels : 0) << ',' << c.spatial << ',' << (c.conv() ? c.kernel : 0) << ',' << n
       << ',' << kappa << ',' << (c.method == BenchMethod::lot ? c.lot_iters : 0) << ',' << c.batch << ',' << c.reps
       << ',' << r.median_s << ',' << r.min_s << ',' << r.max_s << ',' << r.alloc_bytes << ',' << r.allocations
       << '\n';
  }
}

/// True when medians never decrease along the sequence.
inline bool non_decreasing_medians(const std::vector<BenchResult>& rows) {
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].median_s < rows[i - 1].median_s) return false;
  return true;
}

}  // namespace bro
