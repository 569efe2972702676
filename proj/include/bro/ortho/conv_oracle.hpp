#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "bro/core/errors.hpp"
#include "bro/core/tensor.hpp"
#include "bro/ortho/bro_conv.hpp"

namespace bro {

struct ConvOracleCase {
  std::size_t channels = 0;
  std::size_t spatial = 0;
  std::size_t rank = 0;
  double apply_error = 0.0;  // relative, FFT path vs explicit matrix
  double orth_error = 0.0;   // max |M^T M - I|
};

inline constexpr double kConvOracleTolerance = 1e-8;

/// Pointwise (k = 1) BRO convolution against its explicit c s^2 x c s^2
/// matrix for one (c, s, n) on `samples` random inputs.
inline ConvOracleCase conv_oracle_case(std::size_t c, std::size_t s, std::size_t n, std::mt19937_64& rng,
                                       std::size_t samples = 4) {
  require(n >= 1 && n <= c, "conv_oracle: need 1 <= n <= c");
  const BroConvKernel kernel{Tensor::randn({c, n, 1, 1}, rng), 1.0, 1.0};
  const Tensor mat = materialize_conv_matrix(kernel, s);
  const std::size_t dim = c * s * s;
  ConvOracleCase out{c, s, n, 0.0, 0.0};
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < dim; ++j) {
      double acc = 0.0;
      for (std::size_t r = 0; r < dim; ++r) acc += mat(r, i) * mat(r, j);
      out.orth_error = std::max(out.orth_error, std::abs(acc - (i == j ? 1.0 : 0.0)));
    }
  const ConvGeometry geom{c, c, s, 1, false};
  for (std::size_t k = 0; k < samples; ++k) {
    const Tensor x = Tensor::randn({c, s, s}, rng);
    const Tensor y = bro_conv_forward(kernel, x, geom);
    double diff = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < dim; ++j) acc += mat(i, j) * x[j];
      diff += (y[i] - acc) * (y[i] - acc);
      norm += acc * acc;
    }
    out.apply_error = std::max(out.apply_error, std::sqrt(diff / norm));
  }
  return out;
}

/// Every c in {1, 2, 4, 8} and s in {2, 3, 4, 6, 8} within the caps, all n <= c.
inline std::vector<ConvOracleCase> conv_oracle_suite(std::size_t max_c, std::size_t max_s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<ConvOracleCase> out;
  for (std::size_t c : {1u, 2u, 4u, 8u}) {
    if (c > max_c) continue;
    for (std::size_t s : {2u, 3u, 4u, 6u, 8u}) {
      if (s > max_s) continue;
      for (std::size_t n = 1; n <= c; ++n) out.push_back(conv_oracle_case(c, s, n, rng));
    }
  }
  return out;
}

inline bool conv_oracle_passes(const ConvOracleCase& r) {
  return r.apply_error < kConvOracleTolerance && r.orth_error < kConvOracleTolerance;
}

}  // namespace bro
