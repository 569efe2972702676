#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bro/core/errors.hpp"
#include "bro/core/tensor.hpp"

namespace bro {

struct Dataset {
  Tensor x;                       // n x sample_shape
  std::vector<std::size_t> y;
  Shape sample_shape;
  std::size_t classes = 0;

  std::size_t size() const { return y.size(); }
  bool empty() const { return y.empty(); }

  /// Same samples viewed with another per-sample shape of equal size.
  Dataset reshaped(Shape shape) const {
    require(shape_size(shape) == shape_size(sample_shape), "Dataset::reshaped: size mismatch");
    Dataset d = *this;
    Shape full = shape;
    full.insert(full.begin(), size());
    d.x.reshape(full);
    d.sample_shape = std::move(shape);
    return d;
  }

  Tensor sample(std::size_t i) const {
    const std::size_t per = shape_size(sample_shape);
    const auto src = x.data().subspan(i * per, per);
    return Tensor(sample_shape, std::vector<double>(src.begin(), src.end()));
  }

  /// Rows selected by index, in the given order.
  Dataset subset(const std::vector<std::size_t>& idx) const {
    const std::size_t per = shape_size(sample_shape);
    Shape full = sample_shape;
    full.insert(full.begin(), idx.size());
    Dataset d{Tensor(full), {}, sample_shape, classes};
    d.y.reserve(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (std::size_t j = 0; j < per; ++j) d.x[r * per + j] = x[idx[r] * per + j];
      d.y.push_back(y[idx[r]]);
    }
    return d;
  }
};

enum class ToyKind { blobs, two_rings };

inline ToyKind parse_toy_kind(std::string_view s) {
  if (s == "blobs") return ToyKind::blobs;
  if (s == "two_rings") return ToyKind::two_rings;
  throw ContractError("unknown dataset kind '" + std::string(s) + "'");
}

/// blobs: class k centred at (separation / sqrt 2) e_k, isotropic noise
///        `noise`, so centres are pairwise `separation` apart. Needs d >= classes.
/// two_rings: two classes on concentric shells of radius 1 and 1 + separation,
///        radial jitter uniform in +-noise.
struct ToyParams {
  std::size_t classes = 2;
  double separation = 1.0;
  double noise = 0.1;
};

inline Dataset toy_dataset(ToyKind kind, std::size_t n, std::size_t d, std::uint64_t seed, ToyParams p = {}) {
  require(d > 0, "toy_dataset: d must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t classes = kind == ToyKind::two_rings ? 2 : p.classes;
  require(classes >= 2, "toy_dataset: need at least two classes");
  if (kind == ToyKind::blobs) require(d >= classes, "toy_dataset: blobs need d >= classes");
  Dataset ds{Tensor({n, d}), std::vector<std::size_t>(n), {d}, classes};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % classes;
    ds.y[i] = label;
    double* row = ds.x.data().data() + i * d;
    if (kind == ToyKind::blobs) {
      for (std::size_t j = 0; j < d; ++j) row[j] = p.noise * gauss(rng);
      row[label] += p.separation / std::sqrt(2.0);
    } else {
      double n2 = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        row[j] = gauss(rng);
        n2 += row[j] * row[j];
      }
      const double r = 1.0 + static_cast<double>(label) * p.separation +
                       p.noise * (2.0 * std::uniform_real_distribution<double>(0.0, 1.0)(rng) - 1.0);
      const double scale = r / std::sqrt(n2);
      for (std::size_t j = 0; j < d; ++j) row[j] *= scale;
    }
  }
  return ds;
}

/// Flat samples extended by one constant coordinate. Bias-free Lipschitz
/// networks are positively homogeneous, so this is their only offset.
inline Dataset with_constant_feature(const Dataset& ds, double value) {
  require(ds.sample_shape.size() == 1, "with_constant_feature: needs flat samples");
  const std::size_t d = ds.sample_shape[0];
  Dataset out{Tensor({ds.size(), d + 1}), ds.y, {d + 1}, ds.classes};
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) out.x(i, j) = ds.x(i, j);
    out.x(i, d) = value;
  }
  return out;
}

/// Deterministic split: the first `train` samples and the rest.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, std::size_t train) {
  require(train <= ds.size(), "split: train size exceeds dataset");
  std::vector<std::size_t> a(train), b(ds.size() - train);
  std::iota(a.begin(), a.end(), 0);
  std::iota(b.begin(), b.end(), train);
  return {ds.subset(a), ds.subset(b)};
}

}  // namespace bro
