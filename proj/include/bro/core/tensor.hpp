#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "bro/core/alloc_stats.hpp"
#include "bro/core/errors.hpp"

namespace bro {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

/// Dense row-major real tensor.
class Tensor {
 public:
  Tensor() : shape_{0} {}
  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    note_alloc(data_.size() * sizeof(double));
  }
  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_))
      throw ShapeError("Tensor: data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_string(shape_));
  }
  Tensor(const Tensor& o) : shape_(o.shape_), data_(o.data_) { note_alloc(data_.size() * sizeof(double)); }
  Tensor(Tensor&&) noexcept = default;
  Tensor& operator=(const Tensor& o) {
    if (this != &o) {
      shape_ = o.shape_;
      data_ = o.data_;
      note_alloc(data_.size() * sizeof(double));
    }
    return *this;
  }
  Tensor& operator=(Tensor&&) noexcept = default;

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor vector(std::vector<double> v) {
    Shape s{v.size()};
    return Tensor(std::move(s), std::move(v));
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
    return Tensor(Shape{rows, cols}, std::vector<double>(values));
  }
  static Tensor eye(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }
  template <class Rng>
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& x : t.data_) x = dist(rng);
    return t;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }

  double item() const {
    if (data_.size() != 1) throw ShapeError("Tensor::item on tensor of shape " + shape_string(shape_));
    return data_[0];
  }

  Tensor reshaped(Shape shape) const& {
    Tensor t(*this);
    t.reshape(std::move(shape));
    return t;
  }
  Tensor reshaped(Shape shape) && {
    reshape(std::move(shape));
    return std::move(*this);
  }
  void reshape(Shape shape) {
    if (shape_size(shape) != data_.size())
      throw ShapeError("reshape " + shape_string(shape_) + " -> " + shape_string(shape));
    shape_ = std::move(shape);
  }

  double norm() const {
    double s = 0.0;
    for (double x : data_) s += x * x;
    return std::sqrt(s);
  }
  double sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }
  double max_abs() const {
    double m = 0.0;
    for (double x : data_) m = std::max(m, std::abs(x));
    return m;
  }
  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
  }

  Tensor& operator+=(const Tensor& o) {
    check_same(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Tensor& operator-=(const Tensor& o) {
    check_same(o, "-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Tensor& operator*=(double a) {
    for (auto& x : data_) x *= a;
    return *this;
  }
  /// this += a * o
  void axpy(double a, const Tensor& o) {
    check_same(o, "axpy");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += a * o.data_[i];
  }

  friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
  friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
  friend Tensor operator*(double s, Tensor a) { return a *= s; }

  bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

 private:
  void check_same(const Tensor& o, const char* op) const {
    if (o.shape_ != shape_)
      throw ShapeError(std::string("Tensor ") + op + ": " + shape_string(shape_) + " vs " + shape_string(o.shape_));
  }

  Shape shape_;
  std::vector<double> data_;
};

inline double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw ShapeError("dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Complex tensor stored as separate real and imaginary planes.
class CTensor {
 public:
  CTensor() : shape_{0} {}
  explicit CTensor(Shape shape) : shape_(std::move(shape)), re_(shape_size(shape_), 0.0), im_(re_.size(), 0.0) {
    note_alloc(2 * re_.size() * sizeof(double));
  }
  CTensor(Shape shape, std::vector<double> re, std::vector<double> im)
      : shape_(std::move(shape)), re_(std::move(re)), im_(std::move(im)) {
    if (re_.size() != shape_size(shape_) || im_.size() != re_.size())
      throw ShapeError("CTensor: plane lengths do not match shape " + shape_string(shape_));
  }
  CTensor(const CTensor& o) : shape_(o.shape_), re_(o.re_), im_(o.im_) { note_alloc(2 * re_.size() * sizeof(double)); }
  CTensor(CTensor&&) noexcept = default;
  CTensor& operator=(const CTensor& o) {
    if (this != &o) {
      shape_ = o.shape_;
      re_ = o.re_;
      im_ = o.im_;
      note_alloc(2 * re_.size() * sizeof(double));
    }
    return *this;
  }
  CTensor& operator=(CTensor&&) noexcept = default;

  static CTensor from_real(const Tensor& t) {
    return CTensor(t.shape(), t.storage(), std::vector<double>(t.size(), 0.0));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return re_.size(); }

  std::vector<double>& re() noexcept { return re_; }
  std::vector<double>& im() noexcept { return im_; }
  const std::vector<double>& re() const noexcept { return re_; }
  const std::vector<double>& im() const noexcept { return im_; }

  Tensor real() const { return Tensor(shape_, re_); }
  Tensor imag() const { return Tensor(shape_, im_); }

  double norm() const {
    double s = 0.0;
    for (std::size_t i = 0; i < re_.size(); ++i) s += re_[i] * re_[i] + im_[i] * im_[i];
    return std::sqrt(s);
  }
  double max_abs_imag() const {
    double m = 0.0;
    for (double x : im_) m = std::max(m, std::abs(x));
    return m;
  }

 private:
  Shape shape_;
  std::vector<double> re_;
  std::vector<double> im_;
};

}  // namespace bro
