#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <type_traits>
#include <vector>

#include "bro/core/alloc_stats.hpp"
#include "bro/core/errors.hpp"
#include "bro/core/tensor.hpp"

namespace bro {

template <class T>
struct is_complex : std::false_type {};
template <class T>
struct is_complex<std::complex<T>> : std::true_type {};

template <class T>
inline T conj_of(const T& x) {
  if constexpr (is_complex<T>::value)
    return std::conj(x);
  else
    return x;
}

template <class T>
inline double abs2(const T& x) {
  if constexpr (is_complex<T>::value)
    return std::norm(x);
  else
    return x * x;
}

template <class T>
inline double real_of(const T& x) {
  if constexpr (is_complex<T>::value)
    return x.real();
  else
    return x;
}

/// Small dense row-major matrix over double or complex<double>.
template <class T>
class Mat {
 public:
  using value_type = T;

  Mat() = default;
  Mat(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, T{}) {
    note_alloc(data_.size() * sizeof(T));
  }
  Mat(const Mat& o) : rows_(o.rows_), cols_(o.cols_), data_(o.data_) { note_alloc(data_.size() * sizeof(T)); }
  Mat(Mat&&) noexcept = default;
  Mat& operator=(const Mat& o) {
    if (this != &o) {
      rows_ = o.rows_;
      cols_ = o.cols_;
      data_ = o.data_;
      note_alloc(data_.size() * sizeof(T));
    }
    return *this;
  }
  Mat& operator=(Mat&&) noexcept = default;

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  T* row(std::size_t i) { return data_.data() + i * cols_; }
  const T* row(std::size_t i) const { return data_.data() + i * cols_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  Mat& operator+=(const Mat& o) {
    check_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Mat& operator-=(const Mat& o) {
    check_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Mat& operator*=(T a) {
    for (auto& x : data_) x *= a;
    return *this;
  }
  friend Mat operator+(Mat a, const Mat& b) { return a += b; }
  friend Mat operator-(Mat a, const Mat& b) { return a -= b; }
  friend Mat operator*(T s, Mat a) { return a *= s; }

 private:
  void check_same(const Mat& o) const {
    if (o.rows_ != rows_ || o.cols_ != cols_) throw ShapeError("Mat: dimension mismatch");
  }

  std::size_t rows_ = 0, cols_ = 0;
  std::vector<T> data_;
};

using RMat = Mat<double>;
using CMat = Mat<std::complex<double>>;

template <class T>
Mat<T> adjoint(const Mat<T>& a) {
  Mat<T> t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = conj_of(a(i, j));
  return t;
}

template <class T>
Mat<T> matmul(const Mat<T>& a, const Mat<T>& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  Mat<T> c(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    T* ci = c.row(i);
    const T* ai = a.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const T aik = ai[k];
      const T* bk = b.row(k);
      for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

/// a^H b without materializing the adjoint.
template <class T>
Mat<T> matmul_adj(const Mat<T>& a, const Mat<T>& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_adj: row counts differ");
  Mat<T> c(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const T* ak = a.row(k);
    const T* bk = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const T aki = conj_of(ak[i]);
      T* ci = c.row(i);
      for (std::size_t j = 0; j < n; ++j) ci[j] += aki * bk[j];
    }
  }
  return c;
}

template <class T>
double frobenius(const Mat<T>& a) {
  double s = 0.0;
  for (const auto& x : a.storage()) s += abs2(x);
  return std::sqrt(s);
}

/// ||a^H a - I||_F
template <class T>
double orthogonality_error(const Mat<T>& a) {
  auto g = matmul_adj(a, a);
  for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) -= T{1};
  return frobenius(g);
}

/// Cholesky factor L (lower, real positive diagonal) of a Hermitian positive
/// definite matrix. Pivots below 1e-12 * trace raise SingularParameter.
template <class T>
Mat<T> cholesky(const Mat<T>& a) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw ShapeError("cholesky: matrix not square");
  double trace = 0.0;
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    trace += real_of(a(i, i));
    max_diag = std::max(max_diag, real_of(a(i, i)));
  }
  const double threshold = 1e-12 * std::abs(trace);
  Mat<T> l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = real_of(a(j, j));
    for (std::size_t k = 0; k < j; ++k) d -= abs2(l(j, k));
    if (!(d > threshold) || !std::isfinite(d)) {
      const double cond = d > 0.0 ? max_diag / d : std::numeric_limits<double>::infinity();
      throw SingularParameter(j, cond, "cholesky");
    }
    const double djj = std::sqrt(d);
    l(j, j) = T{djj};
    for (std::size_t i = j + 1; i < n; ++i) {
      T s = a(i, j);
      const T* li = l.row(i);
      const T* lj = l.row(j);
      for (std::size_t k = 0; k < j; ++k) s -= li[k] * conj_of(lj[k]);
      l(i, j) = s / djj;
    }
  }
  return l;
}

/// Solves (L L^H) X = B given the Cholesky factor L.
template <class T>
Mat<T> cholesky_solve(const Mat<T>& l, Mat<T> b) {
  const std::size_t n = l.rows();
  if (b.rows() != n) throw ShapeError("cholesky_solve: rhs row count");
  const std::size_t k = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    T* bi = b.row(i);
    for (std::size_t p = 0; p < i; ++p) {
      const T lip = l(i, p);
      const T* bp = b.row(p);
      for (std::size_t c = 0; c < k; ++c) bi[c] -= lip * bp[c];
    }
    const double inv = 1.0 / real_of(l(i, i));
    for (std::size_t c = 0; c < k; ++c) bi[c] *= inv;
  }
  for (std::size_t i = n; i-- > 0;) {
    T* bi = b.row(i);
    for (std::size_t p = i + 1; p < n; ++p) {
      const T lpi = conj_of(l(p, i));
      const T* bp = b.row(p);
      for (std::size_t c = 0; c < k; ++c) bi[c] -= lpi * bp[c];
    }
    const double inv = 1.0 / real_of(l(i, i));
    for (std::size_t c = 0; c < k; ++c) bi[c] *= inv;
  }
  return b;
}

/// General square solve A X = B by LU with partial pivoting.
template <class T>
Mat<T> lu_solve(Mat<T> a, Mat<T> b) {
  const std::size_t n = a.rows();
  if (a.cols() != n || b.rows() != n) throw ShapeError("lu_solve: dimension mismatch");
  const std::size_t k = b.cols();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    double best = abs2(a(col, col));
    for (std::size_t r = col + 1; r < n; ++r)
      if (abs2(a(r, col)) > best) best = abs2(a(r, col)), piv = r;
    if (best == 0.0) throw SingularParameter(col, std::numeric_limits<double>::infinity(), "lu_solve");
    if (piv != col) {
      std::swap_ranges(a.row(col), a.row(col) + n, a.row(piv));
      std::swap_ranges(b.row(col), b.row(col) + k, b.row(piv));
    }
    const T inv = T{1} / a(col, col);
    for (std::size_t r = col + 1; r < n; ++r) {
      const T f = a(r, col) * inv;
      if (f == T{}) continue;
      T* ar = a.row(r);
      const T* ac = a.row(col);
      for (std::size_t c = col; c < n; ++c) ar[c] -= f * ac[c];
      T* br = b.row(r);
      const T* bc = b.row(col);
      for (std::size_t c = 0; c < k; ++c) br[c] -= f * bc[c];
    }
  }
  for (std::size_t i = n; i-- > 0;) {
    T* bi = b.row(i);
    for (std::size_t p = i + 1; p < n; ++p) {
      const T aip = a(i, p);
      const T* bp = b.row(p);
      for (std::size_t c = 0; c < k; ++c) bi[c] -= aip * bp[c];
    }
    const T inv = T{1} / a(i, i);
    for (std::size_t c = 0; c < k; ++c) bi[c] *= inv;
  }
  return b;
}

// Conversions between tensors and matrices.

inline RMat to_mat(const Tensor& t) {
  if (t.rank() != 2) throw ShapeError("to_mat: expected a matrix, got " + shape_string(t.shape()));
  RMat m(t.dim(0), t.dim(1));
  std::copy(t.storage().begin(), t.storage().end(), m.storage().begin());
  return m;
}

inline Tensor to_tensor(const RMat& m) { return Tensor({m.rows(), m.cols()}, m.storage()); }

inline CMat to_cmat(const CTensor& t) {
  if (t.rank() != 2) throw ShapeError("to_cmat: expected a matrix, got " + shape_string(t.shape()));
  CMat m(t.dim(0), t.dim(1));
  for (std::size_t i = 0; i < t.size(); ++i) m.storage()[i] = {t.re()[i], t.im()[i]};
  return m;
}

inline CTensor to_ctensor(const CMat& m) {
  CTensor t({m.rows(), m.cols()});
  for (std::size_t i = 0; i < t.size(); ++i) {
    t.re()[i] = m.storage()[i].real();
    t.im()[i] = m.storage()[i].imag();
  }
  return t;
}

/// Solves a X = b for Hermitian positive definite a via Cholesky.
inline CTensor hermitian_solve(const CTensor& a, const CTensor& b) {
  if (a.rank() != 2 || a.dim(0) != a.dim(1)) throw ShapeError("hermitian_solve: a must be square");
  if (b.rank() != 2 || b.dim(0) != a.dim(0)) throw ShapeError("hermitian_solve: b row count must match a");
  const CMat am = to_cmat(a);
  const std::size_t n = am.rows();
  double scale = 0.0;
  for (const auto& x : am.storage()) scale = std::max(scale, std::abs(x));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j)
      if (std::abs(am(i, j) - std::conj(am(j, i))) > 1e-10 * std::max(1.0, scale))
        throw ContractError("hermitian_solve: matrix is not Hermitian");
  return to_ctensor(cholesky_solve(cholesky(am), to_cmat(b)));
}

// Spectral diagnostics (Eigen's self-adjoint solver).

/// Eigenvalues of a symmetric (Hermitian) matrix in ascending order.
template <class T>
std::vector<double> hermitian_eigenvalues(const Mat<T>& a) {
  using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const EMat> m(a.storage().data(), static_cast<Eigen::Index>(a.rows()),
                           static_cast<Eigen::Index>(a.cols()));
  Eigen::SelfAdjointEigenSolver<EMat> solver(EMat(m), Eigen::EigenvaluesOnly);
  const auto& ev = solver.eigenvalues();
  return std::vector<double>(ev.data(), ev.data() + ev.size());
}

/// cond(a^H a) = (sigma_max / sigma_min)^2.
template <class T>
double gram_condition(const Mat<T>& a) {
  const auto ev = hermitian_eigenvalues(matmul_adj(a, a));
  if (ev.empty()) return 1.0;
  if (!(ev.front() > 0.0)) return std::numeric_limits<double>::infinity();
  return ev.back() / ev.front();
}

}  // namespace bro
