#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

#include "bro/core/errors.hpp"
#include "bro/core/tensor.hpp"

namespace bro {

using cplx = std::complex<double>;

namespace detail {

inline std::size_t smallest_prime_factor(std::size_t n) {
  for (std::size_t p = 2; p * p <= n; ++p)
    if (n % p == 0) return p;
  return n;
}

// Table of the n-th roots of unity exp(sign * 2 pi i k / n), k < n.
inline std::vector<cplx> unit_roots(std::size_t n, int sign) {
  std::vector<cplx> roots(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    roots[k] = {std::cos(angle), std::sin(angle)};
  }
  return roots;
}

// Unnormalized DFT of in[0], in[stride], ... (n points) written to out[0..n).
// Decimation in time over the smallest prime factor; prime lengths use the
// direct O(n^2) sum. `roots` holds the root_n-th roots of unity, n | root_n.
// `scratch` needs room for 2n values.
inline void dft(const cplx* in, std::size_t stride, cplx* out, std::size_t n, const cplx* roots,
                std::size_t root_n, cplx* scratch) {
  if (n == 1) {
    out[0] = in[0];
    return;
  }
  const std::size_t step = root_n / n;
  const std::size_t p = smallest_prime_factor(n);
  if (p == n) {
    for (std::size_t k = 0; k < n; ++k) {
      cplx acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += in[j * stride] * roots[((j * k) % n) * step];
      out[k] = acc;
    }
    return;
  }
  const std::size_t m = n / p;
  cplx* sub = scratch;
  for (std::size_t r = 0; r < p; ++r) dft(in + r * stride, stride * p, sub + r * m, m, roots, root_n, scratch + n);
  for (std::size_t q = 0; q < p; ++q) {
    for (std::size_t k = 0; k < m; ++k) {
      const std::size_t idx = k + m * q;
      cplx acc = sub[k];
      for (std::size_t r = 1; r < p; ++r) acc += sub[r * m + k] * roots[((r * idx) % n) * step];
      out[idx] = acc;
    }
  }
}

// Unitary 2D transform of every trailing s x s slice, in place on split planes.
inline void transform_2d(std::vector<double>& re, std::vector<double>& im, std::size_t s, int sign) {
  const std::size_t plane = s * s;
  const std::size_t slices = plane ? re.size() / plane : 0;
  const double scale = 1.0 / static_cast<double>(s);
  const auto roots = unit_roots(s, sign);
  std::vector<cplx> line(s), out(s), scratch(2 * s);
  for (std::size_t b = 0; b < slices; ++b) {
    double* pr = re.data() + b * plane;
    double* pi = im.data() + b * plane;
    for (std::size_t i = 0; i < s; ++i) {
      for (std::size_t j = 0; j < s; ++j) line[j] = {pr[i * s + j], pi[i * s + j]};
      dft(line.data(), 1, out.data(), s, roots.data(), s, scratch.data());
      for (std::size_t j = 0; j < s; ++j) {
        pr[i * s + j] = out[j].real();
        pi[i * s + j] = out[j].imag();
      }
    }
    for (std::size_t j = 0; j < s; ++j) {
      for (std::size_t i = 0; i < s; ++i) line[i] = {pr[i * s + j], pi[i * s + j]};
      dft(line.data(), 1, out.data(), s, roots.data(), s, scratch.data());
      for (std::size_t i = 0; i < s; ++i) {
        pr[i * s + j] = out[i].real() * scale;
        pi[i * s + j] = out[i].imag() * scale;
      }
    }
  }
}

inline std::size_t square_trailing(const Shape& shape, const char* who) {
  if (shape.size() < 2) throw ShapeError(std::string(who) + ": need at least two dimensions");
  const std::size_t s = shape[shape.size() - 1];
  if (shape[shape.size() - 2] != s)
    throw ShapeError(std::string(who) + ": trailing dims must be square, got " + shape_string(shape));
  if (s == 0) throw ShapeError(std::string(who) + ": empty spatial size");
  return s;
}

}  // namespace detail

/// Unitary 2D DFT over the two trailing (square) dimensions.
inline CTensor fft2d(const CTensor& x) {
  const std::size_t s = detail::square_trailing(x.shape(), "fft2d");
  CTensor out(x);
  detail::transform_2d(out.re(), out.im(), s, -1);
  return out;
}

inline CTensor fft2d(const Tensor& x) {
  detail::square_trailing(x.shape(), "fft2d");
  return fft2d(CTensor::from_real(x));
}

/// Inverse of fft2d; also unitary.
inline CTensor ifft2d(const CTensor& x) {
  const std::size_t s = detail::square_trailing(x.shape(), "ifft2d");
  CTensor out(x);
  detail::transform_2d(out.re(), out.im(), s, +1);
  return out;
}

}  // namespace bro
