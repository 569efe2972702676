#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "bro/core/fft.hpp"
#include "bro/core/linalg.hpp"
#include "bro/core/tape.hpp"
#include "bro/core/tensor.hpp"
#include "bro/ortho/reflector.hpp"

namespace bro {

/// Channel and spatial layout of one BRO convolution. Work happens on the
/// padded grid of side spatial + 2 * (kernel / 2).
struct ConvGeometry {
  std::size_t channels_in = 0;
  std::size_t channels_out = 0;
  std::size_t spatial = 0;
  std::size_t kernel = 1;
  bool keep_padding = false;

  std::size_t pad() const { return kernel / 2; }
  std::size_t padded() const { return spatial + 2 * pad(); }
  std::size_t channels() const { return std::max(channels_in, channels_out); }
  std::size_t out_spatial() const { return keep_padding ? padded() : spatial; }

  void validate() const {
    if (channels_in == 0 || channels_out == 0 || spatial == 0) throw ShapeError("ConvGeometry: zero dimension");
    if (kernel % 2 == 0) throw ShapeError("ConvGeometry: kernel size must be odd");
    if (kernel > padded()) throw ShapeError("ConvGeometry: kernel larger than padded grid");
  }
};

/// Unconstrained c x n x k x k convolution parameter. alpha / depth_norm feed
/// the identity residual re-parameterization.
struct BroConvKernel {
  Tensor v;
  double alpha = 1.0;
  double depth_norm = 1.0;

  std::size_t channels() const { return v.dim(0); }
  std::size_t rank() const { return v.dim(1); }
  std::size_t size() const { return v.dim(2); }

  void validate() const {
    if (v.rank() != 4 || v.dim(2) != v.dim(3))
      throw ShapeError("BroConvKernel: expected c x n x k x k, got " + shape_string(v.shape()));
    if (rank() == 0 || rank() > channels()) throw ContractError("BroConvKernel: need 0 < n <= c");
    if (size() % 2 == 0) throw ShapeError("BroConvKernel: kernel size must be odd");
  }
};

/// Identity convolution kernel: a centered delta on the first n channels.
inline Tensor identity_kernel(std::size_t c, std::size_t n, std::size_t k) {
  Tensor id({c, n, k, k});
  for (std::size_t i = 0; i < std::min(c, n); ++i) id(i, i, k / 2, k / 2) = 1.0;
  return id;
}

/// I + (alpha / depth_norm) V.
inline Tensor identity_residual(const BroConvKernel& kernel) {
  kernel.validate();
  require(kernel.depth_norm > 0.0, "identity_residual: depth_norm must be positive");
  Tensor out = identity_kernel(kernel.channels(), kernel.rank(), kernel.size());
  out.axpy(kernel.alpha / kernel.depth_norm, kernel.v);
  return out;
}

/// Frequency-domain spectrum of a c x n x k x k kernel zero-padded (after the
/// taps) to grid x grid: shape c x n x grid x grid.
inline CTensor kernel_spectrum(const Tensor& v, std::size_t grid) {
  const std::size_t c = v.dim(0), n = v.dim(1), k = v.dim(2);
  if (k > grid) throw ShapeError("kernel_spectrum: kernel larger than grid");
  CTensor padded({c, n, grid, grid});
  for (std::size_t a = 0; a < c; ++a)
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
          padded.re()[((a * n + b) * grid + i) * grid + j] = v(a, b, i, j);
  return fft2d(padded);
}

/// Per-frequency matrices (rows x cols) gathered from a rows x cols x N x N spectrum.
inline CMat spectrum_matrix(const CTensor& spec, std::size_t f) {
  const std::size_t rows = spec.dim(0), cols = spec.dim(1), plane = spec.dim(2) * spec.dim(3);
  CMat m(rows, cols);
  for (std::size_t a = 0; a < rows; ++a)
    for (std::size_t b = 0; b < cols; ++b) {
      const std::size_t idx = (a * cols + b) * plane + f;
      m(a, b) = {spec.re()[idx], spec.im()[idx]};
    }
  return m;
}

/// Index of the frequency (-i, -j) mod N.
inline std::size_t mirror_frequency(std::size_t f, std::size_t grid) {
  const std::size_t i = f / grid, j = f % grid;
  return ((grid - i) % grid) * grid + (grid - j) % grid;
}

/// The orthogonal multi-channel circular convolution defined by a kernel on
/// a grid x grid torus, stored as one block-reflector factor per frequency.
/// Real kernels give conjugate-symmetric spectra, so only one frequency of
/// each mirror pair is factored.
class BroConvOperator {
 public:
  BroConvOperator(const Tensor& v, std::size_t grid) : c_(v.dim(0)), n_(v.dim(1)), grid_(grid) {
    const CTensor spec = kernel_spectrum(v, grid);
    const std::size_t plane = grid * grid;
    slot_.assign(plane, 0);
    conj_.assign(plane, false);
    std::vector<std::size_t> owner(plane, plane);
    for (std::size_t f = 0; f < plane; ++f) {
      const std::size_t mf = mirror_frequency(f, grid);
      if (mf < f) {
        slot_[f] = slot_[mf];
        conj_[f] = true;
        continue;
      }
      slot_[f] = factors_.size();
      try {
        factors_.push_back(factor_reflector(spectrum_matrix(spec, f)));
      } catch (const SingularParameter& e) {
        throw SingularParameter(e.pivot(), e.condition_estimate(),
                                "BroConvOperator: frequency " + std::to_string(f));
      }
    }
  }

  std::size_t channels() const { return c_; }
  std::size_t rank() const { return n_; }
  std::size_t grid() const { return grid_; }
  std::size_t factored_frequencies() const { return factors_.size(); }

  /// Factor for frequency f (conjugated copy for mirrored frequencies).
  ReflectorFactor<cplx> factor_at(std::size_t f) const {
    const auto& base = factors_[slot_[f]];
    if (!conj_[f]) return base;
    ReflectorFactor<cplx> out = base;
    for (auto& x : out.v.storage()) x = std::conj(x);
    for (auto& x : out.vg.storage()) x = std::conj(x);
    return out;
  }

  /// Dense c x c matrix W~ at frequency f.
  CMat frequency_matrix(std::size_t f) const { return materialize(factor_at(f)); }

  /// Applies W~ at every frequency of a b x c x N x N spectrum.
  CTensor apply_spectrum(const CTensor& xs) const {
    check_spectrum(xs);
    const std::size_t batch = xs.dim(0), plane = grid_ * grid_;
    CTensor out(xs.shape());
    std::vector<cplx> x(c_), y(c_), scratch(n_);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t f = 0; f < plane; ++f) {
        for (std::size_t a = 0; a < c_; ++a) {
          const std::size_t idx = (b * c_ + a) * plane + f;
          x[a] = {xs.re()[idx], conj_[f] ? -xs.im()[idx] : xs.im()[idx]};
        }
        apply_reflector(factors_[slot_[f]], x.data(), y.data(), scratch.data());
        for (std::size_t a = 0; a < c_; ++a) {
          const std::size_t idx = (b * c_ + a) * plane + f;
          out.re()[idx] = y[a].real();
          out.im()[idx] = conj_[f] ? -y[a].imag() : y[a].imag();
        }
      }
    }
    return out;
  }

 private:
  void check_spectrum(const CTensor& xs) const {
    if (xs.rank() != 4 || xs.dim(1) != c_ || xs.dim(2) != grid_ || xs.dim(3) != grid_)
      throw ShapeError("BroConvOperator: spectrum shape " + shape_string(xs.shape()) + " does not match operator");
  }

  std::size_t c_, n_, grid_;
  std::vector<ReflectorFactor<cplx>> factors_;
  std::vector<std::size_t> slot_;
  std::vector<bool> conj_;
};

namespace detail {

// b x cin x s x s -> b x c x N x N, image placed at (offset, offset).
inline Tensor embed(const Tensor& x, std::size_t c, std::size_t grid, std::size_t offset) {
  const std::size_t b = x.dim(0), cin = x.dim(1), s = x.dim(2);
  Tensor out({b, c, grid, grid});
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t a = 0; a < cin; ++a)
      for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < s; ++j) out(n, a, i + offset, j + offset) = x(n, a, i, j);
  return out;
}

// Adjoint of embed.
inline Tensor crop(const Tensor& x, std::size_t cout, std::size_t s, std::size_t offset) {
  const std::size_t b = x.dim(0);
  Tensor out({b, cout, s, s});
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t a = 0; a < cout; ++a)
      for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < s; ++j) out(n, a, i, j) = x(n, a, i + offset, j + offset);
  return out;
}

inline void check_conv_inputs(const BroConvKernel& kernel, const Tensor& x, const ConvGeometry& g) {
  kernel.validate();
  g.validate();
  if (kernel.channels() != g.channels())
    throw ShapeError("bro_conv: kernel has " + std::to_string(kernel.channels()) + " channels, geometry needs " +
                     std::to_string(g.channels()));
  if (kernel.size() != g.kernel) throw ShapeError("bro_conv: kernel size does not match geometry");
  if (x.rank() != 4 || x.dim(1) != g.channels_in || x.dim(2) != g.spatial || x.dim(3) != g.spatial)
    throw ShapeError("bro_conv: input shape " + shape_string(x.shape()) + " does not match geometry");
}

inline Tensor real_part_checked(const CTensor& y) {
  double scale = 1.0;
  for (double r : y.re()) scale = std::max(scale, std::abs(r));
  const double residual = y.max_abs_imag();
  if (residual > 1e-9 * scale)
    throw std::runtime_error("bro_conv: output imaginary part " + std::to_string(residual) + " is not negligible");
  return y.real();
}

// Full forward with the intermediate spectrum kept for the backward pass.
struct ConvForward {
  std::shared_ptr<const BroConvOperator> op;
  CTensor x_spec;
  Tensor y;
};

inline ConvForward conv_forward(const Tensor& v, const Tensor& x4, const ConvGeometry& g) {
  auto op = std::make_shared<const BroConvOperator>(v, g.padded());
  CTensor xs = fft2d(embed(x4, g.channels(), g.padded(), g.pad()));
  Tensor yp = real_part_checked(ifft2d(op->apply_spectrum(xs)));
  Tensor y = crop(yp, g.channels_out, g.out_spatial(), g.keep_padding ? 0 : g.pad());
  return ConvForward{std::move(op), std::move(xs), std::move(y)};
}

}  // namespace detail

/// Orthogonal convolution of x (c_in x s x s, or batched b x c_in x s x s):
/// zero-pad by k/2, FFT, apply I - 2 V~ (V~^H V~)^{-1} V~^H per frequency on
/// the channel axis, inverse FFT, keep the real part, then crop the border
/// unless geometry.keep_padding. The kernel is used as given; see
/// identity_residual for the residual re-parameterization.
inline Tensor bro_conv_forward(const BroConvKernel& kernel, const Tensor& x, const ConvGeometry& geom) {
  const bool batched = x.rank() == 4;
  if (!batched && x.rank() != 3) throw ShapeError("bro_conv_forward: input must be c x s x s or b x c x s x s");
  const Tensor x4 = batched ? x : x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)});
  detail::check_conv_inputs(kernel, x4, geom);
  Tensor y = detail::conv_forward(kernel.v, x4, geom).y;
  if (!batched) y.reshape({y.dim(1), y.dim(2), y.dim(3)});
  return y;
}

/// Explicit (c s^2) x (c s^2) matrix of the circular convolution on an s x s
/// torus without padding, built from the per-frequency matrices:
/// C[(a,p),(b,q)] = Re K_ab[p - q], K_ab = ifft2d(W~_ab) / s.
inline Tensor materialize_conv_matrix(const BroConvKernel& kernel, std::size_t s) {
  kernel.validate();
  const std::size_t c = kernel.channels();
  const std::size_t dim = c * s * s;
  require(dim <= 1024, "materialize_conv_matrix: c * s^2 must be <= 1024");
  require(kernel.size() <= s, "materialize_conv_matrix: kernel larger than grid");
  const BroConvOperator op(kernel.v, s);
  const std::size_t plane = s * s;
  CTensor w_spec({c, c, s, s});
  for (std::size_t f = 0; f < plane; ++f) {
    const CMat w = op.frequency_matrix(f);
    for (std::size_t a = 0; a < c; ++a)
      for (std::size_t b = 0; b < c; ++b) {
        const std::size_t idx = (a * c + b) * plane + f;
        w_spec.re()[idx] = w(a, b).real();
        w_spec.im()[idx] = w(a, b).imag();
      }
  }
  const CTensor taps = ifft2d(w_spec);
  const double scale = 1.0 / static_cast<double>(s);
  Tensor mat({dim, dim});
  for (std::size_t a = 0; a < c; ++a)
    for (std::size_t b = 0; b < c; ++b)
      for (std::size_t p = 0; p < plane; ++p)
        for (std::size_t q = 0; q < plane; ++q) {
          const std::size_t di = (p / s + s - q / s) % s, dj = (p % s + s - q % s) % s;
          mat(a * plane + p, b * plane + q) = scale * taps.re()[(a * c + b) * plane + di * s + dj];
        }
  return mat;
}

namespace ops {

/// Differentiable BRO convolution. x is b x c_in x s x s, v is c x n x k x k
/// (already re-parameterized). Returns b x c_out x s' x s'.
inline Var bro_conv(Tape& t, Var v, Var x, const ConvGeometry& g) {
  const Tensor& vv = t.value(v);
  const Tensor& xv = t.value(x);
  detail::check_conv_inputs(BroConvKernel{vv}, xv, g);
  auto fwd = std::make_shared<detail::ConvForward>(detail::conv_forward(vv, xv, g));
  Tensor y = fwd->y;
  const std::size_t k = vv.dim(2);
  return t.record(std::move(y), {v, x}, [fwd, g, k](const Tensor& gy, GradSink& s) {
    const BroConvOperator& op = *fwd->op;
    const std::size_t c = g.channels(), grid = g.padded(), plane = grid * grid, n = op.rank();
    const std::size_t out_offset = g.keep_padding ? 0 : g.pad();
    const CTensor gs = fft2d(detail::embed(gy, c, grid, out_offset));
    if (s.needs(1)) {
      const Tensor back = detail::real_part_checked(ifft2d(op.apply_spectrum(gs)));
      s.add(1, detail::crop(back, g.channels_in, g.spatial, g.pad()));
    }
    if (s.needs(0)) {
      const std::size_t batch = gs.dim(0);
      const CTensor& xs = fwd->x_spec;
      CTensor v_bar({c, n, grid, grid});
      std::vector<cplx> xa(n), ya(n);
      for (std::size_t f = 0; f < plane; ++f) {
        const ReflectorFactor<cplx> fac = op.factor_at(f);
        CMat u(c, n);
        for (std::size_t b = 0; b < batch; ++b) {
          // xa = x~^H VG, ya = gy~^H VG (row vectors of length n).
          std::fill(xa.begin(), xa.end(), cplx{});
          std::fill(ya.begin(), ya.end(), cplx{});
          for (std::size_t a = 0; a < c; ++a) {
            const std::size_t idx = (b * c + a) * plane + f;
            const cplx xc{xs.re()[idx], -xs.im()[idx]};
            const cplx yc{gs.re()[idx], -gs.im()[idx]};
            const cplx* vg = fac.vg.row(a);
            for (std::size_t p = 0; p < n; ++p) {
              xa[p] += xc * vg[p];
              ya[p] += yc * vg[p];
            }
          }
          for (std::size_t a = 0; a < c; ++a) {
            const std::size_t idx = (b * c + a) * plane + f;
            const cplx xv_a{xs.re()[idx], xs.im()[idx]};
            const cplx yv_a{gs.re()[idx], gs.im()[idx]};
            cplx* ua = u.row(a);
            for (std::size_t p = 0; p < n; ++p) ua[p] -= 2.0 * (yv_a * xa[p] + xv_a * ya[p]);
          }
        }
        const CMat vb = reflector_vjp_from_u(fac, u);
        for (std::size_t a = 0; a < c; ++a)
          for (std::size_t p = 0; p < n; ++p) {
            const std::size_t idx = (a * n + p) * plane + f;
            v_bar.re()[idx] = vb(a, p).real();
            v_bar.im()[idx] = vb(a, p).imag();
          }
      }
      const CTensor vpad = ifft2d(v_bar);
      Tensor gv({c, n, k, k});
      for (std::size_t a = 0; a < c; ++a)
        for (std::size_t p = 0; p < n; ++p)
          for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) gv(a, p, i, j) = vpad.re()[((a * n + p) * grid + i) * grid + j];
      s.add(0, std::move(gv));
    }
  });
}

}  // namespace ops
}  // namespace bro
