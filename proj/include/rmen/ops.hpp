#pragma once

// Differentiable primitives. Every forward op has a matching *_backward that
// returns the vector-Jacobian product for a given output cotangent.

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "rmen/error.hpp"
#include "rmen/rng.hpp"
#include "rmen/tensor.hpp"

namespace rmen::ops {

enum class Padding { same, valid };

namespace detail {

struct ConvGeometry {
  std::size_t channels, t, h, w;        // input extents of one sample
  std::size_t kt, kh, kw;               // kernel extents
  std::size_t pt, ph, pw;               // leading zero padding
  std::size_t out_t, out_h, out_w;

  std::size_t patch() const { return channels * kt * kh * kw; }
  std::size_t positions() const { return out_t * out_h * out_w; }
};

inline ConvGeometry make_geometry(std::size_t c, std::size_t t, std::size_t h, std::size_t w,
                                  std::size_t kt, std::size_t kh, std::size_t kw, Padding padding,
                                  const char* op) {
  ConvGeometry g{c, t, h, w, kt, kh, kw, 0, 0, 0, 0, 0, 0};
  if (padding == Padding::same) {
    if (kt % 2 == 0 || kh % 2 == 0 || kw % 2 == 0) {
      throw ShapeError(std::string(op) + ": same padding needs odd kernel extents");
    }
    g.pt = kt / 2;
    g.ph = kh / 2;
    g.pw = kw / 2;
    g.out_t = t;
    g.out_h = h;
    g.out_w = w;
  } else {
    if (kt > t || kh > h || kw > w) throw ShapeError(std::string(op) + ": kernel larger than input");
    g.out_t = t - kt + 1;
    g.out_h = h - kh + 1;
    g.out_w = w - kw + 1;
  }
  return g;
}

// Writes the patch matrix of one sample into columns [col_offset, col_offset +
// positions) of `col` (rows = patch size, row stride = total_cols).
inline void im2col(const double* in, const ConvGeometry& g, double* col, std::size_t total_cols,
                   std::size_t col_offset) {
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t a = 0; a < g.kt; ++a) {
      for (std::size_t i = 0; i < g.kh; ++i) {
        for (std::size_t j = 0; j < g.kw; ++j, ++row) {
          double* dst = col + row * total_cols + col_offset;
          for (std::size_t ot = 0; ot < g.out_t; ++ot) {
            const long st = static_cast<long>(ot + a) - static_cast<long>(g.pt);
            const bool t_ok = st >= 0 && st < static_cast<long>(g.t);
            for (std::size_t oy = 0; oy < g.out_h; ++oy) {
              const long sy = static_cast<long>(oy + i) - static_cast<long>(g.ph);
              double* out_row = dst + (ot * g.out_h + oy) * g.out_w;
              if (!t_ok || sy < 0 || sy >= static_cast<long>(g.h)) {
                std::fill(out_row, out_row + g.out_w, 0.0);
                continue;
              }
              const double* src = in + ((c * g.t + st) * g.h + sy) * g.w;
              for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                const long sx = static_cast<long>(ox + j) - static_cast<long>(g.pw);
                out_row[ox] = (sx >= 0 && sx < static_cast<long>(g.w)) ? src[sx] : 0.0;
              }
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters patch-matrix columns back into the input gradient.
inline void col2im(const double* col, const ConvGeometry& g, std::size_t total_cols,
                   std::size_t col_offset, double* grad_in) {
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t a = 0; a < g.kt; ++a) {
      for (std::size_t i = 0; i < g.kh; ++i) {
        for (std::size_t j = 0; j < g.kw; ++j, ++row) {
          const double* src = col + row * total_cols + col_offset;
          for (std::size_t ot = 0; ot < g.out_t; ++ot) {
            const long st = static_cast<long>(ot + a) - static_cast<long>(g.pt);
            if (st < 0 || st >= static_cast<long>(g.t)) continue;
            for (std::size_t oy = 0; oy < g.out_h; ++oy) {
              const long sy = static_cast<long>(oy + i) - static_cast<long>(g.ph);
              if (sy < 0 || sy >= static_cast<long>(g.h)) continue;
              const double* in_row = src + (ot * g.out_h + oy) * g.out_w;
              double* dst = grad_in + ((c * g.t + st) * g.h + sy) * g.w;
              for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                const long sx = static_cast<long>(ox + j) - static_cast<long>(g.pw);
                if (sx >= 0 && sx < static_cast<long>(g.w)) dst[sx] += in_row[ox];
              }
            }
          }
        }
      }
    }
  }
}

struct ConvProblem {
  ConvGeometry geom;
  std::size_t batch;
  std::size_t out_channels;
};

inline Tensor conv_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                           const ConvProblem& p, Dims out_dims) {
  const auto& g = p.geom;
  const std::size_t per = g.positions();
  const std::size_t cols = per * p.batch;
  RowMatrix col(static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(cols));
  const std::size_t in_stride = g.channels * g.t * g.h * g.w;
  for (std::size_t n = 0; n < p.batch; ++n) {
    im2col(input.ptr() + n * in_stride, g, col.data(), cols, n * per);
  }
  const auto k = as_matrix(kernels, p.out_channels, g.patch());
  RowMatrix out = k * col;
  Tensor result(std::move(out_dims));
  for (std::size_t n = 0; n < p.batch; ++n) {
    for (std::size_t o = 0; o < p.out_channels; ++o) {
      const double b = bias[o];
      const double* src = out.data() + o * cols + n * per;
      double* dst = result.ptr() + (n * p.out_channels + o) * per;
      for (std::size_t q = 0; q < per; ++q) dst[q] = src[q] + b;
    }
  }
  return result;
}

}  // namespace detail

struct ConvGrads {
  Tensor input;
  Tensor kernels;
  Tensor bias;
};

namespace detail {

inline ConvGrads conv_backward(const Tensor& input, const Tensor& kernels, const Tensor& grad_out,
                               const ConvProblem& p) {
  const auto& g = p.geom;
  const std::size_t per = g.positions();
  const std::size_t cols = per * p.batch;
  const std::size_t in_stride = g.channels * g.t * g.h * g.w;
  RowMatrix col(static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(cols));
  for (std::size_t n = 0; n < p.batch; ++n) {
    im2col(input.ptr() + n * in_stride, g, col.data(), cols, n * per);
  }
  RowMatrix go(static_cast<Eigen::Index>(p.out_channels), static_cast<Eigen::Index>(cols));
  for (std::size_t n = 0; n < p.batch; ++n) {
    for (std::size_t o = 0; o < p.out_channels; ++o) {
      const double* src = grad_out.ptr() + (n * p.out_channels + o) * per;
      std::copy(src, src + per, go.data() + o * cols + n * per);
    }
  }
  ConvGrads grads{Tensor(input.dims()), Tensor(kernels.dims()), Tensor({p.out_channels})};
  auto gk = as_matrix(grads.kernels, p.out_channels, g.patch());
  gk.noalias() = go * col.transpose();
  for (std::size_t o = 0; o < p.out_channels; ++o) grads.bias[o] = go.row(static_cast<Eigen::Index>(o)).sum();
  const auto k = as_matrix(kernels, p.out_channels, g.patch());
  RowMatrix gcol = k.transpose() * go;
  for (std::size_t n = 0; n < p.batch; ++n) {
    col2im(gcol.data(), g, cols, n * per, grads.input.ptr() + n * in_stride);
  }
  return grads;
}

inline ConvProblem conv2d_problem(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                                  Padding padding) {
  if (input.rank() != 3 && input.rank() != 4) {
    throw ShapeError("conv2d: input must be [C,H,W] or [N,C,H,W], got " + dims_to_string(input.dims()));
  }
  require_rank(kernels, 4, "conv2d kernels");
  const bool batched = input.rank() == 4;
  const std::size_t off = batched ? 1 : 0;
  const std::size_t c = input.dim(off), h = input.dim(off + 1), w = input.dim(off + 2);
  if (kernels.dim(1) != c) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(kernels.dim(1)) + " input channels, got " +
                     std::to_string(c));
  }
  if (bias.size() != kernels.dim(0)) throw ShapeError("conv2d: bias length does not match output channels");
  ConvProblem p{make_geometry(c, 1, h, w, 1, kernels.dim(2), kernels.dim(3), padding, "conv2d"),
                batched ? input.dim(0) : 1, kernels.dim(0)};
  return p;
}

inline ConvProblem conv3d_problem(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                                  Padding padding) {
  require_rank(input, 4, "conv3d input");
  require_rank(kernels, 5, "conv3d kernels");
  if (kernels.dim(1) != input.dim(0)) throw ShapeError("conv3d: input channel mismatch");
  if (bias.size() != kernels.dim(0)) throw ShapeError("conv3d: bias length does not match output channels");
  return {make_geometry(input.dim(0), input.dim(1), input.dim(2), input.dim(3), kernels.dim(2),
                        kernels.dim(3), kernels.dim(4), padding, "conv3d"),
          1, kernels.dim(0)};
}

}  // namespace detail

/// 2D cross-correlation, stride 1. Input [C,H,W] or batched [N,C,H,W];
/// kernels [O,C,kh,kw]; bias [O].
inline Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                     Padding padding = Padding::same) {
  const auto p = detail::conv2d_problem(input, kernels, bias, padding);
  Dims out = input.rank() == 4 ? Dims{p.batch, p.out_channels, p.geom.out_h, p.geom.out_w}
                               : Dims{p.out_channels, p.geom.out_h, p.geom.out_w};
  return detail::conv_forward(input, kernels, bias, p, std::move(out));
}

inline ConvGrads conv2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& grad_out,
                                 Padding padding = Padding::same) {
  const Tensor bias({kernels.dim(0)});
  const auto p = detail::conv2d_problem(input, kernels, bias, padding);
  return detail::conv_backward(input, kernels, grad_out, p);
}

/// 3D cross-correlation over [C,T,H,W] with kernels [O,C,kt,kh,kw].
inline Tensor conv3d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                     Padding padding = Padding::same) {
  const auto p = detail::conv3d_problem(input, kernels, bias, padding);
  return detail::conv_forward(input, kernels, bias, p,
                              {p.out_channels, p.geom.out_t, p.geom.out_h, p.geom.out_w});
}

inline ConvGrads conv3d_backward(const Tensor& input, const Tensor& kernels, const Tensor& grad_out,
                                 Padding padding = Padding::same) {
  const Tensor bias({kernels.dim(0)});
  const auto p = detail::conv3d_problem(input, kernels, bias, padding);
  return detail::conv_backward(input, kernels, grad_out, p);
}

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2, over the last two axes. Ragged edges pool over
// the cells that exist; ties resolve to the first cell in row-major order.

namespace detail {

template <typename Visit>
void pool_windows(const Tensor& input, Visit&& visit) {
  if (input.rank() < 2) throw ShapeError("maxpool2: input needs at least two axes");
  const std::size_t h = input.dim(input.rank() - 2);
  const std::size_t w = input.dim(input.rank() - 1);
  const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
  const std::size_t planes = input.size() / (h * w);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* plane = input.ptr() + p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (2 * oy) * w + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t y = 2 * oy + dy, x = 2 * ox + dx;
            if (y >= h || x >= w) continue;
            if (plane[y * w + x] > plane[best]) best = y * w + x;
          }
        }
        visit(p * oh * ow + oy * ow + ox, p * h * w + best);
      }
    }
  }
}

inline Dims pooled_dims(const Dims& in) {
  Dims out = in;
  out[out.size() - 2] = (out[out.size() - 2] + 1) / 2;
  out[out.size() - 1] = (out[out.size() - 1] + 1) / 2;
  return out;
}

}  // namespace detail

inline Tensor maxpool2(const Tensor& input) {
  Tensor out(detail::pooled_dims(input.dims()));
  detail::pool_windows(input, [&](std::size_t o, std::size_t i) { out[o] = input[i]; });
  return out;
}

inline Tensor maxpool2_backward(const Tensor& input, const Tensor& grad_out) {
  if (grad_out.dims() != detail::pooled_dims(input.dims())) throw ShapeError("maxpool2_backward: grad shape");
  Tensor grad(input.dims());
  detail::pool_windows(input, [&](std::size_t o, std::size_t i) { grad[i] += grad_out[o]; });
  return grad;
}

// ---------------------------------------------------------------------------
// Elementwise ops. Backward functions take the forward output where that is
// all the derivative needs.

template <typename F>
Tensor map(const Tensor& x, F&& f) {
  Tensor y(x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return y;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  a.require_same_shape(b, "add");
  Tensor y = a;
  y += b;
  return y;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  a.require_same_shape(b, "mul");
  Tensor y(a.dims());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] * b[i];
  return y;
}

inline Tensor relu(const Tensor& x) {
  return map(x, [](double v) { return v > 0.0 ? v : 0.0; });
}

inline Tensor relu_backward(const Tensor& out, const Tensor& grad) {
  out.require_same_shape(grad, "relu_backward");
  Tensor g(out.dims());
  for (std::size_t i = 0; i < out.size(); ++i) g[i] = out[i] > 0.0 ? grad[i] : 0.0;
  return g;
}

inline double sigmoid(double v) {
  return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}

inline Tensor sigmoid(const Tensor& x) {
  return map(x, [](double v) { return sigmoid(v); });
}

inline Tensor sigmoid_backward(const Tensor& out, const Tensor& grad) {
  Tensor g(out.dims());
  for (std::size_t i = 0; i < out.size(); ++i) g[i] = grad[i] * out[i] * (1.0 - out[i]);
  return g;
}

inline Tensor tanh(const Tensor& x) {
  return map(x, [](double v) { return std::tanh(v); });
}

inline Tensor tanh_backward(const Tensor& out, const Tensor& grad) {
  Tensor g(out.dims());
  for (std::size_t i = 0; i < out.size(); ++i) g[i] = grad[i] * (1.0 - out[i] * out[i]);
  return g;
}

inline Tensor flatten(const Tensor& x) { return x.reshaped({x.size()}); }

/// y = W x + b for x [n] or row-wise for x [B,n]; W is [m,n].
inline Tensor dense(const Tensor& x, const Tensor& weights, const Tensor& bias) {
  require_rank(weights, 2, "dense weights");
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  if (x.dim(x.rank() - 1) != n || x.rank() > 2) {
    throw ShapeError("dense: input " + dims_to_string(x.dims()) + " vs weights " + dims_to_string(weights.dims()));
  }
  if (bias.size() != m) throw ShapeError("dense: bias length");
  const std::size_t rows = x.rank() == 2 ? x.dim(0) : 1;
  Tensor y(x.rank() == 2 ? Dims{rows, m} : Dims{m});
  auto ym = as_matrix(y, rows, m);
  ym.noalias() = as_matrix(x, rows, n) * as_matrix(weights, m, n).transpose();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < m; ++j) y[r * m + j] += bias[j];
  }
  return y;
}

struct DenseGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

inline DenseGrads dense_backward(const Tensor& x, const Tensor& weights, const Tensor& grad_out) {
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  const std::size_t rows = x.rank() == 2 ? x.dim(0) : 1;
  DenseGrads g{Tensor(x.dims()), Tensor(weights.dims()), Tensor({m})};
  const auto go = as_matrix(grad_out, rows, m);
  as_matrix(g.input, rows, n).noalias() = go * as_matrix(weights, m, n);
  as_matrix(g.weights, m, n).noalias() = go.transpose() * as_matrix(x, rows, n);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < m; ++j) g.bias[j] += grad_out[r * m + j];
  }
  return g;
}

struct DropoutResult {
  Tensor output;
  Tensor mask;  // 0 for dropped units, 1/(1-rate) for kept ones
};

/// Inverted dropout; identity (mask of ones) when not training.
inline DropoutResult dropout(const Tensor& x, double rate, Rng& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0,1)");
  DropoutResult r{x, Tensor(x.dims(), 1.0)};
  if (!training || rate == 0.0) return r;
  const double scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = rng.uniform() >= rate ? scale : 0.0;
    r.mask[i] = keep;
    r.output[i] = x[i] * keep;
  }
  return r;
}

inline Tensor dropout_backward(const Tensor& mask, const Tensor& grad) { return mul(mask, grad); }

}  // namespace rmen::ops
