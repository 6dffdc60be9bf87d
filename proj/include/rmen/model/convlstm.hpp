#pragma once

// Convolutional LSTM layer without peephole terms:
//   i = sigma(W_xi*x + W_hi*h + b_i)    f = sigma(W_xf*x + W_hf*h + b_f)
//   o = sigma(W_xo*x + W_ho*h + b_o)    g = tanh(W_xg*x + W_hg*h + b_g)
//   c = f.c_prev + i.g                  h = o.tanh(c)
// with * a same-padded 2D convolution. The eight gate kernels are applied as
// one convolution over the channel concatenation [x; h].

#include <array>
#include <string>
#include <vector>

#include "rmen/model/parameters.hpp"
#include "rmen/ops.hpp"

namespace rmen::model {

inline constexpr std::array<char, 4> kGateOrder{'i', 'f', 'o', 'g'};

/// Adds the gate tensors of one layer under `prefix` (e.g. "lstm1").
inline void init_lstm_layer(ParameterSet& params, const std::string& prefix, std::size_t in_channels,
                            std::size_t hidden, std::size_t kernel, Rng& rng) {
  const std::size_t area = kernel * kernel;
  for (char gate : kGateOrder) {
    params.add(prefix + ".W_x" + gate,
               glorot_uniform({hidden, in_channels, kernel, kernel}, in_channels * area, hidden * area, rng));
    params.add(prefix + ".W_h" + gate,
               glorot_uniform({hidden, hidden, kernel, kernel}, hidden * area, hidden * area, rng));
  }
  for (char gate : kGateOrder) {
    params.add(prefix + ".b_" + gate, Tensor({hidden}, gate == 'f' ? 1.0 : 0.0));
  }
}

/// The gate kernels of one layer packed as [4*hidden, in+hidden, k, k].
struct StackedLstm {
  Tensor kernel;
  Tensor bias;
  std::size_t in_channels = 0;
  std::size_t hidden = 0;
  std::size_t k = 0;
};

inline StackedLstm stack_lstm(const ParameterSet& params, const std::string& prefix) {
  const Tensor& wxi = params.at(prefix + ".W_xi");
  StackedLstm s;
  s.hidden = wxi.dim(0);
  s.in_channels = wxi.dim(1);
  s.k = wxi.dim(2);
  const std::size_t cols = s.in_channels + s.hidden;
  const std::size_t area = s.k * s.k;
  s.kernel = Tensor({4 * s.hidden, cols, s.k, s.k});
  s.bias = Tensor({4 * s.hidden});
  for (std::size_t q = 0; q < 4; ++q) {
    const char gate = kGateOrder[q];
    const Tensor& wx = params.at(prefix + ".W_x" + gate);
    const Tensor& wh = params.at(prefix + ".W_h" + gate);
    const Tensor& b = params.at(prefix + ".b_" + gate);
    if (wx.dims() != Dims{s.hidden, s.in_channels, s.k, s.k} || wh.dims() != Dims{s.hidden, s.hidden, s.k, s.k} ||
        b.dims() != Dims{s.hidden}) {
      throw ShapeError("inconsistent gate tensors in layer '" + prefix + "'");
    }
    for (std::size_t o = 0; o < s.hidden; ++o) {
      double* row = s.kernel.ptr() + (q * s.hidden + o) * cols * area;
      std::copy_n(wx.ptr() + o * s.in_channels * area, s.in_channels * area, row);
      std::copy_n(wh.ptr() + o * s.hidden * area, s.hidden * area, row + s.in_channels * area);
      s.bias[q * s.hidden + o] = b[o];
    }
  }
  return s;
}

/// Adds packed kernel/bias gradients back onto the per-gate gradient tensors.
inline void accumulate_unstacked(const StackedLstm& s, const Tensor& grad_kernel, const Tensor& grad_bias,
                                 ParameterSet& grads, const std::string& prefix) {
  const std::size_t cols = s.in_channels + s.hidden;
  const std::size_t area = s.k * s.k;
  for (std::size_t q = 0; q < 4; ++q) {
    const char gate = kGateOrder[q];
    Tensor& wx = grads.at(prefix + ".W_x" + gate);
    Tensor& wh = grads.at(prefix + ".W_h" + gate);
    Tensor& b = grads.at(prefix + ".b_" + gate);
    for (std::size_t o = 0; o < s.hidden; ++o) {
      const double* row = grad_kernel.ptr() + (q * s.hidden + o) * cols * area;
      for (std::size_t i = 0; i < s.in_channels * area; ++i) wx[o * s.in_channels * area + i] += row[i];
      for (std::size_t i = 0; i < s.hidden * area; ++i) wh[o * s.hidden * area + i] += row[s.in_channels * area + i];
      b[o] += grad_bias[q * s.hidden + o];
    }
  }
}

struct LstmStep {
  Tensor xh;  // [in+hidden, h, w]
  Tensor i, f, o, g, c, tanh_c, h;
};

/// Runs the layer over a sequence of [in, h, w] inputs from zero state.
inline std::vector<LstmStep> lstm_forward(const StackedLstm& s, const std::vector<Tensor>& xs) {
  std::vector<LstmStep> steps;
  steps.reserve(xs.size());
  if (xs.empty()) return steps;
  const std::size_t h = xs.front().dim(1), w = xs.front().dim(2);
  const std::size_t plane = s.hidden * h * w;
  Tensor h_prev({s.hidden, h, w});
  Tensor c_prev({s.hidden, h, w});
  for (const Tensor& x : xs) {
    if (x.dims() != Dims{s.in_channels, h, w}) throw ShapeError("convlstm: input step shape " + dims_to_string(x.dims()));
    LstmStep st;
    st.xh = Tensor({s.in_channels + s.hidden, h, w});
    std::copy_n(x.ptr(), x.size(), st.xh.ptr());
    std::copy_n(h_prev.ptr(), plane, st.xh.ptr() + x.size());
    const Tensor z = ops::conv2d(st.xh, s.kernel, s.bias, ops::Padding::same);
    st.i = Tensor({s.hidden, h, w});
    st.f = Tensor({s.hidden, h, w});
    st.o = Tensor({s.hidden, h, w});
    st.g = Tensor({s.hidden, h, w});
    st.c = Tensor({s.hidden, h, w});
    st.tanh_c = Tensor({s.hidden, h, w});
    st.h = Tensor({s.hidden, h, w});
    for (std::size_t e = 0; e < plane; ++e) {
      st.i[e] = ops::sigmoid(z[e]);
      st.f[e] = ops::sigmoid(z[plane + e]);
      st.o[e] = ops::sigmoid(z[2 * plane + e]);
      st.g[e] = std::tanh(z[3 * plane + e]);
      st.c[e] = st.f[e] * c_prev[e] + st.i[e] * st.g[e];
      st.tanh_c[e] = std::tanh(st.c[e]);
      st.h[e] = st.o[e] * st.tanh_c[e];
    }
    h_prev = st.h;
    c_prev = st.c;
    steps.push_back(std::move(st));
  }
  return steps;
}

/// Backpropagation through time. `grad_h[t]` is the cotangent of the hidden
/// output at step t. Returns input cotangents and accumulates packed
/// kernel/bias gradients.
inline std::vector<Tensor> lstm_backward(const StackedLstm& s, const std::vector<LstmStep>& steps,
                                         const std::vector<Tensor>& grad_h, Tensor& grad_kernel, Tensor& grad_bias) {
  std::vector<Tensor> grad_x(steps.size());
  if (steps.empty()) return grad_x;
  const std::size_t h = steps.front().h.dim(1), w = steps.front().h.dim(2);
  const std::size_t plane = s.hidden * h * w;
  Tensor dh_carry({s.hidden, h, w});
  Tensor dc_carry({s.hidden, h, w});
  Tensor dz({4 * s.hidden, h, w});
  for (std::size_t t = steps.size(); t-- > 0;) {
    const LstmStep& st = steps[t];
    const double* c_prev = t > 0 ? steps[t - 1].c.ptr() : nullptr;
    for (std::size_t e = 0; e < plane; ++e) {
      const double dh = grad_h[t][e] + dh_carry[e];
      const double dc = dc_carry[e] + dh * st.o[e] * (1.0 - st.tanh_c[e] * st.tanh_c[e]);
      const double cp = c_prev ? c_prev[e] : 0.0;
      dz[e] = dc * st.g[e] * st.i[e] * (1.0 - st.i[e]);
      dz[plane + e] = dc * cp * st.f[e] * (1.0 - st.f[e]);
      dz[2 * plane + e] = dh * st.tanh_c[e] * st.o[e] * (1.0 - st.o[e]);
      dz[3 * plane + e] = dc * st.i[e] * (1.0 - st.g[e] * st.g[e]);
      dc_carry[e] = dc * st.f[e];
    }
    auto g = ops::conv2d_backward(st.xh, s.kernel, dz, ops::Padding::same);
    grad_kernel += g.kernels;
    grad_bias += g.bias;
    grad_x[t] = Tensor({s.in_channels, h, w});
    std::copy_n(g.input.ptr(), s.in_channels * h * w, grad_x[t].ptr());
    std::copy_n(g.input.ptr() + s.in_channels * h * w, plane, dh_carry.ptr());
  }
  return grad_x;
}

}  // namespace rmen::model
