#pragma once

// The repetitive-motion estimation network:
//   frames [T,1,H,W]
//     -> weight-shared Conv2D encoder (5 conv+ReLU blocks, 2x2 max-pool after
//        blocks 1, 3 and 5)                           -> [T, C5, H/8, W/8]
//     -> stacked ConvLSTM layers (zero initial state)  -> [T, Hd, H/8, W/8]
//     -> Conv3D + ReLU over [Hd, T, H/8, W/8]          -> [O, T, H/8, W/8]
//     -> per-frame flatten + dense/ReLU/dropout stack  -> one value per frame

#include <string>
#include <vector>

#include "rmen/model/config.hpp"
#include "rmen/model/convlstm.hpp"
#include "rmen/model/parameters.hpp"
#include "rmen/ops.hpp"
#include "rmen/signals.hpp"

namespace rmen::model {

inline std::string encoder_name(std::size_t block) { return "encoder" + std::to_string(block + 1); }
inline std::string lstm_name(std::size_t layer) { return "lstm" + std::to_string(layer + 1); }
inline std::string dense_name(std::size_t layer) { return "dense" + std::to_string(layer + 1); }

inline bool pool_after_block(std::size_t block) { return block == 0 || block == 2 || block == 4; }

/// Expected parameter layout (names and shapes in canonical order).
inline std::vector<std::pair<std::string, Dims>> parameter_layout(const RmenConfig& cfg) {
  cfg.validate();
  std::vector<std::pair<std::string, Dims>> layout;
  const std::size_t ek = cfg.encoder_kernel;
  std::size_t in = 1;
  for (std::size_t b = 0; b < 5; ++b) {
    const std::size_t out = cfg.encoder_channels[b];
    layout.emplace_back(encoder_name(b) + ".kernel", Dims{out, in, ek, ek});
    layout.emplace_back(encoder_name(b) + ".bias", Dims{out});
    in = out;
  }
  const std::size_t lk = cfg.convlstm_kernel;
  for (std::size_t l = 0; l < cfg.convlstm_hidden.size(); ++l) {
    const std::size_t hid = cfg.convlstm_hidden[l];
    for (char gate : kGateOrder) {
      layout.emplace_back(lstm_name(l) + ".W_x" + gate, Dims{hid, in, lk, lk});
      layout.emplace_back(lstm_name(l) + ".W_h" + gate, Dims{hid, hid, lk, lk});
    }
    for (char gate : kGateOrder) layout.emplace_back(lstm_name(l) + ".b_" + gate, Dims{hid});
    in = hid;
  }
  const std::size_t k3 = cfg.conv3d_kernel;
  layout.emplace_back("conv3d.kernel", Dims{cfg.conv3d_out_channels, in, k3, k3, k3});
  layout.emplace_back("conv3d.bias", Dims{cfg.conv3d_out_channels});
  in = cfg.conv3d_out_channels * cfg.encoded_height() * cfg.encoded_width();
  for (std::size_t d = 0; d < cfg.dense_widths.size(); ++d) {
    layout.emplace_back(dense_name(d) + ".weight", Dims{cfg.dense_widths[d], in});
    layout.emplace_back(dense_name(d) + ".bias", Dims{cfg.dense_widths[d]});
    in = cfg.dense_widths[d];
  }
  return layout;
}

/// Throws ShapeError naming the first tensor that is missing or misshapen.
inline void check_parameters(const ParameterSet& params, const RmenConfig& cfg) {
  const auto layout = parameter_layout(cfg);
  if (params.size() != layout.size()) {
    throw ShapeError("parameter count " + std::to_string(params.size()) + " does not match config (" +
                     std::to_string(layout.size()) + ")");
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& e = params.entries()[i];
    if (e.name != layout[i].first) throw ShapeError("expected tensor '" + layout[i].first + "', found '" + e.name + "'");
    if (e.value.dims() != layout[i].second) {
      throw ShapeError("tensor '" + e.name + "' has shape " + dims_to_string(e.value.dims()) + ", config expects " +
                       dims_to_string(layout[i].second));
    }
  }
}

inline ParameterSet zero_parameters(const RmenConfig& cfg) {
  ParameterSet p;
  for (auto& [name, dims] : parameter_layout(cfg)) p.add(name, Tensor(dims));
  return p;
}

/// Glorot-uniform weights, zero biases, forget-gate biases at 1.
inline ParameterSet init_parameters(const RmenConfig& cfg, Rng& rng) {
  cfg.validate();
  ParameterSet p;
  const std::size_t ek = cfg.encoder_kernel;
  std::size_t in = 1;
  for (std::size_t b = 0; b < 5; ++b) {
    const std::size_t out = cfg.encoder_channels[b];
    p.add(encoder_name(b) + ".kernel", glorot_uniform({out, in, ek, ek}, in * ek * ek, out * ek * ek, rng));
    p.add(encoder_name(b) + ".bias", Tensor({out}));
    in = out;
  }
  for (std::size_t l = 0; l < cfg.convlstm_hidden.size(); ++l) {
    init_lstm_layer(p, lstm_name(l), in, cfg.convlstm_hidden[l], cfg.convlstm_kernel, rng);
    in = cfg.convlstm_hidden[l];
  }
  const std::size_t k3 = cfg.conv3d_kernel, vol = k3 * k3 * k3, o3 = cfg.conv3d_out_channels;
  p.add("conv3d.kernel", glorot_uniform({o3, in, k3, k3, k3}, in * vol, o3 * vol, rng));
  p.add("conv3d.bias", Tensor({o3}));
  in = o3 * cfg.encoded_height() * cfg.encoded_width();
  for (std::size_t d = 0; d < cfg.dense_widths.size(); ++d) {
    const std::size_t out = cfg.dense_widths[d];
    p.add(dense_name(d) + ".weight", glorot_uniform({out, in}, in, out, rng));
    p.add(dense_name(d) + ".bias", Tensor({out}));
    in = out;
  }
  check_parameters(p, cfg);
  return p;
}

/// Network input for frames [start, start+len): each frame standardized to
/// zero mean and unit variance, which removes global brightness drift.
inline Tensor input_window(const VideoSequence& video, std::size_t start, std::size_t len) {
  Tensor t = video.window(start, len);
  const std::size_t plane = video.frame_size();
  for (std::size_t f = 0; f < len; ++f) {
    double* px = t.ptr() + f * plane;
    double mean = 0.0;
    for (std::size_t i = 0; i < plane; ++i) mean += px[i];
    mean /= static_cast<double>(plane);
    double var = 0.0;
    for (std::size_t i = 0; i < plane; ++i) var += (px[i] - mean) * (px[i] - mean);
    const double inv = 1.0 / std::sqrt(var / static_cast<double>(plane) + 1e-8);
    for (std::size_t i = 0; i < plane; ++i) px[i] = (px[i] - mean) * inv;
  }
  return t;
}

// ---------------------------------------------------------------------------
// Encoder: applied to a batch of frames [N,1,H,W] with shared weights.

struct EncoderCache {
  std::vector<Tensor> block_in;   // input to each conv block
  std::vector<Tensor> block_out;  // post-ReLU output of each block (before pooling)
};

inline Tensor encode(const ParameterSet& params, const RmenConfig& cfg, const Tensor& frames,
                     EncoderCache* cache) {
  require_rank(frames, 4, "encoder input");
  if (frames.dim(1) != 1 || frames.dim(2) != cfg.frame_height || frames.dim(3) != cfg.frame_width) {
    throw ShapeError("encoder input " + dims_to_string(frames.dims()) + " does not match frame size " +
                     std::to_string(cfg.frame_height) + "x" + std::to_string(cfg.frame_width));
  }
  Tensor x = frames;
  for (std::size_t b = 0; b < 5; ++b) {
    const std::string name = encoder_name(b);
    Tensor a = ops::relu(ops::conv2d(x, params.at(name + ".kernel"), params.at(name + ".bias")));
    require_finite(a, name);
    if (cache) {
      cache->block_in.push_back(std::move(x));
      cache->block_out.push_back(a);
    }
    x = pool_after_block(b) ? ops::maxpool2(a) : std::move(a);
  }
  return x;
}

inline Tensor encode_backward(const ParameterSet& params, const EncoderCache& cache, Tensor grad,
                              ParameterSet& grads) {
  for (std::size_t b = 5; b-- > 0;) {
    const std::string name = encoder_name(b);
    if (pool_after_block(b)) grad = ops::maxpool2_backward(cache.block_out[b], grad);
    const Tensor dz = ops::relu_backward(cache.block_out[b], grad);
    auto g = ops::conv2d_backward(cache.block_in[b], params.at(name + ".kernel"), dz);
    grads.at(name + ".kernel") += g.kernels;
    grads.at(name + ".bias") += g.bias;
    grad = std::move(g.input);
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Temporal head: ConvLSTM stack, Conv3D fusion, per-frame dense regressor.

struct HeadCache {
  std::vector<StackedLstm> lstm_weights;
  std::vector<std::vector<LstmStep>> lstm_steps;
  Tensor conv3d_in;   // [Hd, T, h, w]
  Tensor conv3d_out;  // post-ReLU [O, T, h, w]
  std::vector<Tensor> dense_in;    // [T, n_in] per layer
  std::vector<Tensor> dense_act;   // post-activation (before dropout) per layer
  std::vector<Tensor> dropout_mask;
};

/// `encoded` is [T, C, h, w]. Returns predictions [T].
inline Tensor head_forward(const ParameterSet& params, const RmenConfig& cfg, const Tensor& encoded, bool training,
                           Rng& rng, HeadCache* cache) {
  require_rank(encoded, 4, "head input");
  const std::size_t steps = encoded.dim(0), h = encoded.dim(2), w = encoded.dim(3);
  std::vector<Tensor> seq(steps);
  const std::size_t per = encoded.size() / steps;
  for (std::size_t t = 0; t < steps; ++t) {
    seq[t] = Tensor({encoded.dim(1), h, w}, std::vector<double>(encoded.ptr() + t * per, encoded.ptr() + (t + 1) * per));
  }
  for (std::size_t l = 0; l < cfg.convlstm_hidden.size(); ++l) {
    StackedLstm s = stack_lstm(params, lstm_name(l));
    auto layer = lstm_forward(s, seq);
    for (std::size_t t = 0; t < steps; ++t) {
      seq[t] = layer[t].h;
      require_finite(seq[t], lstm_name(l));
    }
    if (cache) {
      cache->lstm_weights.push_back(std::move(s));
      cache->lstm_steps.push_back(std::move(layer));
    }
  }
  const std::size_t hid = seq.front().dim(0), plane = h * w;
  Tensor vol({hid, steps, h, w});
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t c = 0; c < hid; ++c) {
      std::copy_n(seq[t].ptr() + c * plane, plane, vol.ptr() + (c * steps + t) * plane);
    }
  }
  Tensor fused = ops::relu(ops::conv3d(vol, params.at("conv3d.kernel"), params.at("conv3d.bias")));
  require_finite(fused, "conv3d");
  const std::size_t oc = fused.dim(0);
  Tensor x({steps, oc * plane});
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t c = 0; c < oc; ++c) {
      std::copy_n(fused.ptr() + (c * steps + t) * plane, plane, x.ptr() + t * oc * plane + c * plane);
    }
  }
  if (cache) {
    cache->conv3d_in = std::move(vol);
    cache->conv3d_out = std::move(fused);
  }
  const std::size_t layers = cfg.dense_widths.size();
  for (std::size_t d = 0; d < layers; ++d) {
    const std::string name = dense_name(d);
    Tensor y = ops::dense(x, params.at(name + ".weight"), params.at(name + ".bias"));
    require_finite(y, name);
    if (d + 1 == layers) {
      if (cache) cache->dense_in.push_back(std::move(x));
      return std::move(y).reshaped({steps});
    }
    Tensor act = ops::relu(y);
    auto drop = ops::dropout(act, cfg.dropout_rate, rng, training);
    if (cache) {
      cache->dense_in.push_back(std::move(x));
      cache->dense_act.push_back(std::move(act));
      cache->dropout_mask.push_back(std::move(drop.mask));
    }
    x = std::move(drop.output);
  }
  throw ConfigError("dense stack is empty");
}

/// Returns the cotangent of `encoded` for prediction cotangent `grad_pred` [T].
inline Tensor head_backward(const ParameterSet& params, const RmenConfig& cfg, const HeadCache& cache,
                            const Tensor& grad_pred, ParameterSet& grads) {
  const std::size_t steps = grad_pred.size();
  const std::size_t layers = cfg.dense_widths.size();
  Tensor grad = grad_pred.reshaped({steps, 1});
  for (std::size_t d = layers; d-- > 0;) {
    const std::string name = dense_name(d);
    if (d + 1 < layers) {
      grad = ops::dropout_backward(cache.dropout_mask[d], grad);
      grad = ops::relu_backward(cache.dense_act[d], grad);
    }
    auto g = ops::dense_backward(cache.dense_in[d], params.at(name + ".weight"), grad);
    grads.at(name + ".weight") += g.weights;
    grads.at(name + ".bias") += g.bias;
    grad = std::move(g.input);
  }
  const Tensor& fused = cache.conv3d_out;
  const std::size_t oc = fused.dim(0), h = fused.dim(2), w = fused.dim(3), plane = h * w;
  Tensor gfused(fused.dims());
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t c = 0; c < oc; ++c) {
      std::copy_n(grad.ptr() + t * oc * plane + c * plane, plane, gfused.ptr() + (c * steps + t) * plane);
    }
  }
  gfused = ops::relu_backward(fused, gfused);
  auto g3 = ops::conv3d_backward(cache.conv3d_in, params.at("conv3d.kernel"), gfused);
  grads.at("conv3d.kernel") += g3.kernels;
  grads.at("conv3d.bias") += g3.bias;

  const std::size_t hid = cache.conv3d_in.dim(0);
  std::vector<Tensor> grad_h(steps, Tensor({hid, h, w}));
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t c = 0; c < hid; ++c) {
      std::copy_n(g3.input.ptr() + (c * steps + t) * plane, plane, grad_h[t].ptr() + c * plane);
    }
  }
  for (std::size_t l = cfg.convlstm_hidden.size(); l-- > 0;) {
    const StackedLstm& s = cache.lstm_weights[l];
    Tensor gk(s.kernel.dims()), gb(s.bias.dims());
    grad_h = lstm_backward(s, cache.lstm_steps[l], grad_h, gk, gb);
    accumulate_unstacked(s, gk, gb, grads, lstm_name(l));
  }
  const std::size_t in = grad_h.front().size();
  Tensor gencoded({steps, grad_h.front().dim(0), h, w});
  for (std::size_t t = 0; t < steps; ++t) std::copy_n(grad_h[t].ptr(), in, gencoded.ptr() + t * in);
  return gencoded;
}

// ---------------------------------------------------------------------------

struct ForwardCache {
  EncoderCache encoder;
  HeadCache head;
};

/// Per-frame predictions [T] for a window [T,1,H,W].
inline Tensor forward(const ParameterSet& params, const RmenConfig& cfg, const Tensor& window, bool training,
                      Rng& rng, ForwardCache* cache = nullptr) {
  const Tensor encoded = encode(params, cfg, window, cache ? &cache->encoder : nullptr);
  return head_forward(params, cfg, encoded, training, rng, cache ? &cache->head : nullptr);
}

/// Accumulates parameter gradients into `grads`; returns the window cotangent.
inline Tensor backward(const ParameterSet& params, const RmenConfig& cfg, const ForwardCache& cache,
                       const Tensor& grad_pred, ParameterSet& grads) {
  Tensor gencoded = head_backward(params, cfg, cache.head, grad_pred, grads);
  return encode_backward(params, cache.encoder, std::move(gencoded), grads);
}

/// Signs of every ReLU input and every max-pool winner. Two parameter points
/// with equal patterns lie in the same smooth piece of the network.
inline std::vector<std::size_t> activation_pattern(const ForwardCache& cache) {
  std::vector<std::size_t> pattern;
  auto add_signs = [&](const Tensor& t) {
    std::size_t word = 0, bits = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      word = (word << 1) | (t[i] > 0.0 ? 1u : 0u);
      if (++bits == 63) {
        pattern.push_back(word);
        word = bits = 0;
      }
    }
    pattern.push_back(word);
  };
  for (std::size_t b = 0; b < cache.encoder.block_out.size(); ++b) {
    const Tensor& out = cache.encoder.block_out[b];
    add_signs(out);
    if (pool_after_block(b)) {
      ops::detail::pool_windows(out, [&](std::size_t, std::size_t i) { pattern.push_back(i); });
    }
  }
  add_signs(cache.head.conv3d_out);
  for (const Tensor& a : cache.head.dense_act) add_signs(a);
  return pattern;
}

}  // namespace rmen::model
