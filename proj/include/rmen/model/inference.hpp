#pragma once

// Sliding-window inference. Every frame collects one prediction per window
// that covers it; the per-frame median is the predicted phase curve.

#include <algorithm>
#include <functional>
#include <vector>

#include "rmen/error.hpp"
#include "rmen/model/config.hpp"
#include "rmen/model/network.hpp"
#include "rmen/parallel.hpp"
#include "rmen/signals.hpp"

namespace rmen::model {

/// Exact median; mean of the two middle order statistics for even counts.
inline double median(std::vector<double> values) {
  if (values.empty()) throw InsufficientDataError("median of empty set");
  const std::size_t n = values.size();
  std::sort(values.begin(), values.end());
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

struct PredictionSeries {
  std::vector<std::vector<double>> distributions;  // y^1..y^Q per frame, window order
  std::vector<double> median;
};

/// Window starts covering [0, frames): 0, stride, 2*stride, ... plus one
/// window flush with the end when the regular grid leaves a tail.
/// `tail_from` receives the first frame only the extra window covers.
inline std::vector<std::size_t> window_starts(std::size_t frames, std::size_t len, std::size_t stride,
                                              std::size_t* tail_from = nullptr) {
  if (frames < len) {
    throw InsufficientDataError("sequence of " + std::to_string(frames) + " frames is shorter than the window (" +
                                std::to_string(len) + ")");
  }
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + len <= frames; s += stride) starts.push_back(s);
  const std::size_t covered = starts.back() + len;
  if (tail_from) *tail_from = covered;
  if (covered < frames) starts.push_back(frames - len);
  return starts;
}

/// Collects per-window predictions into per-frame distributions and medians.
inline PredictionSeries aggregate_windows(std::size_t frames, std::size_t len, std::size_t stride,
                                          const std::function<std::vector<double>(std::size_t start)>& run) {
  std::size_t tail_from = 0;
  const auto starts = window_starts(frames, len, stride, &tail_from);
  std::vector<std::vector<double>> outputs(starts.size());
  parallel_for(starts.size(), [&](std::size_t w) { outputs[w] = run(starts[w]); });
  PredictionSeries p;
  p.distributions.resize(frames);
  for (std::size_t w = 0; w < starts.size(); ++w) {
    const bool tail_only = tail_from < frames && w + 1 == starts.size();
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t f = starts[w] + i;
      if (tail_only && f < tail_from) continue;
      p.distributions[f].push_back(outputs[w][i]);
    }
  }
  p.median.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) p.median[f] = median(p.distributions[f]);
  return p;
}

/// Inference over a whole video. The encoder is stateless, so every frame is
/// encoded once and shared by all windows that contain it.
inline PredictionSeries predict_sequence(const ParameterSet& params, const RmenConfig& cfg, const VideoSequence& video) {
  if (video.height != cfg.frame_height || video.width != cfg.frame_width) {
    throw ShapeError("video frame size does not match the model");
  }
  const std::size_t len = cfg.window_len;
  window_starts(video.frames, len, cfg.stride);  // validates length
  constexpr std::size_t chunk = 32;
  Tensor encoded;
  std::vector<Tensor> parts((video.frames + chunk - 1) / chunk);
  parallel_for(parts.size(), [&](std::size_t c) {
    const std::size_t begin = c * chunk;
    const std::size_t n = std::min(chunk, video.frames - begin);
    parts[c] = encode(params, cfg, input_window(video, begin, n), nullptr);
  });
  const std::size_t per = parts.front().size() / parts.front().dim(0);
  Dims edims = parts.front().dims();
  edims[0] = video.frames;
  encoded = Tensor(edims);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    std::copy_n(p.ptr(), p.size(), encoded.ptr() + offset);
    offset += p.size();
  }
  return aggregate_windows(video.frames, len, cfg.stride, [&](std::size_t start) {
    Dims wd = edims;
    wd[0] = len;
    Tensor slice(wd, std::vector<double>(encoded.ptr() + start * per, encoded.ptr() + (start + len) * per));
    Rng unused(0);
    const Tensor y = head_forward(params, cfg, slice, false, unused, nullptr);
    return std::vector<double>(y.data().begin(), y.data().end());
  });
}

}  // namespace rmen::model
