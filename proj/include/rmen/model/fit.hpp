#pragma once

// Training the network on labeled videos.

#include <vector>

#include "rmen/labels.hpp"
#include "rmen/model/config.hpp"
#include "rmen/model/network.hpp"
#include "rmen/model/train.hpp"
#include "rmen/signals.hpp"

namespace rmen::model {

struct LabeledVideo {
  const VideoSequence* video = nullptr;
  const labels::PhaseLabelSeries* labels = nullptr;
};

struct WindowRef {
  std::size_t sequence = 0;
  std::size_t start = 0;
};

/// Fully labeled windows on a `stride` grid. When `max_count` is nonzero the
/// list is thinned to that many evenly spaced entries.
inline std::vector<WindowRef> collect_windows(const std::vector<LabeledVideo>& data, std::size_t len, std::size_t stride,
                                              std::size_t max_count = 0) {
  std::vector<WindowRef> refs;
  for (std::size_t s = 0; s < data.size(); ++s) {
    const auto& lab = *data[s].labels;
    if (lab.labeled.size() != data[s].video->frames) throw ShapeError("labels do not match video length");
    for (std::size_t start = 0; start + len <= data[s].video->frames; start += stride) {
      if (lab.all_labeled(start, len)) refs.push_back({s, start});
    }
  }
  if (max_count != 0 && refs.size() > max_count) {
    std::vector<WindowRef> thin;
    thin.reserve(max_count);
    for (std::size_t i = 0; i < max_count; ++i) thin.push_back(refs[i * refs.size() / max_count]);
    refs = std::move(thin);
  }
  return refs;
}

inline double window_sse(const Tensor& pred, const labels::PhaseLabelSeries& lab, std::size_t start, Tensor* grad,
                         double scale) {
  double sse = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double err = pred[i] - lab.targets[start + i];
    sse += err * err;
    if (grad) (*grad)[i] = 2.0 * err * scale;
  }
  return sse;
}

inline TrainOptions train_options(const RmenConfig& cfg) {
  TrainOptions o;
  o.adam.learning_rate = cfg.learning_rate;
  o.batch_size = cfg.batch_size;
  o.max_epochs = cfg.max_epochs;
  o.patience = cfg.patience;
  o.windows_per_epoch = cfg.windows_per_epoch;
  o.seed = cfg.seed;
  return o;
}

/// Minimizes the per-frame MSE to the sine-softened targets, keeping the
/// parameters of the best validation epoch. Dropout stays off for the first
/// `dropout_warmup_epochs` epochs: from a random start, the dropout noise
/// term of the loss otherwise drives the head to a constant output before
/// any motion features are learned.
inline TrainResult fit(ParameterSet params, const RmenConfig& cfg, const std::vector<LabeledVideo>& train_set,
                       const std::vector<LabeledVideo>& val_set,
                       const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  check_parameters(params, cfg);
  const auto train_refs = collect_windows(train_set, cfg.window_len, cfg.train_stride);
  const auto val_refs = collect_windows(val_set, cfg.window_len, cfg.window_len, cfg.val_windows);
  RmenConfig active = cfg;
  WindowTask task;
  task.begin_epoch = [&](std::size_t epoch) {
    active.dropout_rate = epoch <= cfg.dropout_warmup_epochs ? 0.0 : cfg.dropout_rate;
  };
  task.train_windows = train_refs.size();
  task.val_windows = val_refs.size();
  task.frames_per_window = cfg.window_len;
  task.train_step = [&](const ParameterSet& p, std::size_t idx, Rng& rng, ParameterSet& grads, double scale) {
    const auto& ref = train_refs[idx];
    const auto& item = train_set[ref.sequence];
    ForwardCache cache;
    const Tensor pred = forward(p, active, input_window(*item.video, ref.start, cfg.window_len), true, rng, &cache);
    Tensor g(pred.dims());
    const double sse = window_sse(pred, *item.labels, ref.start, &g, scale);
    backward(p, active, cache, g, grads);
    return sse;
  };
  task.val_sse = [&](const ParameterSet& p, std::size_t idx) {
    const auto& ref = val_refs[idx];
    const auto& item = val_set[ref.sequence];
    Rng unused(0);
    const Tensor pred = forward(p, cfg, input_window(*item.video, ref.start, cfg.window_len), false, unused, nullptr);
    return window_sse(pred, *item.labels, ref.start, nullptr, 0.0);
  };
  return train(std::move(params), task, train_options(cfg), on_epoch);
}

}  // namespace rmen::model
