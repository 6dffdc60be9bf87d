#pragma once

// Mini-batch Adam with validation-based early stopping. The loop is written
// against a small task interface so the main network and the vector-LSTM
// baseline share it.

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "rmen/error.hpp"
#include "rmen/model/parameters.hpp"
#include "rmen/parallel.hpp"
#include "rmen/rng.hpp"

namespace rmen::model {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(const ParameterSet& params, AdamOptions opt) : opt_(opt), m_(params.zeros_like()), v_(params.zeros_like()) {}

  void step(ParameterSet& params, const ParameterSet& grads) {
    params.require_same_layout(grads);
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    auto& pe = params.entries();
    const auto& ge = grads.entries();
    for (std::size_t k = 0; k < pe.size(); ++k) {
      Tensor& p = pe[k].value;
      const Tensor& g = ge[k].value;
      Tensor& m = m_.entries()[k].value;
      Tensor& v = v_.entries()[k].value;
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * g[i];
        v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * g[i] * g[i];
        p[i] -= opt_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + opt_.epsilon);
      }
    }
  }

 private:
  AdamOptions opt_;
  ParameterSet m_, v_;
  std::size_t t_ = 0;
};

struct TrainOptions {
  AdamOptions adam;
  std::size_t batch_size = 4;
  std::size_t max_epochs = 50;
  std::size_t patience = 10;
  std::size_t windows_per_epoch = 0;  // 0: every training window each epoch
  std::uint64_t seed = 0;
};

/// What the loop needs from a model + dataset.
struct WindowTask {
  std::size_t train_windows = 0;
  std::size_t val_windows = 0;
  std::size_t frames_per_window = 1;
  /// Training-mode pass over train window `idx`: returns its sum of squared
  /// errors and adds `scale` times the SSE gradient into `grads`.
  std::function<double(const ParameterSet&, std::size_t idx, Rng&, ParameterSet& grads, double scale)> train_step;
  /// Inference-mode sum of squared errors on validation window `idx`.
  std::function<double(const ParameterSet&, std::size_t idx)> val_sse;
  /// Optional hook run before each epoch (1-based), e.g. for schedules.
  std::function<void(std::size_t epoch)> begin_epoch;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_mse = 0.0;
};

struct TrainResult {
  ParameterSet params;  // parameters of the best validation epoch
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_mse = std::numeric_limits<double>::infinity();
};

inline double validation_mse(const ParameterSet& params, const WindowTask& task) {
  if (task.val_windows == 0) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> sse(task.val_windows);
  parallel_for(task.val_windows, [&](std::size_t i) { sse[i] = task.val_sse(params, i); });
  double total = 0.0;
  for (double s : sse) total += s;
  return total / static_cast<double>(task.val_windows * task.frames_per_window);
}

inline TrainResult train(ParameterSet params, const WindowTask& task, const TrainOptions& opt,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  if (task.train_windows == 0) throw InsufficientDataError("train: empty training set");
  if (opt.batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
  Adam adam(params, opt.adam);
  TrainResult result;
  result.params = params;
  const Rng root(opt.seed);
  Rng order_rng = root.derive(0xE0);
  std::vector<std::size_t> order(task.train_windows);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t per_epoch =
      opt.windows_per_epoch == 0 ? task.train_windows : std::min(opt.windows_per_epoch, task.train_windows);
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= opt.max_epochs; ++epoch) {
    if (task.begin_epoch) task.begin_epoch(epoch);
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < per_epoch; begin += opt.batch_size) {
      const std::size_t count = std::min(opt.batch_size, per_epoch - begin);
      const double scale = 1.0 / static_cast<double>(count * task.frames_per_window);
      std::vector<ParameterSet> grads(count);
      std::vector<double> sse(count);
      parallel_for(count, [&](std::size_t b) {
        grads[b] = params.zeros_like();
        Rng rng = root.derive((epoch << 32) + begin + b + 1);
        sse[b] = task.train_step(params, order[begin + b], rng, grads[b], scale);
      });
      ParameterSet total = std::move(grads[0]);
      double batch_sse = sse[0];
      for (std::size_t b = 1; b < count; ++b) {
        total += grads[b];
        batch_sse += sse[b];
      }
      const double loss = batch_sse * scale;
      if (!std::isfinite(loss) || !total.all_finite()) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches));
      }
      adam.step(params, total);
      loss_sum += loss;
      ++batches;
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(batches), validation_mse(params, task)};
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    const double score = std::isnan(rec.val_mse) ? rec.train_loss : rec.val_mse;
    if (score < result.best_val_mse) {
      result.best_val_mse = score;
      result.best_epoch = epoch;
      result.params = params;
      stale = 0;
    } else if (++stale >= opt.patience) {
      break;
    }
  }
  return result;
}

}  // namespace rmen::model
