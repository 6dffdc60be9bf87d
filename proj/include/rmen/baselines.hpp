#pragma once

// Comparison methods: the frame-intensity signal (DensityFlow), PCA frame
// features, a vector LSTM regressor on those features and a per-frame ridge
// regressor standing in for the support-vector regressor.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rmen/error.hpp"
#include "rmen/labels.hpp"
#include "rmen/model/convlstm.hpp"
#include "rmen/model/gradcheck.hpp"
#include "rmen/model/inference.hpp"
#include "rmen/model/train.hpp"
#include "rmen/ops.hpp"
#include "rmen/signals.hpp"

namespace rmen::baselines {

/// Mean intensity per frame, minus its average over the sequence.
inline std::vector<double> density_flow(const VideoSequence& video) {
  video.validate();
  std::vector<double> s(video.frames);
  for (std::size_t t = 0; t < video.frames; ++t) {
    double sum = 0.0;
    for (float p : video.frame(t)) sum += p;
    s[t] = sum / static_cast<double>(video.frame_size());
  }
  double mean = 0.0;
  for (double v : s) mean += v;
  mean /= static_cast<double>(s.size());
  for (double& v : s) v -= mean;
  return s;
}

// ---------------------------------------------------------------------------
// PCA

struct PcaModel {
  Eigen::VectorXd mean;          // [D]
  Eigen::MatrixXd components;    // [k, D], orthonormal rows
  std::vector<double> explained; // variance ratio of each retained component
  std::size_t k = 0;
};

/// PCA of the rows of `x` [N, D] through the N x N Gram matrix. Keeps the
/// fewest components whose cumulative explained ratio exceeds `threshold`,
/// capped at `max_components`.
inline PcaModel fit_pca(const Eigen::MatrixXd& x, double threshold = 0.95, std::size_t max_components = 50) {
  const auto n = x.rows();
  if (n < 2) throw InsufficientDataError("fit_pca: need at least 2 rows");
  if (max_components == 0) throw ConfigError("fit_pca: max_components must be >= 1");
  PcaModel m;
  m.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - m.mean.transpose();
  const Eigen::MatrixXd gram = centered * centered.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success) throw NumericError("fit_pca: eigendecomposition failed");
  const Eigen::VectorXd values = eig.eigenvalues().reverse();  // descending
  const Eigen::MatrixXd vectors = eig.eigenvectors().rowwise().reverse();
  const double total = values.cwiseMax(0.0).sum();
  const double floor = 1e-12 * std::max(1.0, values(0));
  if (!(total > floor)) throw InsufficientDataError("fit_pca: data has rank 0 (all rows identical)");
  std::size_t rank = 0;
  while (rank < static_cast<std::size_t>(n) && values(static_cast<Eigen::Index>(rank)) > floor) ++rank;
  double cumulative = 0.0;
  for (std::size_t c = 0; c < rank && c < max_components; ++c) {
    const double ratio = values(static_cast<Eigen::Index>(c)) / total;
    m.explained.push_back(ratio);
    cumulative += ratio;
    ++m.k;
    if (cumulative > threshold) break;
  }
  m.components.resize(static_cast<Eigen::Index>(m.k), x.cols());
  for (std::size_t c = 0; c < m.k; ++c) {
    const auto ci = static_cast<Eigen::Index>(c);
    // Right singular vector: X^T u / sigma.
    m.components.row(ci) = (centered.transpose() * vectors.col(ci)).transpose() / std::sqrt(values(ci));
  }
  return m;
}

inline Eigen::VectorXd project(const PcaModel& m, const Eigen::VectorXd& row) {
  if (row.size() != m.mean.size()) throw ShapeError("project: feature length does not match the PCA model");
  return m.components * (row - m.mean);
}

inline Eigen::VectorXd reconstruct(const PcaModel& m, const Eigen::VectorXd& coeffs) {
  return m.mean + m.components.transpose() * coeffs;
}

inline Eigen::VectorXd frame_vector(const VideoSequence& v, std::size_t t) {
  Eigen::VectorXd row(static_cast<Eigen::Index>(v.frame_size()));
  const auto f = v.frame(t);
  for (std::size_t i = 0; i < f.size(); ++i) row(static_cast<Eigen::Index>(i)) = f[i];
  return row;
}

/// Up to `max_frames` frames spread evenly over the training videos.
inline Eigen::MatrixXd sample_frames(const std::vector<const VideoSequence*>& videos, std::size_t max_frames) {
  std::vector<std::pair<std::size_t, std::size_t>> all;
  for (std::size_t s = 0; s < videos.size(); ++s) {
    for (std::size_t t = 0; t < videos[s]->frames; ++t) all.emplace_back(s, t);
  }
  if (all.empty()) throw InsufficientDataError("sample_frames: no frames");
  const std::size_t n = std::min(max_frames, all.size());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(videos.front()->frame_size()));
  for (std::size_t i = 0; i < n; ++i) {
    const auto [s, t] = all[i * all.size() / n];
    x.row(static_cast<Eigen::Index>(i)) = frame_vector(*videos[s], t).transpose();
  }
  return x;
}

/// Per-frame PCA coefficients [T, k].
inline Eigen::MatrixXd project_video(const PcaModel& m, const VideoSequence& v) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(v.frames), static_cast<Eigen::Index>(m.k));
  for (std::size_t t = 0; t < v.frames; ++t) out.row(static_cast<Eigen::Index>(t)) = project(m, frame_vector(v, t)).transpose();
  return out;
}

/// Column-wise standardization fitted on training features.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer fit(const std::vector<Eigen::MatrixXd>& blocks) {
    if (blocks.empty()) throw InsufficientDataError("Standardizer: no data");
    const auto cols = blocks.front().cols();
    Standardizer s;
    s.mean = Eigen::RowVectorXd::Zero(cols);
    Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(cols);
    double n = 0.0;
    for (const auto& b : blocks) {
      s.mean += b.colwise().sum();
      n += static_cast<double>(b.rows());
    }
    s.mean /= n;
    for (const auto& b : blocks) sq += (b.rowwise() - s.mean).array().square().matrix().colwise().sum();
    s.scale = (sq / n).array().sqrt().max(1e-12).matrix();
    return s;
  }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
    return ((x.rowwise() - mean).array().rowwise() / scale.array()).matrix();
  }
};

// ---------------------------------------------------------------------------
// Ridge regression

struct RidgeModel {
  Eigen::VectorXd weights;
  Eigen::RowVectorXd x_mean;
  double intercept = 0.0;

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const {
    return ((x.rowwise() - x_mean) * weights).array() + intercept;
  }
};

/// Solves (Xc^T Xc + lambda I) w = Xc^T yc on centered data; the intercept
/// restores the means.
inline RidgeModel fit_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda = 1.0) {
  if (x.rows() != y.size()) throw ShapeError("fit_ridge: row count differs from target count");
  if (x.rows() < 1) throw InsufficientDataError("fit_ridge: no samples");
  if (!(lambda >= 0.0)) throw ConfigError("fit_ridge: lambda must be >= 0");
  RidgeModel m;
  m.x_mean = x.colwise().mean();
  const double y_mean = y.mean();
  const Eigen::MatrixXd xc = x.rowwise() - m.x_mean;
  Eigen::MatrixXd a = xc.transpose() * xc;
  a.diagonal().array() += lambda;
  const Eigen::VectorXd rhs = xc.transpose() * (y.array() - y_mean).matrix();
  m.weights = a.ldlt().solve(rhs);
  if (!m.weights.allFinite()) m.weights = a.completeOrthogonalDecomposition().solve(rhs);
  m.intercept = y_mean;
  return m;
}

// ---------------------------------------------------------------------------
// Vector LSTM on PCA features: the ConvLSTM cell at 1x1 extent with 1x1
// kernels, one layer, and a linear read-out per frame.

struct LstmRegressorConfig {
  std::size_t hidden = 32;
  std::size_t window_len = 16;
  std::size_t stride = 1;
  model::TrainOptions train;
};

inline model::ParameterSet init_lstm_regressor(std::size_t features, std::size_t hidden, Rng& rng) {
  model::ParameterSet p;
  model::init_lstm_layer(p, "lstm", features, hidden, 1, rng);
  p.add("dense.weight", model::glorot_uniform({1, hidden}, hidden, 1, rng));
  p.add("dense.bias", Tensor({1}));
  return p;
}

struct LstmRegressorCache {
  model::StackedLstm weights;
  std::vector<model::LstmStep> steps;
  Tensor hidden;  // [T, hidden]
};

/// `x` is [T, k]; returns predictions [T].
inline Tensor lstm_regressor_forward(const model::ParameterSet& p, const Tensor& x, LstmRegressorCache* cache) {
  require_rank(x, 2, "lstm regressor input");
  const std::size_t steps = x.dim(0), k = x.dim(1);
  std::vector<Tensor> seq(steps);
  for (std::size_t t = 0; t < steps; ++t) seq[t] = Tensor({k, 1, 1}, std::vector<double>(x.ptr() + t * k, x.ptr() + (t + 1) * k));
  model::StackedLstm s = model::stack_lstm(p, "lstm");
  if (s.in_channels != k) throw ShapeError("lstm regressor: expected " + std::to_string(s.in_channels) + " features");
  auto layer = model::lstm_forward(s, seq);
  Tensor h({steps, s.hidden});
  for (std::size_t t = 0; t < steps; ++t) std::copy_n(layer[t].h.ptr(), s.hidden, h.ptr() + t * s.hidden);
  Tensor y = ops::dense(h, p.at("dense.weight"), p.at("dense.bias"));
  require_finite(y, "lstm regressor");
  if (cache) *cache = {std::move(s), std::move(layer), std::move(h)};
  return std::move(y).reshaped({steps});
}

/// Accumulates parameter gradients; returns the input cotangent [T, k].
inline Tensor lstm_regressor_backward(const model::ParameterSet& p, const LstmRegressorCache& cache, const Tensor& grad_pred,
                                      model::ParameterSet& grads) {
  const std::size_t steps = grad_pred.size(), hid = cache.weights.hidden;
  auto g = ops::dense_backward(cache.hidden, p.at("dense.weight"), grad_pred.reshaped({steps, 1}));
  grads.at("dense.weight") += g.weights;
  grads.at("dense.bias") += g.bias;
  std::vector<Tensor> grad_h(steps, Tensor({hid, 1, 1}));
  for (std::size_t t = 0; t < steps; ++t) std::copy_n(g.input.ptr() + t * hid, hid, grad_h[t].ptr());
  Tensor gk(cache.weights.kernel.dims()), gb(cache.weights.bias.dims());
  auto gx = model::lstm_backward(cache.weights, cache.steps, grad_h, gk, gb);
  model::accumulate_unstacked(cache.weights, gk, gb, grads, "lstm");
  const std::size_t k = cache.weights.in_channels;
  Tensor out({steps, k});
  for (std::size_t t = 0; t < steps; ++t) std::copy_n(gx[t].ptr(), k, out.ptr() + t * k);
  return out;
}

/// Finite-difference check of the 1x1 cell and read-out.
inline model::GradcheckReport gradcheck_lstm_regressor(Rng& rng, const model::GradcheckOptions& opt = {},
                                                       std::size_t features = 3, std::size_t hidden = 4,
                                                       std::size_t steps = 5) {
  model::ParameterSet p = init_lstm_regressor(features, hidden, rng);
  for (auto& e : p.entries()) {
    if (e.value.rank() == 1) {
      for (std::size_t i = 0; i < e.value.size(); ++i) e.value[i] += rng.uniform(-0.1, 0.1);
    }
  }
  Tensor x({steps, features});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
  Tensor probe({steps});
  for (std::size_t i = 0; i < steps; ++i) probe[i] = rng.uniform(-1.0, 1.0);
  model::GradProblem problem;
  for (auto& e : p.entries()) problem.variables.emplace_back(e.name, &e.value);
  problem.variables.emplace_back("input", &x);
  problem.loss = [&](std::vector<std::size_t>* pattern) {
    if (pattern) pattern->clear();  // smooth everywhere
    const Tensor y = lstm_regressor_forward(p, x, nullptr);
    double s = 0.0;
    for (std::size_t t = 0; t < steps; ++t) s += probe[t] * y[t];
    return s;
  };
  problem.gradient = [&] {
    LstmRegressorCache cache;
    lstm_regressor_forward(p, x, &cache);
    model::ParameterSet grads = p.zeros_like();
    Tensor gin = lstm_regressor_backward(p, cache, probe, grads);
    std::vector<Tensor> out;
    for (auto& e : grads.entries()) out.push_back(std::move(e.value));
    out.push_back(std::move(gin));
    return out;
  };
  return model::check_gradients(problem, opt, rng);
}

/// A sequence of standardized features with its labels.
struct FeatureSequence {
  Eigen::MatrixXd features;  // [T, k]
  const labels::PhaseLabelSeries* labels = nullptr;
};

inline Tensor feature_window(const Eigen::MatrixXd& f, std::size_t start, std::size_t len) {
  Tensor x({len, static_cast<std::size_t>(f.cols())});
  for (std::size_t t = 0; t < len; ++t) {
    for (Eigen::Index c = 0; c < f.cols(); ++c) x[t * x.dim(1) + static_cast<std::size_t>(c)] = f(static_cast<Eigen::Index>(start + t), c);
  }
  return x;
}

inline model::TrainResult fit_lstm_regressor(model::ParameterSet params, const LstmRegressorConfig& cfg,
                                             const std::vector<FeatureSequence>& train_set,
                                             const std::vector<FeatureSequence>& val_set, std::size_t val_windows = 0,
                                             const std::function<void(const model::EpochRecord&)>& on_epoch = {}) {
  struct Ref {
    std::size_t seq, start;
  };
  auto collect = [&](const std::vector<FeatureSequence>& set, std::size_t stride, std::size_t cap) {
    std::vector<Ref> refs;
    for (std::size_t s = 0; s < set.size(); ++s) {
      const auto frames = static_cast<std::size_t>(set[s].features.rows());
      for (std::size_t start = 0; start + cfg.window_len <= frames; start += stride) {
        if (set[s].labels->all_labeled(start, cfg.window_len)) refs.push_back({s, start});
      }
    }
    if (cap != 0 && refs.size() > cap) {
      std::vector<Ref> thin;
      for (std::size_t i = 0; i < cap; ++i) thin.push_back(refs[i * refs.size() / cap]);
      refs = std::move(thin);
    }
    return refs;
  };
  const auto train_refs = collect(train_set, 1, 0);
  const auto val_refs = collect(val_set, cfg.window_len, val_windows);
  auto sse = [&](const Tensor& pred, const labels::PhaseLabelSeries& lab, std::size_t start, Tensor* grad, double scale) {
    double total = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double err = pred[i] - lab.targets[start + i];
      total += err * err;
      if (grad) (*grad)[i] = 2.0 * err * scale;
    }
    return total;
  };
  model::WindowTask task;
  task.train_windows = train_refs.size();
  task.val_windows = val_refs.size();
  task.frames_per_window = cfg.window_len;
  task.train_step = [&](const model::ParameterSet& p, std::size_t idx, Rng&, model::ParameterSet& grads, double scale) {
    const auto& ref = train_refs[idx];
    const auto& item = train_set[ref.seq];
    LstmRegressorCache cache;
    const Tensor pred = lstm_regressor_forward(p, feature_window(item.features, ref.start, cfg.window_len), &cache);
    Tensor g(pred.dims());
    const double e = sse(pred, *item.labels, ref.start, &g, scale);
    lstm_regressor_backward(p, cache, g, grads);
    return e;
  };
  task.val_sse = [&](const model::ParameterSet& p, std::size_t idx) {
    const auto& ref = val_refs[idx];
    const auto& item = val_set[ref.seq];
    const Tensor pred = lstm_regressor_forward(p, feature_window(item.features, ref.start, cfg.window_len), nullptr);
    return sse(pred, *item.labels, ref.start, nullptr, 0.0);
  };
  return model::train(std::move(params), task, cfg.train, on_epoch);
}

inline model::PredictionSeries predict_lstm_regressor(const model::ParameterSet& p, const LstmRegressorConfig& cfg,
                                                      const Eigen::MatrixXd& features) {
  return model::aggregate_windows(static_cast<std::size_t>(features.rows()), cfg.window_len, cfg.stride,
                                  [&](std::size_t start) {
                                    const Tensor y = lstm_regressor_forward(p, feature_window(features, start, cfg.window_len), nullptr);
                                    return std::vector<double>(y.data().begin(), y.data().end());
                                  });
}

}  // namespace rmen::baselines
