#pragma once

// End-to-end orchestration shared by the command-line tool and the
// acceptance suite: dataset synthesis, training, prediction, decomposition
// and evaluation for RMEN and the baselines.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rmen/baselines.hpp"
#include "rmen/binary.hpp"
#include "rmen/decompose.hpp"
#include "rmen/evaluation.hpp"
#include "rmen/io.hpp"
#include "rmen/labels.hpp"
#include "rmen/model/checkpoint.hpp"
#include "rmen/model/fit.hpp"
#include "rmen/model/inference.hpp"
#include "rmen/parallel.hpp"
#include "rmen/phantom.hpp"
#include "rmen/run_config.hpp"

namespace rmen::pipeline {

namespace fs = std::filesystem;
using Logger = std::function<void(const std::string&)>;

enum class Split { train, val, test, irregular };

inline std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::irregular: return "irregular";
  }
  return "unknown";
}

inline std::size_t split_count(const RunConfig& rc, Split s) {
  switch (s) {
    case Split::train: return rc.splits.train;
    case Split::val: return rc.splits.val;
    case Split::test: return rc.splits.test;
    case Split::irregular: return rc.splits.irregular;
  }
  return 0;
}

inline std::string sequence_id(Split s, std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu", i);
  return split_name(s) + "_" + buf;
}

/// Adds one skipped beat (in the second quarter of the sequence) and one
/// 4-second breath hold (in the third quarter).
inline void add_irregular_events(phantom::PhantomConfig& c, Rng& rng) {
  const auto frames = static_cast<double>(c.frames);
  const auto beat = static_cast<std::size_t>(std::ceil(c.fps * 1.1 / c.cardiac_rate_hz));
  const auto skip_start = static_cast<std::size_t>(rng.uniform(0.25, 0.4) * frames);
  c.events.push_back({phantom::EventKind::skipped_beat, skip_start, std::min(beat, c.frames - skip_start), 0.0});
  const auto hold_start = static_cast<std::size_t>(rng.uniform(0.55, 0.65) * frames);
  const auto hold = std::min(static_cast<std::size_t>(std::lround(4.0 * c.fps)), c.frames - hold_start);
  c.events.push_back({phantom::EventKind::breath_hold, hold_start, hold, 0.0});
}

/// Phantom config of sequence `i` of a split. Irregular sequence i shares the
/// seed, rates and phases of test sequence i and adds the two events.
inline phantom::PhantomConfig sequence_config(const RunConfig& rc, Split split, std::size_t i) {
  const Split base = split == Split::irregular ? Split::test : split;
  phantom::PhantomConfig c = rc.phantom;
  c.seed = mix_seed(mix_seed(rc.seed) ^ mix_seed((static_cast<std::uint64_t>(base) << 32) + i));
  Rng draw = Rng(c.seed).derive(0x5EED);
  c.cardiac_rate_hz = draw.uniform(rc.spread.cardiac_rate_min_hz, rc.spread.cardiac_rate_max_hz);
  c.resp_rate_hz = draw.uniform(rc.spread.resp_rate_min_hz, rc.spread.resp_rate_max_hz);
  const double cardiac_phase = draw.uniform(), resp_phase = draw.uniform();
  if (rc.spread.random_phase) {
    c.cardiac_phase0 = cardiac_phase;
    c.resp_phase0 = resp_phase;
  }
  if (split == Split::irregular) {
    Rng ev = Rng(c.seed).derive(0xE7);
    add_irregular_events(c, ev);
  }
  return c;
}

inline std::vector<phantom::PhantomSequence> generate_split(const RunConfig& rc, Split split) {
  std::vector<phantom::PhantomSequence> out(split_count(rc, split));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = phantom::generate_sequence(sequence_config(rc, split, i), sequence_id(split, i));
  }
  return out;
}

/// Training targets from the ECG: QRS detection, frame mapping, labels.
inline labels::PhaseLabelSeries ecg_labels(const EcgTrace& ecg, std::size_t frames, double fps) {
  const auto peaks = labels::detect_qrs(ecg);
  const auto mapped = labels::map_peaks(peaks, fps);
  return labels::build_targets(mapped.frames, frames, fps);
}

/// Model settings with the run seed folded in, so RMEN_SEED reaches training.
inline model::RmenConfig effective_model(const RunConfig& rc) {
  model::RmenConfig m = rc.model;
  m.seed = mix_seed(rc.seed ^ mix_seed(rc.model.seed + 0x40DE1));
  return m;
}

inline decompose::Decomposition decompose(const std::vector<double>& curve, const RunConfig& rc) {
  return decompose::decompose_curve(curve, rc.phantom.fps, rc.filters);
}

inline evaluation::EvaluationOptions eval_options(const RunConfig& rc) {
  return rc.eval.options(rc.phantom.fps, rc.filters.cardiac_high_hz);
}

// ---------------------------------------------------------------------------
// RMEN

struct LabeledSet {
  std::vector<phantom::PhantomSequence> sequences;
  std::vector<labels::PhaseLabelSeries> labels;

  std::vector<model::LabeledVideo> views() const {
    std::vector<model::LabeledVideo> v;
    for (std::size_t i = 0; i < sequences.size(); ++i) v.push_back({&sequences[i].video, &labels[i]});
    return v;
  }
};

inline LabeledSet labeled_split(const RunConfig& rc, Split split) {
  LabeledSet s;
  s.sequences = generate_split(rc, split);
  for (const auto& q : s.sequences) s.labels.push_back(ecg_labels(q.ecg, q.video.frames, q.video.fps));
  return s;
}

inline model::TrainResult train_rmen(const RunConfig& rc, const std::vector<model::LabeledVideo>& train,
                                     const std::vector<model::LabeledVideo>& val, const Logger& log = {}) {
  const model::RmenConfig m = effective_model(rc);
  Rng init(m.seed);
  auto params = model::init_parameters(m, init);
  return model::fit(std::move(params), m, train, val, [&](const model::EpochRecord& e) {
    if (log) {
      std::ostringstream os;
      os << "rmen epoch " << e.epoch << " train_loss " << e.train_loss << " val_mse " << e.val_mse;
      log(os.str());
    }
  });
}

inline std::vector<double> rmen_curve(const model::ParameterSet& p, const model::RmenConfig& c, const VideoSequence& v) {
  return model::predict_sequence(p, c, v).median;
}

// ---------------------------------------------------------------------------
// PCA baselines

/// Frozen PCA + standardization fitted on training frames.
struct PcaFeatures {
  baselines::PcaModel pca;
  baselines::Standardizer standardizer;

  Eigen::MatrixXd operator()(const VideoSequence& v) const {
    return standardizer.apply(baselines::project_video(pca, v));
  }
};

inline PcaFeatures fit_pca_features(const RunConfig& rc, const std::vector<const VideoSequence*>& train_videos) {
  PcaFeatures f;
  f.pca = baselines::fit_pca(baselines::sample_frames(train_videos, rc.baselines.pca_max_frames), rc.baselines.pca_variance,
                             rc.baselines.pca_max_components);
  std::vector<Eigen::MatrixXd> blocks;
  for (const auto* v : train_videos) blocks.push_back(baselines::project_video(f.pca, *v));
  f.standardizer = baselines::Standardizer::fit(blocks);
  return f;
}

inline baselines::RidgeModel train_ridge(const RunConfig& rc, const std::vector<baselines::FeatureSequence>& train) {
  std::size_t rows = 0;
  for (const auto& s : train) {
    for (bool l : s.labels->labeled) rows += l ? 1 : 0;
  }
  if (rows == 0) throw InsufficientDataError("ridge: no labeled training frames");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows), train.front().features.cols());
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows));
  Eigen::Index r = 0;
  for (const auto& s : train) {
    for (std::size_t t = 0; t < s.labels->labeled.size(); ++t) {
      if (!s.labels->labeled[t]) continue;
      x.row(r) = s.features.row(static_cast<Eigen::Index>(t));
      y(r++) = s.labels->targets[t];
    }
  }
  return baselines::fit_ridge(x, y, rc.baselines.ridge_lambda);
}

inline baselines::LstmRegressorConfig lstm_regressor_config(const RunConfig& rc) {
  const model::RmenConfig m = effective_model(rc);
  baselines::LstmRegressorConfig c;
  c.hidden = rc.baselines.lstm_hidden;
  c.window_len = m.window_len;
  c.stride = m.stride;
  c.train.adam.learning_rate = rc.baselines.lstm_learning_rate;
  c.train.batch_size = m.batch_size;
  c.train.max_epochs = rc.baselines.lstm_max_epochs;
  c.train.patience = rc.baselines.lstm_patience;
  c.train.windows_per_epoch = rc.baselines.lstm_windows_per_epoch;
  c.train.seed = mix_seed(m.seed + 0x757);
  return c;
}

inline model::TrainResult train_pca_lstm(const RunConfig& rc, std::size_t features,
                                         const std::vector<baselines::FeatureSequence>& train,
                                         const std::vector<baselines::FeatureSequence>& val, const Logger& log = {}) {
  const auto c = lstm_regressor_config(rc);
  Rng init(c.train.seed);
  auto params = baselines::init_lstm_regressor(features, c.hidden, init);
  return baselines::fit_lstm_regressor(std::move(params), c, train, val, effective_model(rc).val_windows,
                                       [&](const model::EpochRecord& e) {
                                         if (log) {
                                           std::ostringstream os;
                                           os << "pca-lstm epoch " << e.epoch << " train_loss " << e.train_loss
                                              << " val_mse " << e.val_mse;
                                           log(os.str());
                                         }
                                       });
}

inline std::vector<double> ridge_curve(const baselines::RidgeModel& r, const PcaFeatures& f, const VideoSequence& v) {
  const Eigen::VectorXd y = r.predict(f(v));
  return {y.data(), y.data() + y.size()};
}

inline std::vector<double> lstm_curve(const model::ParameterSet& p, const baselines::LstmRegressorConfig& c,
                                      const PcaFeatures& f, const VideoSequence& v) {
  return baselines::predict_lstm_regressor(p, c, f(v)).median;
}

// ---------------------------------------------------------------------------
// Evaluation helpers

struct Curve {
  std::string id;
  std::vector<double> raw;
};

/// Decomposes each raw curve and scores its cardiac component against the
/// reference beat frames (same order as `curves`).
inline evaluation::RunReport evaluate_curves(const RunConfig& rc, const std::vector<Curve>& curves,
                                             const std::vector<std::vector<std::size_t>>& references) {
  if (curves.size() != references.size()) throw ShapeError("evaluate_curves: curve/reference count mismatch");
  std::vector<evaluation::SequenceCurve> sc;
  for (std::size_t i = 0; i < curves.size(); ++i) {
    sc.push_back({curves[i].id, references[i], decompose(curves[i].raw, rc).cardiac});
  }
  return evaluation::evaluate_run(sc, eval_options(rc));
}

struct IrregularCheck {
  std::string id;
  long missed_regular = 0;
  long missed_irregular = 0;
  std::size_t spurious = 0;  // unmatched detections in the first half of a skipped interval

  long missed_increase() const { return missed_irregular - missed_regular; }
};

/// Counts detections strictly inside the first half of each interval that
/// a skipped beat doubled and that no reference peak claimed.
inline std::size_t spurious_in_skipped(const std::vector<std::size_t>& reference, const evaluation::SequenceReport& s,
                                       const std::vector<double>& skipped_s, double fps) {
  std::size_t count = 0;
  for (double t : skipped_s) {
    const double removed = t * fps;
    auto b = std::upper_bound(reference.begin(), reference.end(), static_cast<std::size_t>(std::floor(removed)));
    if (b == reference.begin() || b == reference.end()) continue;
    const double lo = static_cast<double>(*(b - 1)), hi = static_cast<double>(*b);
    const double half = lo + 0.5 * (hi - lo);
    for (std::size_t p : s.detected) {
      const double pf = static_cast<double>(p);
      if (pf <= lo || pf >= half) continue;
      const bool matched = std::any_of(s.report.pairs.begin(), s.report.pairs.end(),
                                       [&](const evaluation::MatchedPair& m) { return m.pred == static_cast<long>(p); });
      if (!matched) ++count;
    }
  }
  return count;
}

// ---------------------------------------------------------------------------
// Benchmark

struct MethodReport {
  std::string key;       // file-name stem
  std::string title;     // table row name
  std::string training;  // "yes" / "N/A"
  evaluation::RunReport report;
};

struct BenchResult {
  std::vector<MethodReport> methods;  // rmen, pca-lstm, pca-ridge, density
  evaluation::RunReport rmen_irregular;
  std::vector<IrregularCheck> irregular_checks;
  model::TrainResult rmen_training;
  model::TrainResult pca_lstm_training;
  model::RmenConfig model_config;
  std::size_t pca_components = 0;
  phantom::PhantomSequence probe_sequence;  // first test sequence, for feature inspection
  std::vector<std::string> files;           // metric CSVs written
  double seconds = 0.0;

  const MethodReport& method(const std::string& key) const {
    for (const auto& m : methods) {
      if (m.key == key) return m;
    }
    throw ConfigError("no method '" + key + "' in bench result");
  }
};

inline std::string comparison_csv(const BenchResult& r) {
  std::string out = "method,training,mean_abs_offset,missed,false_positives,total_ref\n";
  for (const auto& m : r.methods) {
    const auto& a = m.report.aggregate;
    out += m.title + "," + m.training + "," + io::format_number(a.mean_abs_offset()) + "," + std::to_string(a.missed) + "," +
           std::to_string(a.false_positives) + "," + std::to_string(a.total_ref) + "\n";
  }
  return out;
}

inline std::string comparison_markdown(const BenchResult& r) {
  std::ostringstream os;
  os << "| Method | Training | Offset/frame | True Negative (missed) | False Positive | Total |\n";
  os << "|---|---|---|---|---|---|\n";
  for (const auto& m : r.methods) {
    const auto& a = m.report.aggregate;
    char offset[32];
    std::snprintf(offset, sizeof offset, "%.2f", a.mean_abs_offset());
    os << "| " << m.title << " | " << m.training << " | " << offset << " | " << a.missed << " | " << a.false_positives
       << " | " << a.total_ref << " |\n";
  }
  os << "\nPCA+Ridge stands in for the PCA+SVR comparison row.\n";
  return os.str();
}

inline std::string history_csv(const std::vector<model::EpochRecord>& h) {
  std::string out = "epoch,train_loss,val_mse\n";
  for (const auto& e : h) {
    out += std::to_string(e.epoch) + "," + io::format_number(e.train_loss) + "," + io::format_number(e.val_mse) + "\n";
  }
  return out;
}

inline std::string irregular_csv(const std::vector<IrregularCheck>& checks) {
  std::string out = "id,missed_regular,missed_irregular,missed_increase,spurious_in_skipped\n";
  for (const auto& c : checks) {
    out += c.id + "," + std::to_string(c.missed_regular) + "," + std::to_string(c.missed_irregular) + "," +
           std::to_string(c.missed_increase()) + "," + std::to_string(c.spurious) + "\n";
  }
  return out;
}

/// Runs the whole comparison in memory and writes reports to `out`.
inline BenchResult run_bench(const RunConfig& rc, const fs::path& out, const Logger& log = {}) {
  rc.validate();
  const auto started = std::chrono::steady_clock::now();
  auto say = [&](const std::string& m) {
    if (log) log(m);
  };
  BenchResult result;
  result.model_config = effective_model(rc);

  say("generating train/val sequences");
  LabeledSet train = labeled_split(rc, Split::train);
  LabeledSet val = labeled_split(rc, Split::val);
  if (train.sequences.empty() || val.sequences.empty()) throw InsufficientDataError("bench needs train and val sequences");

  say("fitting PCA features");
  std::vector<const VideoSequence*> train_videos;
  for (const auto& s : train.sequences) train_videos.push_back(&s.video);
  const PcaFeatures pca = fit_pca_features(rc, train_videos);
  result.pca_components = pca.pca.k;
  std::vector<baselines::FeatureSequence> train_f, val_f;
  for (std::size_t i = 0; i < train.sequences.size(); ++i) train_f.push_back({pca(train.sequences[i].video), &train.labels[i]});
  for (std::size_t i = 0; i < val.sequences.size(); ++i) val_f.push_back({pca(val.sequences[i].video), &val.labels[i]});

  say("training RMEN");
  result.rmen_training = train_rmen(rc, train.views(), val.views(), log);
  train.sequences.clear();
  val.sequences.clear();

  say("training PCA+LSTM and PCA+ridge");
  result.pca_lstm_training = train_pca_lstm(rc, pca.pca.k, train_f, val_f, log);
  const auto ridge = train_ridge(rc, train_f);
  const auto lstm_cfg = lstm_regressor_config(rc);

  say("predicting test sequences");
  const auto test = generate_split(rc, Split::test);
  if (test.empty()) throw InsufficientDataError("bench needs test sequences");
  std::vector<Curve> rmen_c, lstm_c, ridge_c, dens_c;
  std::vector<std::vector<std::size_t>> refs;
  for (const auto& s : test) {
    rmen_c.push_back({s.video.id, rmen_curve(result.rmen_training.params, result.model_config, s.video)});
    lstm_c.push_back({s.video.id, lstm_curve(result.pca_lstm_training.params, lstm_cfg, pca, s.video)});
    ridge_c.push_back({s.video.id, ridge_curve(ridge, pca, s.video)});
    dens_c.push_back({s.video.id, baselines::density_flow(s.video)});
    refs.push_back(s.truth.beat_frames);
  }
  result.methods.push_back({"rmen", "RMEN", "yes", evaluate_curves(rc, rmen_c, refs)});
  result.methods.push_back({"pca_lstm", "PCA+LSTM", "yes", evaluate_curves(rc, lstm_c, refs)});
  result.methods.push_back({"pca_ridge", "PCA+Ridge", "yes", evaluate_curves(rc, ridge_c, refs)});
  result.methods.push_back({"density", "DensityFlow", "N/A", evaluate_curves(rc, dens_c, refs)});
  result.probe_sequence = test.front();

  if (rc.splits.irregular > 0) {
    say("predicting irregular sequences");
    const auto irregular = generate_split(rc, Split::irregular);
    std::vector<Curve> irr_c;
    std::vector<std::vector<std::size_t>> irr_refs;
    for (const auto& s : irregular) {
      irr_c.push_back({s.video.id, rmen_curve(result.rmen_training.params, result.model_config, s.video)});
      irr_refs.push_back(s.truth.beat_frames);
    }
    result.rmen_irregular = evaluate_curves(rc, irr_c, irr_refs);
    const auto& regular = result.method("rmen").report;
    for (std::size_t i = 0; i < irregular.size(); ++i) {
      const auto& irr = result.rmen_irregular.sequences[i];
      IrregularCheck c;
      c.id = irr.id;
      c.missed_regular = static_cast<long>(regular.sequences[i].report.missed);
      c.missed_irregular = static_cast<long>(irr.report.missed);
      c.spurious = spurious_in_skipped(irr_refs[i], irr, irregular[i].truth.skipped_beat_s, rc.phantom.fps);
      result.irregular_checks.push_back(c);
    }
  }

  say("writing reports");
  auto write = [&](const std::string& name, const std::string& text) {
    binary::write_file_atomic(out / name, text);
    result.files.push_back(name);
  };
  for (const auto& m : result.methods) write("report_" + m.key + ".csv", io::report_csv(m.report));
  if (rc.splits.irregular > 0) {
    write("report_rmen_irregular.csv", io::report_csv(result.rmen_irregular));
    write("irregular_check.csv", irregular_csv(result.irregular_checks));
  }
  write("comparison.csv", comparison_csv(result));
  write("rmen_history.csv", history_csv(result.rmen_training.history));
  write("pca_lstm_history.csv", history_csv(result.pca_lstm_training.history));
  binary::write_file_atomic(out / "comparison.md", comparison_markdown(result));
  binary::write_file_atomic(out / "config.json", run_config_to_json(rc).dump(2) + "\n");
  model::save_checkpoint({result.rmen_training.params, result.model_config, result.rmen_training.history}, out / "rmen.rmck");
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace rmen::pipeline
