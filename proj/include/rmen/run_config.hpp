#pragma once

// The single JSON document that drives every command: phantom generation,
// dataset splits, the model, the decomposition filters, the evaluation
// protocol and the baselines.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "rmen/decompose.hpp"
#include "rmen/error.hpp"
#include "rmen/evaluation.hpp"
#include "rmen/model/config.hpp"
#include "rmen/model/train.hpp"
#include "rmen/phantom.hpp"

namespace rmen {

/// Per-sequence variation drawn around the base phantom config.
struct PhantomSpread {
  double cardiac_rate_min_hz = 0.9;
  double cardiac_rate_max_hz = 1.5;
  double resp_rate_min_hz = 0.2;
  double resp_rate_max_hz = 0.33;
  bool random_phase = true;
};

struct SplitSizes {
  std::size_t train = 60;
  std::size_t val = 20;
  std::size_t test = 20;
  std::size_t irregular = 20;  // paired with the first test sequences, plus events
};

struct EvalSettings {
  double window = 20.0;
  std::optional<std::size_t> min_distance;  // default floor(fps / cardiac high cutoff)
  double prominence_scale = 0.5;

  evaluation::EvaluationOptions options(double fps, double high_hz) const {
    evaluation::EvaluationOptions o;
    o.fps = fps;
    o.window = window;
    o.peaks.min_distance = min_distance;
    o.peaks.high_hz = high_hz;
    o.peaks.prominence_scale = prominence_scale;
    return o;
  }
};

struct BaselineSettings {
  std::size_t pca_max_frames = 1024;
  double pca_variance = 0.95;
  std::size_t pca_max_components = 50;
  double ridge_lambda = 1.0;
  std::size_t lstm_hidden = 32;
  double lstm_learning_rate = 1e-3;
  std::size_t lstm_max_epochs = 30;
  std::size_t lstm_patience = 5;
  std::size_t lstm_windows_per_epoch = 512;
};

/// Model settings sized for a single desktop CPU: a narrower encoder and
/// ConvLSTM than the library defaults and a sampled subset of training
/// windows per epoch.
inline model::RmenConfig bench_model_config() {
  model::RmenConfig m;
  m.encoder_channels = {4, 8, 8, 16, 16};
  m.convlstm_hidden = {16, 16};
  m.stride = 2;
  m.max_epochs = 30;
  m.patience = 6;
  m.windows_per_epoch = 128;
  m.val_windows = 64;
  m.dropout_warmup_epochs = 6;
  return m;
}

struct RunConfig {
  std::uint64_t seed = 2024;
  phantom::PhantomConfig phantom;
  PhantomSpread spread;
  SplitSizes splits;
  model::RmenConfig model = bench_model_config();
  decompose::DecomposeOptions filters;
  EvalSettings eval;
  BaselineSettings baselines;

  void validate() const {
    phantom.validate();
    model.validate();
    if (model.frame_height != phantom.height || model.frame_width != phantom.width) {
      throw ConfigError("model frame size must match the phantom frame size");
    }
    if (phantom.frames < model.window_len) throw ConfigError("phantom sequences are shorter than the model window");
    if (!(spread.cardiac_rate_min_hz > 0.0 && spread.cardiac_rate_min_hz <= spread.cardiac_rate_max_hz)) {
      throw ConfigError("spread: need 0 < cardiac_rate_min_hz <= cardiac_rate_max_hz");
    }
    if (!(spread.resp_rate_min_hz > 0.0 && spread.resp_rate_min_hz <= spread.resp_rate_max_hz)) {
      throw ConfigError("spread: need 0 < resp_rate_min_hz <= resp_rate_max_hz");
    }
    if (splits.irregular > splits.test) throw ConfigError("splits: irregular cannot exceed test (sequences are paired)");
    if (!(eval.window > 0.0)) throw ConfigError("eval: window must be positive");
    if (eval.min_distance && *eval.min_distance == 0) throw ConfigError("eval: min_distance must be >= 1");
    if (!(eval.prominence_scale >= 0.0)) throw ConfigError("eval: prominence_scale must be >= 0");
    decompose::FilterSpec::band_pass(filters.cardiac_low_hz, filters.cardiac_high_hz, phantom.fps).validate();
    decompose::FilterSpec::low_pass(filters.respiratory_cutoff_hz, phantom.fps).validate();
    if (baselines.pca_max_frames < 2 || baselines.pca_max_components == 0) throw ConfigError("baselines: bad PCA limits");
    if (!(baselines.pca_variance > 0.0 && baselines.pca_variance <= 1.0)) {
      throw ConfigError("baselines: pca_variance must be in (0,1]");
    }
    if (!(baselines.ridge_lambda >= 0.0)) throw ConfigError("baselines: ridge_lambda must be >= 0");
    if (baselines.lstm_hidden == 0) throw ConfigError("baselines: lstm_hidden must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// JSON

namespace detail {

/// Copies `key` into `field` when present.
template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key)) j.at(key).get_to(field);
}

inline void reject_unknown(const nlohmann::json& j, const nlohmann::json& known, const std::string& section) {
  if (!j.is_object()) throw ConfigError(section + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError(section + ": unknown key '" + key + "'");
  }
}

}  // namespace detail

inline nlohmann::json phantom_to_json(const phantom::PhantomConfig& c) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : c.events) {
    events.push_back({{"kind", phantom::to_string(e.kind)},
                      {"start_frame", e.start_frame},
                      {"duration_frames", e.duration_frames},
                      {"magnitude", e.magnitude}});
  }
  return {{"height", c.height},
          {"width", c.width},
          {"frames", c.frames},
          {"fps", c.fps},
          {"ecg_rate", c.ecg_rate},
          {"cardiac_rate_hz", c.cardiac_rate_hz},
          {"resp_rate_hz", c.resp_rate_hz},
          {"beat_jitter_sd", c.beat_jitter_sd},
          {"cardiac_amp_px", c.cardiac_amp_px},
          {"resp_amp_px", c.resp_amp_px},
          {"noise_sd", c.noise_sd},
          {"drift_amp", c.drift_amp},
          {"ecg_noise_sd", c.ecg_noise_sd},
          {"cardiac_phase0", c.cardiac_phase0},
          {"resp_phase0", c.resp_phase0},
          {"events", events},
          {"seed", c.seed}};
}

inline phantom::PhantomConfig phantom_from_json(const nlohmann::json& j) {
  phantom::PhantomConfig c;
  detail::reject_unknown(j, phantom_to_json(c), "phantom");
  using detail::read_key;
  read_key(j, "height", c.height);
  read_key(j, "width", c.width);
  read_key(j, "frames", c.frames);
  read_key(j, "fps", c.fps);
  read_key(j, "ecg_rate", c.ecg_rate);
  read_key(j, "cardiac_rate_hz", c.cardiac_rate_hz);
  read_key(j, "resp_rate_hz", c.resp_rate_hz);
  read_key(j, "beat_jitter_sd", c.beat_jitter_sd);
  read_key(j, "cardiac_amp_px", c.cardiac_amp_px);
  read_key(j, "resp_amp_px", c.resp_amp_px);
  read_key(j, "noise_sd", c.noise_sd);
  read_key(j, "drift_amp", c.drift_amp);
  read_key(j, "ecg_noise_sd", c.ecg_noise_sd);
  read_key(j, "cardiac_phase0", c.cardiac_phase0);
  read_key(j, "resp_phase0", c.resp_phase0);
  read_key(j, "seed", c.seed);
  if (j.contains("events")) {
    for (const auto& e : j.at("events")) {
      detail::reject_unknown(e, {{"kind", 0}, {"start_frame", 0}, {"duration_frames", 0}, {"magnitude", 0}}, "event");
      phantom::IrregularEvent ev;
      ev.kind = phantom::event_kind_from_string(e.at("kind").get<std::string>());
      ev.start_frame = e.at("start_frame").get<std::size_t>();
      read_key(e, "duration_frames", ev.duration_frames);
      read_key(e, "magnitude", ev.magnitude);
      c.events.push_back(ev);
    }
  }
  return c;
}

inline nlohmann::json run_config_to_json(const RunConfig& c) {
  nlohmann::json eval{{"window", c.eval.window}, {"prominence_scale", c.eval.prominence_scale}};
  eval["min_distance"] = c.eval.min_distance ? nlohmann::json(*c.eval.min_distance) : nlohmann::json(nullptr);
  return {{"seed", c.seed},
          {"phantom", phantom_to_json(c.phantom)},
          {"spread",
           {{"cardiac_rate_min_hz", c.spread.cardiac_rate_min_hz},
            {"cardiac_rate_max_hz", c.spread.cardiac_rate_max_hz},
            {"resp_rate_min_hz", c.spread.resp_rate_min_hz},
            {"resp_rate_max_hz", c.spread.resp_rate_max_hz},
            {"random_phase", c.spread.random_phase}}},
          {"splits",
           {{"train", c.splits.train}, {"val", c.splits.val}, {"test", c.splits.test}, {"irregular", c.splits.irregular}}},
          {"model", c.model},
          {"filters",
           {{"cardiac_low_hz", c.filters.cardiac_low_hz},
            {"cardiac_high_hz", c.filters.cardiac_high_hz},
            {"respiratory_cutoff_hz", c.filters.respiratory_cutoff_hz}}},
          {"eval", eval},
          {"baselines",
           {{"pca_max_frames", c.baselines.pca_max_frames},
            {"pca_variance", c.baselines.pca_variance},
            {"pca_max_components", c.baselines.pca_max_components},
            {"ridge_lambda", c.baselines.ridge_lambda},
            {"lstm_hidden", c.baselines.lstm_hidden},
            {"lstm_learning_rate", c.baselines.lstm_learning_rate},
            {"lstm_max_epochs", c.baselines.lstm_max_epochs},
            {"lstm_patience", c.baselines.lstm_patience},
            {"lstm_windows_per_epoch", c.baselines.lstm_windows_per_epoch}}}};
}

/// Missing keys keep their defaults; unknown keys are errors so typos surface.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  const nlohmann::json known = run_config_to_json(c);
  detail::reject_unknown(j, known, "config");
  using detail::read_key;
  try {
    read_key(j, "seed", c.seed);
    if (j.contains("phantom")) c.phantom = phantom_from_json(j.at("phantom"));
    if (j.contains("spread")) {
      const auto& s = j.at("spread");
      detail::reject_unknown(s, known.at("spread"), "spread");
      read_key(s, "cardiac_rate_min_hz", c.spread.cardiac_rate_min_hz);
      read_key(s, "cardiac_rate_max_hz", c.spread.cardiac_rate_max_hz);
      read_key(s, "resp_rate_min_hz", c.spread.resp_rate_min_hz);
      read_key(s, "resp_rate_max_hz", c.spread.resp_rate_max_hz);
      read_key(s, "random_phase", c.spread.random_phase);
    }
    if (j.contains("splits")) {
      const auto& s = j.at("splits");
      detail::reject_unknown(s, known.at("splits"), "splits");
      read_key(s, "train", c.splits.train);
      read_key(s, "val", c.splits.val);
      read_key(s, "test", c.splits.test);
      read_key(s, "irregular", c.splits.irregular);
    }
    if (j.contains("model")) {
      model::RmenConfig m = c.model;
      const auto& mj = j.at("model");
      detail::reject_unknown(mj, known.at("model"), "model");
      nlohmann::json merged = m;
      merged.update(mj);
      c.model = merged.get<model::RmenConfig>();
    }
    if (j.contains("filters")) {
      const auto& f = j.at("filters");
      detail::reject_unknown(f, known.at("filters"), "filters");
      read_key(f, "cardiac_low_hz", c.filters.cardiac_low_hz);
      read_key(f, "cardiac_high_hz", c.filters.cardiac_high_hz);
      read_key(f, "respiratory_cutoff_hz", c.filters.respiratory_cutoff_hz);
    }
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      detail::reject_unknown(e, known.at("eval"), "eval");
      read_key(e, "window", c.eval.window);
      read_key(e, "prominence_scale", c.eval.prominence_scale);
      if (e.contains("min_distance") && !e.at("min_distance").is_null()) {
        c.eval.min_distance = e.at("min_distance").get<std::size_t>();
      }
    }
    if (j.contains("baselines")) {
      const auto& b = j.at("baselines");
      detail::reject_unknown(b, known.at("baselines"), "baselines");
      read_key(b, "pca_max_frames", c.baselines.pca_max_frames);
      read_key(b, "pca_variance", c.baselines.pca_variance);
      read_key(b, "pca_max_components", c.baselines.pca_max_components);
      read_key(b, "ridge_lambda", c.baselines.ridge_lambda);
      read_key(b, "lstm_hidden", c.baselines.lstm_hidden);
      read_key(b, "lstm_learning_rate", c.baselines.lstm_learning_rate);
      read_key(b, "lstm_max_epochs", c.baselines.lstm_max_epochs);
      read_key(b, "lstm_patience", c.baselines.lstm_patience);
      read_key(b, "lstm_windows_per_epoch", c.baselines.lstm_windows_per_epoch);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

/// Reads and validates a config file. `RMEN_SEED`, when set, replaces the seed.
inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": malformed JSON: " + e.what());
  }
  RunConfig c = run_config_from_json(j);
  c.validate();
  return c;
}

/// Applies the `RMEN_SEED` environment override, if present.
inline void apply_seed_override(RunConfig& c) {
  const char* env = std::getenv("RMEN_SEED");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (end == env || *end != '\0') throw ConfigError("RMEN_SEED must be a non-negative integer");
  c.seed = v;
}

}  // namespace rmen
