#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "rmen/error.hpp"

namespace rmen::model {

/// Architecture and training hyperparameters of the network.
struct RmenConfig {
  std::size_t frame_height = 64;
  std::size_t frame_width = 64;
  std::size_t window_len = 16;
  std::size_t stride = 1;
  std::vector<std::size_t> encoder_channels{8, 16, 16, 32, 32};
  std::size_t encoder_kernel = 3;
  std::vector<std::size_t> convlstm_hidden{32, 32};
  std::size_t convlstm_kernel = 3;
  std::size_t conv3d_out_channels = 8;
  std::size_t conv3d_kernel = 3;
  std::vector<std::size_t> dense_widths{64, 32, 1};
  double dropout_rate = 0.5;
  double learning_rate = 1e-3;
  std::size_t batch_size = 4;
  std::size_t max_epochs = 50;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  // Window sampling for training; 0 means "use all".
  std::size_t train_stride = 1;
  std::size_t windows_per_epoch = 0;
  std::size_t val_windows = 0;
  // Epochs trained with dropout disabled before the configured rate applies.
  std::size_t dropout_warmup_epochs = 5;

  std::size_t encoded_height() const { return frame_height / 8; }
  std::size_t encoded_width() const { return frame_width / 8; }

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
    if (encoder_channels.size() != 5) fail("encoder_channels must have 5 entries");
    if (convlstm_hidden.empty()) fail("convlstm_hidden must be nonempty");
    if (dense_widths.empty() || dense_widths.back() != 1) fail("dense_widths must end in 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must be in [0,1)");
    if (window_len < 2) fail("window_len must be >= 2");
    if (stride < 1 || train_stride < 1) fail("strides must be >= 1");
    if (frame_height % 8 != 0 || frame_width % 8 != 0 || frame_height == 0 || frame_width == 0) {
      fail("frame extents must be positive multiples of 8");
    }
    for (std::size_t k : {encoder_kernel, convlstm_kernel, conv3d_kernel}) {
      if (k % 2 == 0) fail("kernel extents must be odd");
    }
    for (std::size_t c : encoder_channels) if (c == 0) fail("zero encoder width");
    for (std::size_t c : convlstm_hidden) if (c == 0) fail("zero hidden width");
    for (std::size_t c : dense_widths) if (c == 0) fail("zero dense width");
    if (conv3d_out_channels == 0) fail("zero conv3d width");
    if (batch_size == 0) fail("batch_size must be >= 1");
    if (!(learning_rate >= 0.0)) fail("learning_rate must be >= 0");
  }
};

inline void to_json(nlohmann::json& j, const RmenConfig& c) {
  j = nlohmann::json{{"frame_height", c.frame_height},
                     {"frame_width", c.frame_width},
                     {"window_len", c.window_len},
                     {"stride", c.stride},
                     {"encoder_channels", c.encoder_channels},
                     {"encoder_kernel", c.encoder_kernel},
                     {"convlstm_hidden", c.convlstm_hidden},
                     {"convlstm_kernel", c.convlstm_kernel},
                     {"conv3d_out_channels", c.conv3d_out_channels},
                     {"conv3d_kernel", c.conv3d_kernel},
                     {"dense_widths", c.dense_widths},
                     {"dropout_rate", c.dropout_rate},
                     {"learning_rate", c.learning_rate},
                     {"batch_size", c.batch_size},
                     {"max_epochs", c.max_epochs},
                     {"patience", c.patience},
                     {"seed", c.seed},
                     {"train_stride", c.train_stride},
                     {"windows_per_epoch", c.windows_per_epoch},
                     {"val_windows", c.val_windows},
                     {"dropout_warmup_epochs", c.dropout_warmup_epochs}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, RmenConfig& c) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  nlohmann::json known;
  to_json(known, c);
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("model config: unknown key '" + key + "'");
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("frame_height", c.frame_height);
  get("frame_width", c.frame_width);
  get("window_len", c.window_len);
  get("stride", c.stride);
  get("encoder_channels", c.encoder_channels);
  get("encoder_kernel", c.encoder_kernel);
  get("convlstm_hidden", c.convlstm_hidden);
  get("convlstm_kernel", c.convlstm_kernel);
  get("conv3d_out_channels", c.conv3d_out_channels);
  get("conv3d_kernel", c.conv3d_kernel);
  get("dense_widths", c.dense_widths);
  get("dropout_rate", c.dropout_rate);
  get("learning_rate", c.learning_rate);
  get("batch_size", c.batch_size);
  get("max_epochs", c.max_epochs);
  get("patience", c.patience);
  get("seed", c.seed);
  get("train_stride", c.train_stride);
  get("windows_per_epoch", c.windows_per_epoch);
  get("val_windows", c.val_windows);
  get("dropout_warmup_epochs", c.dropout_warmup_epochs);
}

/// The miniature network used by gradient checking.
inline RmenConfig mini_config() {
  RmenConfig c;
  c.frame_height = 8;
  c.frame_width = 8;
  c.window_len = 3;
  c.encoder_channels = {2, 2, 2, 2, 2};
  c.convlstm_hidden = {2, 2};
  c.conv3d_out_channels = 2;
  c.dense_widths = {4, 3, 1};
  return c;
}

}  // namespace rmen::model
