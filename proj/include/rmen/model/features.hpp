#pragma once

// Conv3D feature maps: extraction, per-channel normalization and export as
// 8-bit PGM images.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "rmen/binary.hpp"
#include "rmen/model/network.hpp"

namespace rmen::model {

/// Post-ReLU Conv3D output [O, T, h, w] for a clip of any length >= 1.
inline Tensor conv3d_features(const ParameterSet& params, const RmenConfig& cfg, const Tensor& clip) {
  HeadCache cache;
  Rng unused(0);
  head_forward(params, cfg, encode(params, cfg, clip, nullptr), false, unused, &cache);
  return std::move(cache.conv3d_out);
}

/// Min-max scales each channel (all frames together) to [0,1]; a constant
/// channel maps to 0.5.
inline Tensor normalize_channels(const Tensor& features) {
  require_rank(features, 4, "feature maps");
  Tensor out(features.dims());
  const std::size_t channels = features.dim(0), per = features.size() / channels;
  for (std::size_t c = 0; c < channels; ++c) {
    const double* src = features.ptr() + c * per;
    const auto [lo, hi] = std::minmax_element(src, src + per);
    const double range = *hi - *lo;
    for (std::size_t i = 0; i < per; ++i) out[c * per + i] = range > 0.0 ? (src[i] - *lo) / range : 0.5;
  }
  return out;
}

/// Mean activation of every channel at every frame: [O][T].
inline std::vector<std::vector<double>> channel_means(const Tensor& features) {
  require_rank(features, 4, "feature maps");
  const std::size_t channels = features.dim(0), steps = features.dim(1), plane = features.dim(2) * features.dim(3);
  std::vector<std::vector<double>> means(channels, std::vector<double>(steps));
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t t = 0; t < steps; ++t) {
      const double* p = features.ptr() + (c * steps + t) * plane;
      double s = 0.0;
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
      means[c][t] = s / static_cast<double>(plane);
    }
  }
  return means;
}

inline std::string pgm_image(const double* values, std::size_t height, std::size_t width) {
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  for (std::size_t i = 0; i < height * width; ++i) {
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(values[i], 0.0, 1.0) * 255.0))));
  }
  return out;
}

/// Writes feat_c{c}_t{t}.pgm for every channel and frame plus index.csv;
/// returns the number of images.
inline std::size_t export_feature_maps(const ParameterSet& params, const RmenConfig& cfg, const Tensor& clip,
                                       const std::filesystem::path& out_dir) {
  const Tensor maps = normalize_channels(conv3d_features(params, cfg, clip));
  const std::size_t channels = maps.dim(0), steps = maps.dim(1), h = maps.dim(2), w = maps.dim(3);
  std::string index = "channel,frame,file\n";
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t t = 0; t < steps; ++t) {
      const std::string name = "feat_c" + std::to_string(c) + "_t" + std::to_string(t) + ".pgm";
      binary::write_file_atomic(out_dir / name, pgm_image(maps.ptr() + (c * steps + t) * h * w, h, w));
      index += std::to_string(c) + "," + std::to_string(t) + "," + name + "\n";
    }
  }
  binary::write_file_atomic(out_dir / "index.csv", index);
  return channels * steps;
}

}  // namespace rmen::model
