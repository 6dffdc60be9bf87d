#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rmen/error.hpp"
#include "rmen/tensor.hpp"

namespace rmen {

/// Grayscale video with values in [0,1]. Pixels are kept at single precision
/// (the on-disk precision) and widened when windows are cut for the network.
struct VideoSequence {
  std::string id;
  double fps = 15.0;
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;  // [frames, height, width] row-major

  std::size_t frame_size() const { return height * width; }

  std::span<const float> frame(std::size_t t) const {
    return std::span<const float>(pixels).subspan(t * frame_size(), frame_size());
  }
  std::span<float> frame(std::size_t t) { return std::span<float>(pixels).subspan(t * frame_size(), frame_size()); }

  /// Frames [start, start+len) as a [len,1,H,W] tensor.
  Tensor window(std::size_t start, std::size_t len) const {
    if (start + len > frames || len == 0) {
      throw ShapeError("window [" + std::to_string(start) + "," + std::to_string(start + len) + ") outside video of " +
                       std::to_string(frames) + " frames");
    }
    Tensor t({len, 1, height, width});
    const float* src = pixels.data() + start * frame_size();
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(src[i]);
    return t;
  }

  void validate() const {
    if (frames < 2) throw ShapeError("video needs at least 2 frames");
    if (pixels.size() != frames * height * width) throw ShapeError("video pixel count does not match extents");
  }

  friend bool operator==(const VideoSequence&, const VideoSequence&) = default;
};

/// Sampled ECG with optional ground-truth R-peak sample indices.
struct EcgTrace {
  std::vector<double> samples;
  double rate = 300.0;
  std::optional<std::vector<std::size_t>> true_peaks;

  double duration_s() const { return static_cast<double>(samples.size()) / rate; }
};

}  // namespace rmen
