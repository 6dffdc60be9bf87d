#pragma once

// Pseudo-label construction: QRS detection on the ECG, peak mapping into
// video frames, and the sine-softened triangular phase series.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "rmen/decompose.hpp"
#include "rmen/error.hpp"
#include "rmen/signals.hpp"

namespace rmen::labels {

struct PeakList {
  std::vector<std::size_t> indices;  // strictly increasing sample indices
  double rate = 300.0;
};

struct QrsOptions {
  double band_low_hz = 5.0;
  double band_high_hz = 15.0;
  double integration_s = 0.150;
  double refractory_s = 0.200;
  double refine_s = 0.050;
};

namespace detail {

inline std::vector<double> five_point_derivative(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<double> d(n, 0.0);
  auto at = [&](long i) { return x[static_cast<std::size_t>(std::clamp<long>(i, 0, static_cast<long>(n) - 1))]; };
  for (std::size_t i = 0; i < n; ++i) {
    const long k = static_cast<long>(i);
    d[i] = (2.0 * at(k + 2) + at(k + 1) - at(k - 1) - 2.0 * at(k - 2)) / 8.0;
  }
  return d;
}

/// Centered moving average of width `width` (shrinks at the borders).
inline std::vector<double> moving_window(std::span<const double> x, std::size_t width) {
  const std::size_t n = x.size();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
  std::vector<double> out(n);
  const std::size_t half = width / 2;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n, lo + width);
    out[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(width);
  }
  return out;
}

}  // namespace detail

/// Pan-Tompkins-style R-peak detector: zero-phase band-pass, derivative,
/// squaring, moving-window integration, adaptive signal/noise thresholds with
/// a refractory period and RR search-back. Each detection is refined to the
/// band-passed maximum within +-refine_s.
inline PeakList detect_qrs(const EcgTrace& ecg, const QrsOptions& opt = {}) {
  if (ecg.rate < 100.0) throw ConfigError("detect_qrs: ECG rate must be >= 100 Hz");
  if (ecg.duration_s() < 1.0) throw InsufficientDataError("detect_qrs: trace shorter than 1 s");
  const double fs = ecg.rate;
  PeakList result{{}, fs};

  // The FFT filter is circular; mirror one second onto each end so a beat at
  // one edge neither wraps to the other nor loses half its waveform.
  const std::size_t n = ecg.samples.size();
  const std::size_t pad = std::min(n - 1, static_cast<std::size_t>(std::lround(fs)));
  std::vector<double> padded;
  padded.reserve(n + 2 * pad);
  for (std::size_t k = pad; k >= 1; --k) padded.push_back(ecg.samples[k]);
  padded.insert(padded.end(), ecg.samples.begin(), ecg.samples.end());
  for (std::size_t k = 1; k <= pad; ++k) padded.push_back(ecg.samples[n - 1 - k]);
  const auto band = decompose::filter(padded, decompose::FilterSpec::band_pass(opt.band_low_hz, opt.band_high_hz, fs));
  auto energy = detail::five_point_derivative(band);
  for (double& v : energy) v *= v;
  const auto integrated =
      detail::moving_window(energy, std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(opt.integration_s * fs))));
  const double top = *std::max_element(integrated.begin(), integrated.end());
  if (!(top > 0.0)) return result;

  std::vector<std::size_t> candidates;
  for (std::size_t i = 1; i + 1 < integrated.size(); ++i) {
    if (integrated[i] > integrated[i - 1] && integrated[i] >= integrated[i + 1]) candidates.push_back(i);
  }

  const std::size_t learn = std::min(integrated.size(), static_cast<std::size_t>(2.0 * fs));
  double spk = 0.25 * *std::max_element(integrated.begin(), integrated.begin() + static_cast<long>(learn));
  double npk = 0.5 * std::accumulate(integrated.begin(), integrated.begin() + static_cast<long>(learn), 0.0) /
               static_cast<double>(learn);
  const auto refractory = static_cast<std::size_t>(opt.refractory_s * fs);

  std::vector<std::size_t> qrs;
  std::vector<double> rr;
  std::size_t last_candidate = 0;  // index into candidates after the last accepted QRS
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const std::size_t i = candidates[c];
    const double value = integrated[i];
    const double threshold = npk + 0.25 * (spk - npk);

    // Search back when the gap since the last beat grows beyond 1.66 mean RR.
    if (!qrs.empty() && rr.size() >= 2) {
      const std::size_t recent = std::min<std::size_t>(rr.size(), 8);
      const double mean_rr = std::accumulate(rr.end() - static_cast<long>(recent), rr.end(), 0.0) / recent;
      if (static_cast<double>(i - qrs.back()) > 1.66 * mean_rr) {
        std::size_t best = candidates.size();
        for (std::size_t b = last_candidate; b < c; ++b) {
          const std::size_t j = candidates[b];
          if (j <= qrs.back() + refractory || i < j + refractory) continue;
          if (integrated[j] > 0.5 * threshold && (best == candidates.size() || integrated[j] > integrated[candidates[best]])) {
            best = b;
          }
        }
        if (best != candidates.size()) {
          const std::size_t j = candidates[best];
          spk = 0.25 * integrated[j] + 0.75 * spk;
          rr.push_back(static_cast<double>(j - qrs.back()));
          qrs.push_back(j);
          last_candidate = best + 1;
        }
      }
    }

    if (value > threshold) {
      if (!qrs.empty() && i - qrs.back() < refractory) {
        if (value > integrated[qrs.back()]) qrs.back() = i;  // keep the stronger of two close fiducials
        continue;
      }
      spk = 0.125 * value + 0.875 * spk;
      if (!qrs.empty()) rr.push_back(static_cast<double>(i - qrs.back()));
      qrs.push_back(i);
      last_candidate = c + 1;
    } else {
      npk = 0.125 * value + 0.875 * npk;
    }
  }

  const auto reach = static_cast<std::size_t>(std::lround(opt.refine_s * fs));
  for (std::size_t i : qrs) {
    const std::size_t lo = std::max(pad, i >= reach ? i - reach : 0);
    const std::size_t hi = std::min(pad + n - 1, i + reach);
    if (lo > hi) continue;  // fiducial that lies wholly in the mirrored margin
    const auto it = std::max_element(band.begin() + static_cast<long>(lo), band.begin() + static_cast<long>(hi) + 1);
    const std::size_t peak = static_cast<std::size_t>(it - band.begin()) - pad;
    if (result.indices.empty() || peak > result.indices.back()) result.indices.push_back(peak);
  }
  return result;
}

struct FramePeaks {
  std::vector<std::size_t> frames;
  std::size_t collapsed = 0;  // ECG peaks that landed in an already-used frame
};

/// p_X = floor(p_E * f_X / f_E); peaks sharing a frame collapse to one.
inline FramePeaks map_peaks(const PeakList& peaks, double frame_rate) {
  if (!(frame_rate > 0.0)) throw ConfigError("map_peaks: frame rate must be positive");
  FramePeaks out;
  for (std::size_t p : peaks.indices) {
    const auto f = static_cast<std::size_t>(std::floor(static_cast<double>(p) * frame_rate / peaks.rate));
    if (!out.frames.empty() && out.frames.back() == f) {
      ++out.collapsed;
      continue;
    }
    out.frames.push_back(f);
  }
  return out;
}

struct PhaseLabelSeries {
  std::vector<std::size_t> frame_peaks;
  std::vector<double> raw;      // triangular phase in [-1, 1]
  std::vector<double> targets;  // sin(raw)
  std::vector<bool> labeled;    // unlabeled frames carry raw = targets = 0
  double fps = 15.0;

  bool all_labeled(std::size_t start, std::size_t len) const {
    return std::all_of(labeled.begin() + static_cast<long>(start), labeled.begin() + static_cast<long>(start + len),
                       [](bool b) { return b; });
  }
};

/// Triangular labels: 1 at every peak, -1 halfway between consecutive peaks,
/// linear in between. Outside the first/last peak the neighbouring interval
/// is assumed to repeat; frames further than half that interval away are
/// left unlabeled.
inline PhaseLabelSeries build_targets(std::span<const std::size_t> frame_peaks, std::size_t frames, double fps = 15.0) {
  if (frame_peaks.size() < 2) throw InsufficientDataError("build_targets: need at least 2 peaks");
  for (std::size_t k = 0; k < frame_peaks.size(); ++k) {
    if (frame_peaks[k] >= frames) throw ConfigError("build_targets: peak beyond the last frame");
    if (k > 0 && frame_peaks[k] <= frame_peaks[k - 1]) throw ConfigError("build_targets: peaks must be strictly increasing");
  }
  PhaseLabelSeries s;
  s.frame_peaks.assign(frame_peaks.begin(), frame_peaks.end());
  s.fps = fps;
  s.raw.assign(frames, 0.0);
  s.targets.assign(frames, 0.0);
  s.labeled.assign(frames, false);

  auto set = [&](std::size_t n, double raw) {
    raw = std::clamp(raw, -1.0, 1.0);
    s.raw[n] = raw;
    s.targets[n] = std::sin(raw);
    s.labeled[n] = true;
  };

  for (std::size_t k = 0; k + 1 < frame_peaks.size(); ++k) {
    const double a = static_cast<double>(frame_peaks[k]);
    const double b = static_cast<double>(frame_peaks[k + 1]);
    const double len = b - a;
    const double mid = 0.5 * (a + b);
    for (std::size_t n = frame_peaks[k]; n <= frame_peaks[k + 1]; ++n) {
      const double x = static_cast<double>(n);
      set(n, x <= mid ? 1.0 - 4.0 * (x - a) / len : -1.0 + 4.0 * (x - mid) / len);
    }
  }

  const double first = static_cast<double>(frame_peaks[0]);
  const double first_len = static_cast<double>(frame_peaks[1]) - first;
  for (std::size_t n = 0; n < frame_peaks[0]; ++n) {
    const double dist = first - static_cast<double>(n);
    if (dist <= first_len / 2.0) set(n, 1.0 - 4.0 * dist / first_len);
  }
  const std::size_t last_idx = frame_peaks.size() - 1;
  const double last = static_cast<double>(frame_peaks[last_idx]);
  const double last_len = last - static_cast<double>(frame_peaks[last_idx - 1]);
  for (std::size_t n = frame_peaks[last_idx] + 1; n < frames; ++n) {
    const double dist = static_cast<double>(n) - last;
    if (dist <= last_len / 2.0) set(n, 1.0 - 4.0 * dist / last_len);
  }
  return s;
}

}  // namespace rmen::labels
