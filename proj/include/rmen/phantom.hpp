#pragma once

// Synthetic fluoroscopy phantom. A sequence has a dark curved vessel that
// moves with the cardiac phase (and, more weakly, with breathing), a soft
// diaphragm edge that moves with the respiratory phase, a slow global
// intensity drift and pixel noise. A paired ECG carries one R wave per beat.
// Because the phases are known, the generator doubles as the ground truth.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "rmen/error.hpp"
#include "rmen/labels.hpp"
#include "rmen/parallel.hpp"
#include "rmen/rng.hpp"
#include "rmen/signals.hpp"

namespace rmen::phantom {

enum class EventKind { breath_hold, skipped_beat, video_shift };

inline std::string to_string(EventKind k) {
  switch (k) {
    case EventKind::breath_hold: return "breath_hold";
    case EventKind::skipped_beat: return "skipped_beat";
    case EventKind::video_shift: return "video_shift";
  }
  return "unknown";
}

inline EventKind event_kind_from_string(const std::string& s) {
  if (s == "breath_hold") return EventKind::breath_hold;
  if (s == "skipped_beat") return EventKind::skipped_beat;
  if (s == "video_shift") return EventKind::video_shift;
  throw ConfigError("unknown event kind '" + s + "'");
}

struct IrregularEvent {
  EventKind kind = EventKind::breath_hold;
  std::size_t start_frame = 0;
  std::size_t duration_frames = 0;  // video_shift: 0 means "until the end"
  double magnitude = 0.0;           // video_shift: horizontal translation in pixels

  friend bool operator==(const IrregularEvent&, const IrregularEvent&) = default;
};

struct PhantomConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t frames = 600;
  double fps = 15.0;
  double ecg_rate = 300.0;
  double cardiac_rate_hz = 1.2;
  double resp_rate_hz = 0.25;
  double beat_jitter_sd = 0.05;
  double cardiac_amp_px = 3.0;
  double resp_amp_px = 4.0;
  double noise_sd = 0.02;
  double drift_amp = 0.05;
  double ecg_noise_sd = 0.02;
  double cardiac_phase0 = 0.0;  // fraction of a beat elapsed at t = 0
  double resp_phase0 = 0.0;     // fraction of a breath elapsed at t = 0
  std::vector<IrregularEvent> events;
  std::uint64_t seed = 1;

  double duration_s() const { return static_cast<double>(frames) / fps; }

  /// Rejects impossible configs; returns warnings for out-of-physiology rates.
  std::vector<std::string> validate() const {
    if (frames < 2) throw ConfigError("phantom: frames must be >= 2");
    if (height == 0 || width == 0) throw ConfigError("phantom: frame extents must be positive");
    if (!(fps > 0.0) || !(ecg_rate > fps)) throw ConfigError("phantom: need ecg_rate > fps > 0");
    if (!(cardiac_rate_hz > 0.0) || !(resp_rate_hz > 0.0)) throw ConfigError("phantom: rates must be positive");
    if (beat_jitter_sd < 0.0 || noise_sd < 0.0 || ecg_noise_sd < 0.0) throw ConfigError("phantom: negative spread");
    if (cardiac_phase0 < 0.0 || cardiac_phase0 >= 1.0 || resp_phase0 < 0.0 || resp_phase0 >= 1.0) {
      throw ConfigError("phantom: initial phases must be in [0,1)");
    }
    for (const auto& e : events) {
      const std::size_t end = e.start_frame + (e.duration_frames == 0 ? 1 : e.duration_frames);
      if (e.start_frame >= frames || end > frames) throw ConfigError("phantom: event span outside [0, frames)");
    }
    std::vector<std::string> warnings;
    if (cardiac_rate_hz < 0.5 || cardiac_rate_hz > 2.0) warnings.push_back("cardiac rate outside 0.5-2 Hz");
    if (resp_rate_hz < 0.2 || resp_rate_hz > 0.33) warnings.push_back("respiratory rate outside 0.2-0.33 Hz");
    return warnings;
  }
};

/// Event timing of one sequence. `beats` extends one beat before t=0 and past
/// the end so the cardiac phase is defined on every frame.
struct Phases {
  std::vector<double> beats;
  std::vector<double> resp_extrema_s;
  std::vector<std::pair<double, double>> holds;  // breath-hold spans in seconds
  std::vector<double> skipped;                    // times of removed beats
  double resp_rate_hz = 0.25;
  double resp_phase0 = 0.0;

  /// Beat times inside [0, duration).
  std::vector<double> beat_times_in(double duration) const {
    std::vector<double> out;
    for (double b : beats) {
      if (b >= 0.0 && b < duration) out.push_back(b);
    }
    return out;
  }

  /// Fraction of the current beat interval elapsed at time t, in [0,1).
  double cardiac_phase(double t) const {
    const auto it = std::upper_bound(beats.begin(), beats.end(), t);
    if (it == beats.begin() || it == beats.end()) return 0.0;
    const double a = *(it - 1), b = *it;
    return (t - a) / (b - a);
  }

  /// Time spent in breath holds before t.
  double held_before(double t) const {
    double held = 0.0;
    for (const auto& [s, e] : holds) held += std::clamp(t, s, e) - s;
    return held;
  }

  /// Unwrapped respiratory phase (cycles); constant during a hold.
  double resp_cycles(double t) const { return resp_phase0 + resp_rate_hz * (t - held_before(t)); }
};

/// 1 at phase 0, -1 at phase 1/2, linear in between (the label convention).
inline double triangular(double cycles) {
  const double frac = cycles - std::floor(cycles);
  return 1.0 - 4.0 * std::min(frac, 1.0 - frac);
}

inline Phases generate_phases(const PhantomConfig& cfg) {
  cfg.validate();
  Rng rng = Rng(cfg.seed).derive(1);
  const double duration = cfg.duration_s();
  const double nominal = 1.0 / cfg.cardiac_rate_hz;
  Phases ph;
  ph.resp_rate_hz = cfg.resp_rate_hz;
  ph.resp_phase0 = cfg.resp_phase0;

  double t = -cfg.cardiac_phase0 * nominal;
  if (t < 0.0) {
    ph.beats.push_back(t - nominal);
  }
  ph.beats.push_back(t);
  int beyond = 0;
  while (beyond < 3) {
    t += nominal * (1.0 + rng.truncated_normal(cfg.beat_jitter_sd, 3.0));
    ph.beats.push_back(t);
    if (t >= duration) ++beyond;
  }
  if (cfg.cardiac_phase0 == 0.0) {
    // keep one support beat before t = 0 for the rendered phase
    ph.beats.insert(ph.beats.begin(), -nominal);
  }

  for (const auto& e : cfg.events) {
    const double s = static_cast<double>(e.start_frame) / cfg.fps;
    const double end = static_cast<double>(e.start_frame + e.duration_frames) / cfg.fps;
    if (e.kind == EventKind::skipped_beat) {
      auto it = std::find_if(ph.beats.begin(), ph.beats.end(), [&](double b) { return b >= s && b < std::max(end, s + 1e-9); });
      if (it != ph.beats.end() && it != ph.beats.begin() && it + 1 != ph.beats.end()) {
        ph.skipped.push_back(*it);
        ph.beats.erase(it);
      }
    } else if (e.kind == EventKind::breath_hold) {
      ph.holds.emplace_back(s, end);
    }
  }
  std::sort(ph.holds.begin(), ph.holds.end());

  // End-inspiration: times at which the unwrapped respiratory phase is an integer.
  const double c0 = ph.resp_cycles(0.0), c1 = ph.resp_cycles(duration);
  for (double k = std::ceil(c0); k < c1; k += 1.0) {
    double lo = 0.0, hi = duration;
    for (int iter = 0; iter < 80; ++iter) {
      const double mid = 0.5 * (lo + hi);
      (ph.resp_cycles(mid) < k ? lo : hi) = mid;
    }
    ph.resp_extrema_s.push_back(hi);
  }
  return ph;
}

// ---------------------------------------------------------------------------

struct GroundTruth {
  std::vector<double> beat_times_s;
  std::vector<double> resp_extrema_s;
  std::vector<double> skipped_beat_s;    // beats removed by skipped_beat events
  std::vector<std::size_t> beat_frames;  // mapped true R peaks
  labels::PhaseLabelSeries cardiac;      // cardiac_phase = cardiac.targets
  std::vector<double> resp_phase;

  const std::vector<double>& cardiac_phase() const { return cardiac.targets; }
};

struct PhantomSequence {
  PhantomConfig config;
  Phases phases;
  VideoSequence video;
  EcgTrace ecg;
  GroundTruth truth;
};

namespace detail {

struct Vessel {
  double y0, amp, freq, phase, x0, x1, depth;
};

struct Scene {
  std::vector<double> background;  // [H*W]
  std::vector<Vessel> vessels;
};

inline Scene make_scene(const PhantomConfig& cfg) {
  Rng rng = Rng(cfg.seed).derive(2);
  const double H = static_cast<double>(cfg.height), W = static_cast<double>(cfg.width);
  Scene s;
  s.background.resize(cfg.height * cfg.width);
  const double a = rng.uniform(0, 2 * std::numbers::pi), b = rng.uniform(0, 2 * std::numbers::pi);
  struct Blob {
    double x, y, r, amp;
  };
  std::vector<Blob> blobs;
  for (int k = 0; k < 4; ++k) blobs.push_back({rng.uniform(0, W), rng.uniform(0, 0.7 * H), rng.uniform(4, 10), rng.uniform(-0.06, 0.06)});
  for (std::size_t y = 0; y < cfg.height; ++y) {
    for (std::size_t x = 0; x < cfg.width; ++x) {
      const double xf = static_cast<double>(x), yf = static_cast<double>(y);
      double v = 0.6 + 0.08 * std::sin(2 * std::numbers::pi * 0.6 * xf / W + a) * std::cos(2 * std::numbers::pi * 0.4 * yf / H + b);
      for (const auto& bl : blobs) {
        const double d2 = (xf - bl.x) * (xf - bl.x) + (yf - bl.y) * (yf - bl.y);
        v += bl.amp * std::exp(-d2 / (2 * bl.r * bl.r));
      }
      s.background[y * cfg.width + x] = v;
    }
  }
  s.vessels.push_back({rng.uniform(0.28, 0.38) * H, rng.uniform(0.06, 0.1) * H, rng.uniform(0.8, 1.4), rng.uniform(0, 6.28),
                       0.12 * W, 0.88 * W, 0.35});
  s.vessels.push_back({rng.uniform(0.45, 0.55) * H, rng.uniform(0.04, 0.08) * H, rng.uniform(1.0, 1.8), rng.uniform(0, 6.28),
                       0.3 * W, 0.8 * W, 0.25});
  return s;
}

inline double smoothstep_taper(double x, double x0, double x1) {
  const double ramp = 4.0;
  const double l = std::clamp((x - x0) / ramp, 0.0, 1.0), r = std::clamp((x1 - x) / ramp, 0.0, 1.0);
  return l * r;
}

}  // namespace detail

/// Renders all frames; frame n shows time n / fps.
inline VideoSequence render_video(const PhantomConfig& cfg, const Phases& ph, std::string id = "seq") {
  cfg.validate();
  const auto scene = detail::make_scene(cfg);
  VideoSequence v;
  v.id = std::move(id);
  v.fps = cfg.fps;
  v.frames = cfg.frames;
  v.height = cfg.height;
  v.width = cfg.width;
  v.pixels.assign(cfg.frames * cfg.height * cfg.width, 0.0f);
  const double H = static_cast<double>(cfg.height), W = static_cast<double>(cfg.width);
  const Rng noise_root = Rng(cfg.seed).derive(3);

  parallel_for(cfg.frames, [&](std::size_t n) {
    const double t = static_cast<double>(n) / cfg.fps;
    const double cardiac = std::cos(2 * std::numbers::pi * ph.cardiac_phase(t));
    const double resp = std::cos(2 * std::numbers::pi * ph.resp_cycles(t));
    const double dx = 0.6 * cfg.cardiac_amp_px * cardiac;
    const double dy = 0.8 * cfg.cardiac_amp_px * cardiac + 0.5 * cfg.resp_amp_px * resp;
    const double diaphragm_shift = cfg.resp_amp_px * resp;
    const double drift = cfg.drift_amp * std::sin(2 * std::numbers::pi * 0.05 * t);
    Rng noise = noise_root.derive(n);
    auto frame = v.frame(n);
    for (std::size_t y = 0; y < cfg.height; ++y) {
      for (std::size_t x = 0; x < cfg.width; ++x) {
        const double xf = static_cast<double>(x), yf = static_cast<double>(y);
        double value = scene.background[y * cfg.width + x];
        const double u = (xf - W / 2) / (W / 2);
        const double edge = 0.72 * H + 0.06 * H * u * u + diaphragm_shift;
        value *= 1.0 - 0.35 / (1.0 + std::exp(-(yf - edge) / 1.5));
        const double vx = xf - dx, vy = yf - dy;
        for (const auto& vs : scene.vessels) {
          const double taper = detail::smoothstep_taper(vx, vs.x0, vs.x1);
          if (taper <= 0.0) continue;
          const double k = 2 * std::numbers::pi * vs.freq / W;
          const double center = vs.y0 + vs.amp * std::sin(k * vx + vs.phase);
          const double slope = vs.amp * k * std::cos(k * vx + vs.phase);
          const double d = (vy - center) / std::sqrt(1.0 + slope * slope);
          value *= 1.0 - vs.depth * taper * std::exp(-d * d / (2.0 * 1.1 * 1.1));
        }
        value += drift;
        if (cfg.noise_sd > 0.0) value += cfg.noise_sd * noise.normal();
        frame[y * cfg.width + x] = static_cast<float>(std::clamp(value, 0.0, 1.0));
      }
    }
  });

  for (const auto& e : cfg.events) {
    if (e.kind != EventKind::video_shift) continue;
    const long shift = std::lround(e.magnitude);
    const std::size_t end = e.duration_frames == 0 ? cfg.frames : std::min(cfg.frames, e.start_frame + e.duration_frames);
    for (std::size_t n = e.start_frame; n < end; ++n) {
      auto frame = v.frame(n);
      std::vector<float> copy(frame.begin(), frame.end());
      for (std::size_t y = 0; y < cfg.height; ++y) {
        for (std::size_t x = 0; x < cfg.width; ++x) {
          const long src = static_cast<long>(x) - shift;
          frame[y * cfg.width + x] =
              (src >= 0 && src < static_cast<long>(cfg.width)) ? copy[y * cfg.width + static_cast<std::size_t>(src)] : 0.0f;
        }
      }
    }
  }
  return v;
}

/// Baseline wander + one R wave (and a small T wave) per beat + noise.
inline EcgTrace synthesize_ecg(const std::vector<double>& beat_times_s, const PhantomConfig& cfg) {
  if (!std::is_sorted(beat_times_s.begin(), beat_times_s.end())) throw ConfigError("synthesize_ecg: beats must be sorted");
  const double fs = cfg.ecg_rate;
  const auto n = static_cast<std::size_t>(std::llround(cfg.duration_s() * fs));
  EcgTrace ecg;
  ecg.rate = fs;
  ecg.samples.assign(n, 0.0);
  Rng rng = Rng(cfg.seed).derive(4);
  const double wander_phase = rng.uniform(0, 2 * std::numbers::pi);
  constexpr double r_sigma = 0.0085;  // ~20 ms full width at half maximum
  constexpr double t_sigma = 0.04, t_delay = 0.25, t_amp = 0.2;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    double v = 0.1 * std::sin(2 * std::numbers::pi * 0.3 * t + wander_phase);
    const auto lo = std::lower_bound(beat_times_s.begin(), beat_times_s.end(), t - 0.5);
    for (auto it = lo; it != beat_times_s.end() && *it < t + 0.1; ++it) {
      const double dr = t - *it;
      v += std::exp(-dr * dr / (2 * r_sigma * r_sigma));
      const double dt = dr - t_delay;
      v += t_amp * std::exp(-dt * dt / (2 * t_sigma * t_sigma));
    }
    if (cfg.ecg_noise_sd > 0.0) v += cfg.ecg_noise_sd * rng.normal();
    ecg.samples[i] = v;
  }
  std::vector<std::size_t> peaks;
  for (double b : beat_times_s) {
    const long idx = std::lround(b * fs);
    if (idx >= 0 && static_cast<std::size_t>(idx) < n) peaks.push_back(static_cast<std::size_t>(idx));
  }
  ecg.true_peaks = std::move(peaks);
  return ecg;
}

inline GroundTruth make_ground_truth(const PhantomConfig& cfg, const Phases& ph, const EcgTrace& ecg) {
  GroundTruth gt;
  gt.beat_times_s = ph.beat_times_in(cfg.duration_s());
  gt.resp_extrema_s = ph.resp_extrema_s;
  gt.skipped_beat_s = ph.skipped;
  const auto mapped = labels::map_peaks({*ecg.true_peaks, ecg.rate}, cfg.fps);
  gt.beat_frames = mapped.frames;
  gt.cardiac = labels::build_targets(gt.beat_frames, cfg.frames, cfg.fps);
  gt.resp_phase.resize(cfg.frames);
  for (std::size_t n = 0; n < cfg.frames; ++n) {
    gt.resp_phase[n] = std::sin(triangular(ph.resp_cycles(static_cast<double>(n) / cfg.fps)));
  }
  return gt;
}

inline PhantomSequence generate_sequence(const PhantomConfig& cfg, std::string id = "seq") {
  PhantomSequence s;
  s.config = cfg;
  s.phases = generate_phases(cfg);
  s.video = render_video(cfg, s.phases, std::move(id));
  s.ecg = synthesize_ecg(s.phases.beat_times_in(cfg.duration_s()), cfg);
  s.truth = make_ground_truth(cfg, s.phases, s.ecg);
  return s;
}

}  // namespace rmen::phantom
