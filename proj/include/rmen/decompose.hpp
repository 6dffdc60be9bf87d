#pragma once

// Zero-phase frequency-domain filtering. A real 0/1 mask multiplies the
// real-FFT coefficients, so no bin's phase is altered.

#include <span>
#include <string>
#include <vector>

#include "rmen/error.hpp"
#include "rmen/fft.hpp"

namespace rmen::decompose {

enum class FilterKind { band_pass, low_pass };

struct FilterSpec {
  FilterKind kind = FilterKind::band_pass;
  double low_hz = 0.5;      // band_pass lower edge
  double high_hz = 2.0;     // band_pass upper edge
  double cutoff_hz = 0.33;  // low_pass edge
  double sample_rate = 15.0;
  bool complement = false;  // keep exactly the bins the mask would reject

  static FilterSpec band_pass(double low, double high, double rate) {
    return {FilterKind::band_pass, low, high, 0.33, rate, false};
  }
  static FilterSpec low_pass(double cutoff, double rate) { return {FilterKind::low_pass, 0.5, 2.0, cutoff, rate, false}; }

  FilterSpec complemented() const {
    FilterSpec s = *this;
    s.complement = !complement;
    return s;
  }

  void validate() const {
    const double nyquist = sample_rate / 2.0;
    if (!(sample_rate > 0.0)) throw ConfigError("filter: sample_rate must be positive");
    if (kind == FilterKind::band_pass) {
      if (!(0.0 < low_hz && low_hz < high_hz && high_hz < nyquist)) {
        throw ConfigError("band-pass needs 0 < low < high < sample_rate/2 (low=" + std::to_string(low_hz) +
                          ", high=" + std::to_string(high_hz) + ", rate=" + std::to_string(sample_rate) + ")");
      }
    } else if (!(0.0 < cutoff_hz && cutoff_hz < nyquist)) {
      throw ConfigError("low-pass needs 0 < cutoff < sample_rate/2");
    }
  }

  /// Mask value for frequency `hz`; edges are inclusive.
  bool passes(double hz) const {
    constexpr double slack = 1e-9;
    bool in = kind == FilterKind::band_pass ? (hz >= low_hz - slack && hz <= high_hz + slack) : (hz <= cutoff_hz + slack);
    return in != complement;
  }
};

/// Applies an arbitrary per-bin gain to the real spectrum of `signal`.
template <typename Gain>
std::vector<double> apply_spectral_gain(std::span<const double> signal, double sample_rate, Gain&& gain) {
  auto coeffs = fft::rfft(signal);
  for (std::size_t k = 0; k < coeffs.size(); ++k) coeffs[k] *= gain(k, fft::bin_frequency(k, signal.size(), sample_rate));
  return fft::irfft(coeffs, signal.size());
}

inline std::vector<double> filter(std::span<const double> signal, const FilterSpec& spec) {
  spec.validate();
  if (signal.size() < 4) throw InsufficientDataError("filter: need at least 4 samples");
  return apply_spectral_gain(signal, spec.sample_rate,
                             [&](std::size_t, double hz) { return spec.passes(hz) ? 1.0 : 0.0; });
}

struct DecomposeOptions {
  double cardiac_low_hz = 0.5;
  double cardiac_high_hz = 2.0;
  double respiratory_cutoff_hz = 0.33;
};

struct Decomposition {
  std::vector<double> cardiac;
  std::vector<double> respiratory;
};

/// Cardiac = band-pass component; respiratory = low-pass component with the
/// DC bin removed.
inline Decomposition decompose_curve(std::span<const double> curve, double fps, const DecomposeOptions& opts = {}) {
  Decomposition d;
  d.cardiac = filter(curve, FilterSpec::band_pass(opts.cardiac_low_hz, opts.cardiac_high_hz, fps));
  const auto resp = FilterSpec::low_pass(opts.respiratory_cutoff_hz, fps);
  resp.validate();
  if (curve.size() < 4) throw InsufficientDataError("filter: need at least 4 samples");
  d.respiratory = apply_spectral_gain(curve, fps, [&](std::size_t k, double hz) {
    return k != 0 && resp.passes(hz) ? 1.0 : 0.0;
  });
  return d;
}

}  // namespace rmen::decompose
