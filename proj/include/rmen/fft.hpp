#pragma once

// Real-input FFT backed by FFTW. Planning is serialized because the FFTW
// planner is not thread safe; execution uses per-call buffers.

#include <complex>
#include <cstddef>
#include <cstring>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include <fftw3.h>

#include "rmen/error.hpp"

namespace rmen::fft {

using Complex = std::complex<double>;

namespace detail {

inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

template <typename T>
std::unique_ptr<T[], FftwFree> alloc(std::size_t n) {
  auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * (n == 0 ? 1 : n)));
  if (p == nullptr) throw std::bad_alloc();
  return std::unique_ptr<T[], FftwFree>(p);
}

class Plan {
 public:
  explicit Plan(fftw_plan p) : plan_(p) {
    if (plan_ == nullptr) throw Error("fftw planning failed");
  }
  ~Plan() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
  }
  Plan(const Plan&) = delete;
  Plan& operator=(const Plan&) = delete;
  void execute() const { fftw_execute(plan_); }

 private:
  fftw_plan plan_;
};

}  // namespace detail

/// Forward real DFT: X[k] = sum_n x[n] exp(-2 pi i k n / N), k = 0..N/2.
inline std::vector<Complex> rfft(std::span<const double> signal) {
  const std::size_t n = signal.size();
  if (n == 0) throw InsufficientDataError("rfft: empty input");
  const std::size_t bins = n / 2 + 1;
  auto in = detail::alloc<double>(n);
  auto out = detail::alloc<fftw_complex>(bins);
  fftw_plan raw;
  {
    std::lock_guard lock(detail::planner_mutex());
    raw = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.get(), out.get(), FFTW_ESTIMATE);
  }
  detail::Plan plan(raw);
  std::memcpy(in.get(), signal.data(), n * sizeof(double));
  plan.execute();
  std::vector<Complex> result(bins);
  for (std::size_t k = 0; k < bins; ++k) result[k] = Complex(out[k][0], out[k][1]);
  return result;
}

/// Inverse of rfft for a length-n real signal. Expects n/2+1 coefficients;
/// the imaginary parts of the DC (and, for even n, Nyquist) bins are ignored.
inline std::vector<double> irfft(std::span<const Complex> coefficients, std::size_t n) {
  if (n == 0) throw InsufficientDataError("irfft: empty output length");
  const std::size_t bins = n / 2 + 1;
  if (coefficients.size() != bins) {
    throw ShapeError("irfft: expected " + std::to_string(bins) + " coefficients, got " +
                     std::to_string(coefficients.size()));
  }
  auto in = detail::alloc<fftw_complex>(bins);
  auto out = detail::alloc<double>(n);
  fftw_plan raw;
  {
    std::lock_guard lock(detail::planner_mutex());
    raw = fftw_plan_dft_c2r_1d(static_cast<int>(n), in.get(), out.get(), FFTW_ESTIMATE);
  }
  detail::Plan plan(raw);
  for (std::size_t k = 0; k < bins; ++k) {
    in[k][0] = coefficients[k].real();
    in[k][1] = coefficients[k].imag();
  }
  plan.execute();
  std::vector<double> result(n);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) result[i] = out[i] * scale;
  return result;
}

/// Frequency in Hz of bin k for an n-sample signal at `sample_rate`.
inline double bin_frequency(std::size_t k, std::size_t n, double sample_rate) {
  return static_cast<double>(k) * sample_rate / static_cast<double>(n);
}

}  // namespace rmen::fft
