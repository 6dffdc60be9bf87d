#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "rmen/decompose.hpp"
#include "rmen/fft.hpp"
#include "support/oracles.hpp"

using namespace rmen;
using namespace rmen::decompose;

namespace {

std::vector<double> sinusoid(std::size_t n, double hz, double fs, double phase = 0.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(2 * std::numbers::pi * hz * static_cast<double>(i) / fs + phase);
  return x;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::vector<double> random_signal(std::size_t n, Rng& rng) {
  std::vector<double> x(n);
  for (double& v : x) v = rng.normal();
  return x;
}

const FilterSpec kBand = FilterSpec::band_pass(0.5, 2.0, 15.0);
const FilterSpec kLow = FilterSpec::low_pass(0.33, 15.0);

}  // namespace

TEST(Filter, PassbandIdentityAndStopband) {
  const auto one_hz = sinusoid(150, 1.0, 15.0);
  EXPECT_LT(max_abs_diff(filter(one_hz, kBand), one_hz), 1e-9);
  const auto slow = sinusoid(150, 0.2, 15.0, 0.4);
  for (double v : filter(slow, kBand)) EXPECT_LT(std::abs(v), 1e-9);
}

TEST(Filter, SuperpositionSeparatesComponents) {
  const auto a = sinusoid(240, 1.0, 15.0), b = sinusoid(240, 0.25, 15.0, 1.0);
  std::vector<double> x(240);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = a[i] + b[i] + 0.7;
  EXPECT_LT(max_abs_diff(filter(x, kBand), a), 1e-9);
  std::vector<double> low_expected(240);
  for (std::size_t i = 0; i < x.size(); ++i) low_expected[i] = b[i] + 0.7;
  EXPECT_LT(max_abs_diff(filter(x, kLow), low_expected), 1e-9);
}

TEST(Filter, BoundaryBinsAreInclusive) {
  // N=150 at 15 Hz: bin spacing 0.1 Hz, so 0.5 and 2.0 Hz are exact bins.
  const auto edge_lo = sinusoid(150, 0.5, 15.0), edge_hi = sinusoid(150, 2.0, 15.0);
  EXPECT_LT(max_abs_diff(filter(edge_lo, kBand), edge_lo), 1e-9);
  EXPECT_LT(max_abs_diff(filter(edge_hi, kBand), edge_hi), 1e-9);
}

TEST(Filter, ZeroPhaseIdempotentAndEnergyBounded) {
  Rng rng(21);
  for (std::size_t n : {64u, 150u, 255u}) {
    for (const auto& spec : {kBand, kLow}) {
      auto half = random_signal(n, rng);
      std::vector<double> sym(n);
      for (std::size_t i = 0; i < n; ++i) sym[i] = half[std::min(i, n - 1 - i)];
      const auto y = filter(sym, spec);
      for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y[i], y[n - 1 - i], 1e-9);

      const auto x = random_signal(n, rng);
      const auto once = filter(x, spec);
      EXPECT_LT(max_abs_diff(filter(once, spec), once), 1e-9);
      double ex = 0, ey = 0;
      for (std::size_t i = 0; i < n; ++i) {
        ex += x[i] * x[i];
        ey += once[i] * once[i];
      }
      EXPECT_LE(ey, ex * (1 + 1e-12));
    }
  }
}

TEST(Filter, ComplementReconstructs) {
  Rng rng(22);
  for (std::size_t n : {64u, 151u}) {
    const auto x = random_signal(n, rng);
    FilterSpec reject = kBand;
    reject.complement = true;
    const auto a = filter(x, kBand), b = filter(x, reject);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(a[i] + b[i], x[i], 1e-9);
  }
}

TEST(Filter, MaskMatchesDirectDftOracle) {
  Rng rng(23);
  const auto x = random_signal(100, rng);
  const auto y = filter(x, kBand);
  const auto X = rmen::testing::direct_rdft(x), Y = rmen::testing::direct_rdft(y);
  for (std::size_t k = 0; k < X.size(); ++k) {
    const double hz = static_cast<double>(k) * 15.0 / 100.0;
    const bool pass = hz >= 0.5 && hz <= 2.0;
    EXPECT_NEAR(std::abs(Y[k] - (pass ? X[k] : 0.0)), 0.0, 1e-8) << k;
  }
}

TEST(Filter, RejectsInvalidSpecsAndShortSignals) {
  EXPECT_THROW(filter(std::vector<double>(50, 0.0), FilterSpec::band_pass(2.0, 0.5, 15.0)), ConfigError);
  EXPECT_THROW(filter(std::vector<double>(50, 0.0), FilterSpec::band_pass(0.5, 8.0, 15.0)), ConfigError);
  EXPECT_THROW(filter(std::vector<double>(50, 0.0), FilterSpec::low_pass(0.0, 15.0)), ConfigError);
  EXPECT_THROW(filter(std::vector<double>(3, 0.0), kBand), InsufficientDataError);
}

TEST(DecomposeCurve, ConstantGivesZeroComponents) {
  const auto d = decompose_curve(std::vector<double>(90, 3.5), 15.0);
  for (double v : d.cardiac) EXPECT_NEAR(v, 0.0, 1e-12);
  for (double v : d.respiratory) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(DecomposeCurve, LinearAndRespiratoryIsMeanFree) {
  Rng rng(24);
  const auto a = random_signal(200, rng), b = random_signal(200, rng);
  std::vector<double> sum(200);
  for (std::size_t i = 0; i < 200; ++i) sum[i] = a[i] + b[i];
  const auto da = decompose_curve(a, 15.0), db = decompose_curve(b, 15.0), ds = decompose_curve(sum, 15.0);
  double mean = 0.0;
  for (std::size_t i = 0; i < 200; ++i) {
    EXPECT_NEAR(ds.cardiac[i], da.cardiac[i] + db.cardiac[i], 1e-9);
    EXPECT_NEAR(ds.respiratory[i], da.respiratory[i] + db.respiratory[i], 1e-9);
    mean += ds.respiratory[i];
  }
  EXPECT_NEAR(mean / 200.0, 0.0, 1e-12);
}
