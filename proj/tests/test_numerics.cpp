#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "rmen/fft.hpp"
#include "rmen/ops.hpp"
#include "rmen/rng.hpp"
#include "rmen/tensor.hpp"
#include "support/oracles.hpp"

using namespace rmen;
using rmen::ops::Padding;
using rmen::testing::max_relative_error;
using rmen::testing::numeric_gradient;
using rmen::testing::random_tensor;
using rmen::testing::weighted_sum;

namespace {

Tensor counting_3x3() { return Tensor({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}); }

}  // namespace

TEST(Tensor, RejectsInconsistentShapes) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor(Dims{}), ShapeError);
  EXPECT_THROW(Tensor({3, 0}), ShapeError);
  EXPECT_THROW(Tensor({4}).reshaped({3}), ShapeError);
}

TEST(Conv2d, ZeroInputGivesBias) {
  Rng rng(1);
  const Tensor input({1, 3, 3});
  const Tensor kernels = random_tensor({2, 1, 3, 3}, rng);
  const Tensor bias({2}, {0.5, -1.25});
  const Tensor out = ops::conv2d(input, kernels, bias);
  ASSERT_EQ(out.dims(), (Dims{2, 3, 3}));
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_EQ(out[i], 0.5);
    EXPECT_EQ(out[9 + i], -1.25);
  }
}

TEST(Conv2d, UnitKernelIsIdentity) {
  Rng rng(2);
  const Tensor input = random_tensor({1, 5, 4}, rng);
  const Tensor out = ops::conv2d(input, Tensor({1, 1, 1, 1}, 1.0), Tensor({1}));
  EXPECT_EQ(out, input);
}

TEST(Conv2d, OnesKernelSumsNeighbourhood) {
  const Tensor out = ops::conv2d(counting_3x3(), Tensor({1, 1, 3, 3}, 1.0), Tensor({1}));
  EXPECT_DOUBLE_EQ(out[4], 45.0);
  // corner sees 1+2+4+5
  EXPECT_DOUBLE_EQ(out[0], 12.0);
}

TEST(Conv2d, PaddingModesAndErrors) {
  Rng rng(3);
  const Tensor input = random_tensor({2, 7, 6}, rng);
  const Tensor k = random_tensor({3, 2, 3, 3}, rng);
  const Tensor b({3});
  EXPECT_EQ(ops::conv2d(input, k, b, Padding::same).dims(), (Dims{3, 7, 6}));
  EXPECT_EQ(ops::conv2d(input, k, b, Padding::valid).dims(), (Dims{3, 5, 4}));
  EXPECT_THROW(ops::conv2d(input, random_tensor({3, 1, 3, 3}, rng), b), ShapeError);
  EXPECT_THROW(ops::conv2d(input, random_tensor({3, 2, 2, 2}, rng), b, Padding::same), ShapeError);
}

TEST(Conv2d, BatchedMatchesPerSample) {
  Rng rng(4);
  const Tensor batch = random_tensor({3, 2, 5, 5}, rng);
  const Tensor k = random_tensor({4, 2, 3, 3}, rng);
  const Tensor b = random_tensor({4}, rng);
  const Tensor out = ops::conv2d(batch, k, b);
  for (std::size_t n = 0; n < 3; ++n) {
    Tensor one({2, 5, 5});
    std::copy_n(batch.ptr() + n * 50, 50, one.ptr());
    const Tensor single = ops::conv2d(one, k, b);
    for (std::size_t i = 0; i < single.size(); ++i) EXPECT_NEAR(out[n * 100 + i], single[i], 1e-12);
  }
}

TEST(MaxPool2, Examples) {
  EXPECT_EQ(ops::maxpool2(Tensor({1, 2, 2}, {1, 2, 3, 4})), Tensor({1, 1, 1}, {4}));
  EXPECT_EQ(ops::maxpool2(counting_3x3()), Tensor({1, 2, 2}, {5, 6, 8, 9}));
  const Tensor c({2, 5, 3}, 0.7);
  EXPECT_EQ(ops::maxpool2(c), Tensor({2, 3, 2}, 0.7));
}

TEST(MaxPool2, TieRoutesGradientToFirstIndex) {
  const Tensor in({1, 2, 2}, 3.0);
  const Tensor g = ops::maxpool2_backward(in, Tensor({1, 1, 1}, 1.0));
  EXPECT_EQ(g, Tensor({1, 2, 2}, {1, 0, 0, 0}));
}

TEST(Conv3d, Examples) {
  Rng rng(5);
  const Tensor zero({2, 3, 4, 4});
  const Tensor out0 = ops::conv3d(zero, random_tensor({1, 2, 3, 3, 3}, rng), Tensor({1}, 0.25));
  for (double v : out0.data()) EXPECT_EQ(v, 0.25);

  const Tensor x = random_tensor({1, 3, 2, 2}, rng);
  EXPECT_EQ(ops::conv3d(x, Tensor({1, 1, 1, 1, 1}, 1.0), Tensor({1})), x);

  const Tensor seq({1, 3, 1, 1}, {1, 2, 3});
  const Tensor r = ops::conv3d(seq, Tensor({1, 1, 3, 1, 1}, 1.0), Tensor({1}));
  EXPECT_EQ(r, Tensor({1, 3, 1, 1}, {3, 6, 5}));
}

TEST(Elementwise, Examples) {
  Rng rng(6);
  const Tensor x = random_tensor({10}, rng);
  EXPECT_EQ(ops::dropout(x, 0.5, rng, false).output, x);
  EXPECT_EQ(ops::relu(Tensor({2}, {-1, 2})), Tensor({2}, {0, 2}));
  Tensor eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0;
  const Tensor v({3}, {0.1, -2.0, 7.0});
  EXPECT_EQ(ops::dense(v, eye, Tensor({3})), v);
  EXPECT_EQ(ops::flatten(Tensor({2, 3}, 1.0)).dims(), (Dims{6}));
}

TEST(Elementwise, DropoutUsesInvertedScaling) {
  Rng rng(7);
  const Tensor x({20000}, 1.0);
  const auto r = ops::dropout(x, 0.5, rng, true);
  double kept = 0, total = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    ASSERT_TRUE(r.output[i] == 0.0 || r.output[i] == 2.0);
    kept += r.output[i] != 0.0;
    total += r.output[i];
  }
  EXPECT_NEAR(kept / 20000.0, 0.5, 0.02);
  EXPECT_NEAR(total / 20000.0, 1.0, 0.04);
  EXPECT_THROW(ops::dropout(x, 1.0, rng, true), ConfigError);
}

TEST(Rng, EqualSeedsGiveEqualStreams) {
  Rng a(12345), b(12345), c(12346);
  bool any_diff = false;
  for (int i = 0; i < 10000; ++i) {
    const auto x = a.next_u64();
    ASSERT_EQ(x, b.next_u64());
    any_diff |= x != c.next_u64();
  }
  EXPECT_TRUE(any_diff);
  // std::mt19937_64 with default seed: the 10000th output is fixed by the standard.
  Rng d(5489);
  std::uint64_t v = 0;
  for (int i = 0; i < 10000; ++i) v = d.next_u64();
  EXPECT_EQ(v, 9981545732273789042ULL);
}

TEST(Rng, NormalMoments) {
  Rng rng(9);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
  for (int i = 0; i < 1000; ++i) EXPECT_LE(std::abs(rng.truncated_normal(2.0, 3.0)), 6.0);
}

// --- FFT ---------------------------------------------------------------

TEST(Fft, ConstantIsDcOnly) {
  const std::vector<double> x(8, 1.5);
  const auto X = fft::rfft(x);
  ASSERT_EQ(X.size(), 5u);
  EXPECT_NEAR(X[0].real(), 12.0, 1e-12);
  for (std::size_t k = 1; k < X.size(); ++k) EXPECT_LT(std::abs(X[k]), 1e-12);
}

TEST(Fft, CosineHitsSingleBin) {
  const std::size_t n = 32, bin = 5;
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = std::cos(2 * std::numbers::pi * bin * i / n);
  const auto X = fft::rfft(x);
  for (std::size_t k = 0; k < X.size(); ++k) {
    if (k == bin) {
      EXPECT_NEAR(X[k].real(), n / 2.0, 1e-10);
    } else {
      EXPECT_LT(std::abs(X[k]), 1e-10);
    }
  }
}

TEST(Fft, EmptyInputThrows) {
  EXPECT_THROW(fft::rfft(std::vector<double>{}), InsufficientDataError);
  EXPECT_THROW(fft::irfft(std::vector<fft::Complex>{}, 0), InsufficientDataError);
}

TEST(Fft, MatchesDirectDftRoundTripAndParseval) {
  Rng rng(10);
  for (std::size_t n = 2; n <= 64; ++n) {
    std::vector<double> x(n);
    for (double& v : x) v = rng.uniform(-1, 1);
    const auto X = fft::rfft(x);
    const auto ref = rmen::testing::direct_rdft(x);
    double scale = 0;
    for (const auto& c : ref) scale = std::max(scale, std::abs(c));
    for (std::size_t k = 0; k < X.size(); ++k) EXPECT_LT(std::abs(X[k] - ref[k]), 1e-9 * scale) << "n=" << n;

    const auto back = fft::irfft(X, n);
    double energy_t = 0, max_x = 0;
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_NEAR(back[i], x[i], 1e-9 * std::max(1.0, std::abs(x[i]))) << "n=" << n;
      energy_t += x[i] * x[i];
      max_x = std::max(max_x, std::abs(x[i]));
    }
    // Parseval on the half spectrum: interior bins count twice.
    double energy_f = 0;
    for (std::size_t k = 0; k < X.size(); ++k) {
      const bool single = k == 0 || (n % 2 == 0 && k == n / 2);
      energy_f += (single ? 1.0 : 2.0) * std::norm(X[k]);
    }
    energy_f /= static_cast<double>(n);
    EXPECT_NEAR(energy_f, energy_t, 1e-9 * energy_t) << "n=" << n;
  }
}

// --- gradient checks ---------------------------------------------------

namespace {

constexpr double kTol = 1e-4;

}  // namespace

TEST(GradCheck, Conv2dSameAndValid) {
  Rng rng(11);
  for (Padding pad : {Padding::same, Padding::valid}) {
    Tensor x = random_tensor({2, 5, 6}, rng);
    Tensor k = random_tensor({3, 2, 3, 3}, rng);
    Tensor b = random_tensor({3}, rng);
    const Tensor probe = random_tensor(ops::conv2d(x, k, b, pad).dims(), rng);
    auto loss = [&] { return weighted_sum(ops::conv2d(x, k, b, pad), probe); };
    const auto g = ops::conv2d_backward(x, k, probe, pad);
    EXPECT_LT(max_relative_error(g.input, numeric_gradient(x, loss)), kTol);
    EXPECT_LT(max_relative_error(g.kernels, numeric_gradient(k, loss)), kTol);
    EXPECT_LT(max_relative_error(g.bias, numeric_gradient(b, loss)), kTol);
  }
}

TEST(GradCheck, Conv2dBatched) {
  Rng rng(12);
  Tensor x = random_tensor({3, 2, 4, 4}, rng);
  Tensor k = random_tensor({2, 2, 3, 3}, rng);
  Tensor b = random_tensor({2}, rng);
  const Tensor probe = random_tensor({3, 2, 4, 4}, rng);
  auto loss = [&] { return weighted_sum(ops::conv2d(x, k, b), probe); };
  const auto g = ops::conv2d_backward(x, k, probe);
  EXPECT_LT(max_relative_error(g.input, numeric_gradient(x, loss)), kTol);
  EXPECT_LT(max_relative_error(g.kernels, numeric_gradient(k, loss)), kTol);
  EXPECT_LT(max_relative_error(g.bias, numeric_gradient(b, loss)), kTol);
}

TEST(GradCheck, Conv3d) {
  Rng rng(13);
  Tensor x = random_tensor({2, 4, 3, 3}, rng);
  Tensor k = random_tensor({2, 2, 3, 3, 3}, rng);
  Tensor b = random_tensor({2}, rng);
  const Tensor probe = random_tensor({2, 4, 3, 3}, rng);
  auto loss = [&] { return weighted_sum(ops::conv3d(x, k, b), probe); };
  const auto g = ops::conv3d_backward(x, k, probe);
  EXPECT_LT(max_relative_error(g.input, numeric_gradient(x, loss)), kTol);
  EXPECT_LT(max_relative_error(g.kernels, numeric_gradient(k, loss)), kTol);
  EXPECT_LT(max_relative_error(g.bias, numeric_gradient(b, loss)), kTol);
}

TEST(GradCheck, MaxPoolAwayFromTies) {
  Rng rng(14);
  // Distinct values spaced well beyond the finite-difference step.
  std::vector<double> vals(2 * 5 * 5);
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 0.01 * static_cast<double>(i);
  rng.shuffle(vals);
  Tensor x({2, 5, 5}, vals);
  const Tensor probe = random_tensor({2, 3, 3}, rng);
  auto loss = [&] { return weighted_sum(ops::maxpool2(x), probe); };
  const Tensor g = ops::maxpool2_backward(x, probe);
  EXPECT_LT(max_relative_error(g, numeric_gradient(x, loss)), kTol);
}

TEST(GradCheck, Activations) {
  Rng rng(15);
  Tensor x = random_tensor({40}, rng, -2, 2);
  for (std::size_t i = 0; i < x.size(); ++i) {
    while (std::abs(x[i]) < 1e-3) x[i] = rng.uniform(-2, 2);  // stay off the relu kink
  }
  const Tensor probe = random_tensor({40}, rng);
  {
    auto loss = [&] { return weighted_sum(ops::relu(x), probe); };
    EXPECT_LT(max_relative_error(ops::relu_backward(ops::relu(x), probe), numeric_gradient(x, loss)), kTol);
  }
  {
    auto loss = [&] { return weighted_sum(ops::sigmoid(x), probe); };
    EXPECT_LT(max_relative_error(ops::sigmoid_backward(ops::sigmoid(x), probe), numeric_gradient(x, loss)), kTol);
  }
  {
    auto loss = [&] { return weighted_sum(ops::tanh(x), probe); };
    EXPECT_LT(max_relative_error(ops::tanh_backward(ops::tanh(x), probe), numeric_gradient(x, loss)), kTol);
  }
}

TEST(GradCheck, DenseAndMul) {
  Rng rng(16);
  for (Dims xd : {Dims{5}, Dims{3, 5}}) {
    Tensor x = random_tensor(xd, rng);
    Tensor w = random_tensor({4, 5}, rng);
    Tensor b = random_tensor({4}, rng);
    const Tensor probe = random_tensor(ops::dense(x, w, b).dims(), rng);
    auto loss = [&] { return weighted_sum(ops::dense(x, w, b), probe); };
    const auto g = ops::dense_backward(x, w, probe);
    EXPECT_LT(max_relative_error(g.input, numeric_gradient(x, loss)), kTol);
    EXPECT_LT(max_relative_error(g.weights, numeric_gradient(w, loss)), kTol);
    EXPECT_LT(max_relative_error(g.bias, numeric_gradient(b, loss)), kTol);
  }
  Tensor a = random_tensor({6}, rng), c = random_tensor({6}, rng);
  const Tensor probe = random_tensor({6}, rng);
  auto loss = [&] { return weighted_sum(ops::mul(a, c), probe); };
  EXPECT_LT(max_relative_error(ops::mul(probe, c), numeric_gradient(a, loss)), kTol);
}

TEST(GradCheck, DropoutWithFixedMask) {
  Rng rng(17);
  Tensor x = random_tensor({30}, rng);
  const Tensor probe = random_tensor({30}, rng);
  auto loss = [&] {
    Rng local(99);
    return weighted_sum(ops::dropout(x, 0.5, local, true).output, probe);
  };
  Rng local(99);
  const auto r = ops::dropout(x, 0.5, local, true);
  EXPECT_LT(max_relative_error(ops::dropout_backward(r.mask, probe), numeric_gradient(x, loss)), kTol);
}
