#include <gtest/gtest.h>

#include <cmath>

#include "rmen/baselines.hpp"
#include "support/oracles.hpp"

using namespace rmen;
using namespace rmen::baselines;

namespace {

VideoSequence video_from(std::size_t frames, std::size_t h, std::size_t w, const std::function<float(std::size_t, std::size_t)>& px) {
  VideoSequence v;
  v.frames = frames;
  v.height = h;
  v.width = w;
  v.pixels.resize(frames * h * w);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < h * w; ++i) v.pixels[t * h * w + i] = px(t, i);
  }
  return v;
}

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  }
  return m;
}

labels::PhaseLabelSeries constant_labels(std::size_t frames, double c) {
  labels::PhaseLabelSeries l;
  l.raw.assign(frames, std::asin(c));
  l.targets.assign(frames, c);
  l.labeled.assign(frames, true);
  return l;
}

}  // namespace

TEST(DensityFlow, ConstantRampAndPermutation) {
  for (double v : density_flow(video_from(10, 4, 4, [](std::size_t, std::size_t) { return 0.4f; }))) EXPECT_EQ(v, 0.0);
  const auto ramp = density_flow(video_from(9, 4, 4, [](std::size_t t, std::size_t) { return 0.1f * static_cast<float>(t) / 9.0f; }));
  for (std::size_t t = 0; t < 9; ++t) EXPECT_NEAR(ramp[t], 0.1 * (static_cast<double>(t) - 4.0) / 9.0, 1e-7);

  Rng rng(41);
  std::vector<float> base(5 * 16);
  for (float& p : base) p = static_cast<float>(rng.uniform());
  const auto a = video_from(5, 4, 4, [&](std::size_t t, std::size_t i) { return base[t * 16 + i]; });
  const auto b = video_from(5, 4, 4, [&](std::size_t t, std::size_t i) { return base[t * 16 + (i * 7) % 16]; });
  const auto da = density_flow(a), db = density_flow(b);
  for (std::size_t t = 0; t < 5; ++t) EXPECT_NEAR(da[t], db[t], 1e-12);
}

TEST(Pca, RankOneData) {
  Rng rng(42);
  const Eigen::VectorXd pattern = gaussian(20, 1, rng);
  Eigen::MatrixXd x(8, 20);
  for (Eigen::Index i = 0; i < 8; ++i) x.row(i) = (static_cast<double>(i) - 2.5) * pattern.transpose();
  const auto m = fit_pca(x);
  EXPECT_EQ(m.k, 1u);
  EXPECT_NEAR(m.explained[0], 1.0, 1e-12);
  EXPECT_THROW(fit_pca(Eigen::MatrixXd::Ones(5, 7)), InsufficientDataError);
  EXPECT_THROW(fit_pca(Eigen::MatrixXd::Ones(1, 7)), InsufficientDataError);
}

TEST(Pca, EmbeddedNoiseReconstructsExactly) {
  Rng rng(43);
  const Eigen::MatrixXd basis = gaussian(3, 10, rng);
  const Eigen::MatrixXd x = gaussian(30, 3, rng) * basis;
  const auto m = fit_pca(x, 1.0 - 1e-12);
  EXPECT_EQ(m.k, 3u);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::VectorXd row = x.row(i).transpose();
    EXPECT_LT((reconstruct(m, project(m, row)) - row).norm(), 1e-8);
  }
}

TEST(Pca, DiscardedEnergyMatchesSvdOracle) {
  Rng rng(44);
  const Eigen::MatrixXd x = gaussian(50, 1024, rng);
  const auto m = fit_pca(x, 0.6);
  ASSERT_LT(m.k, 49u);
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  const Eigen::VectorXd sv = Eigen::BDCSVD<Eigen::MatrixXd>(centered).singularValues();
  double discarded = 0.0;
  for (Eigen::Index i = static_cast<Eigen::Index>(m.k); i < sv.size(); ++i) discarded += sv(i) * sv(i);
  double err = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::VectorXd row = x.row(i).transpose();
    err += (reconstruct(m, project(m, row)) - row).squaredNorm();
  }
  EXPECT_NEAR(err, discarded, 1e-6 * discarded);
  // orthonormal rows, descending ratios, selection rule
  const Eigen::MatrixXd gram = m.components * m.components.transpose();
  EXPECT_LT((gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff(), 1e-8);
  double cumulative = 0.0;
  for (std::size_t c = 0; c < m.k; ++c) {
    if (c > 0) EXPECT_LE(m.explained[c], m.explained[c - 1]);
    cumulative += m.explained[c];
    if (c + 1 < m.k) EXPECT_LE(cumulative, 0.6);
  }
  EXPECT_GT(cumulative, 0.6);
}

TEST(Pca, CapBindsAtMaxComponents) {
  Rng rng(45);
  const auto m = fit_pca(gaussian(80, 100, rng), 0.95, 50);
  EXPECT_EQ(m.k, 50u);
  double total = 0.0;
  for (double r : m.explained) total += r;
  EXPECT_LE(total, 0.95);
}

TEST(Ridge, ExactFitLimitAndNormalEquations) {
  Rng rng(46);
  const Eigen::MatrixXd x = gaussian(40, 5, rng);
  const Eigen::VectorXd w = gaussian(5, 1, rng);
  const Eigen::VectorXd y = (x * w).array() + 0.3;
  const auto exact = fit_ridge(x, y, 0.0);
  EXPECT_LT((exact.predict(x) - y).cwiseAbs().maxCoeff(), 1e-8);

  const auto huge = fit_ridge(x, y, 1e14);
  EXPECT_LT(huge.weights.norm(), 1e-9);
  EXPECT_NEAR(huge.predict(x)(0), y.mean(), 1e-6);

  const Eigen::VectorXd noisy = y + 0.5 * gaussian(40, 1, rng);
  const auto r = fit_ridge(x, noisy, 2.0);
  const Eigen::MatrixXd xc = x.rowwise() - x.colwise().mean();
  const Eigen::VectorXd yc = noisy.array() - noisy.mean();
  const Eigen::VectorXd residual = (xc.transpose() * xc + 2.0 * Eigen::MatrixXd::Identity(5, 5)) * r.weights - xc.transpose() * yc;
  EXPECT_LT(residual.norm(), 1e-8);
  EXPECT_THROW(fit_ridge(x, noisy.head(3), 1.0), ShapeError);
}

TEST(Standardizer, ZeroMeanUnitVariance) {
  Rng rng(47);
  std::vector<Eigen::MatrixXd> blocks{gaussian(30, 3, rng) * 4.0, gaussian(20, 3, rng).array() + 2.0};
  const auto s = Standardizer::fit(blocks);
  Eigen::MatrixXd all(50, 3);
  all << s.apply(blocks[0]), s.apply(blocks[1]);
  EXPECT_LT(all.colwise().mean().cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR((all.array().square().colwise().sum() / 50.0).maxCoeff(), 1.0, 1e-12);
}

TEST(LstmRegressor, ZeroParametersPredictZero) {
  Rng rng(48);
  auto p = init_lstm_regressor(3, 4, rng);
  p.set_zero();
  const Tensor y = lstm_regressor_forward(p, rmen::testing::random_tensor({6, 3}, rng), nullptr);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], 0.0);
}

TEST(LstmRegressor, GradcheckPassesAndDetectsCorruption) {
  Rng rng(49);
  const auto report = gradcheck_lstm_regressor(rng);
  EXPECT_TRUE(report.passed()) << report.max_error();
  EXPECT_LT(report.max_error(), 1e-4);
  for (const auto& g : report.groups) EXPECT_GT(g.checked, 0u) << g.name;
  model::GradcheckOptions bad;
  bad.negate_gradient = "dense.weight";
  Rng rng2(49);
  EXPECT_FALSE(gradcheck_lstm_regressor(rng2, bad).passed());
}

TEST(LstmRegressor, MemorizesConstantWindow) {
  Rng rng(50);
  const auto labels = constant_labels(16, 0.4);
  Eigen::MatrixXd f = gaussian(16, 3, rng);
  std::vector<FeatureSequence> data{{f, &labels}};
  LstmRegressorConfig cfg;
  cfg.hidden = 8;
  cfg.train.adam.learning_rate = 1e-2;
  cfg.train.batch_size = 1;
  cfg.train.max_epochs = 300;
  cfg.train.patience = 300;
  auto result = fit_lstm_regressor(init_lstm_regressor(3, 8, rng), cfg, data, data);
  EXPECT_LT(result.best_val_mse, 1e-3);
  const auto pred = predict_lstm_regressor(result.params, cfg, f).median;
  for (double v : pred) EXPECT_NEAR(v, 0.4, 0.1);
}
