#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "rmen/labels.hpp"
#include "rmen/phantom.hpp"

using namespace rmen;
using namespace rmen::phantom;

namespace {

PhantomConfig small(std::size_t frames = 150) {
  PhantomConfig c;
  c.height = c.width = 32;
  c.frames = frames;
  return c;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n, mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

std::vector<double> intervals(const std::vector<double>& beats) {
  std::vector<double> d;
  for (std::size_t i = 1; i < beats.size(); ++i) d.push_back(beats[i] - beats[i - 1]);
  return d;
}

}  // namespace

TEST(Phases, ZeroJitterGivesExactBeats) {
  PhantomConfig c = small();
  c.beat_jitter_sd = 0.0;
  c.cardiac_rate_hz = 1.6;  // 0.625 s intervals sum exactly, so the beat at 10 s stays outside
  const auto beats = generate_phases(c).beat_times_in(c.duration_s());
  ASSERT_EQ(beats.size(), 16u);
  for (std::size_t k = 0; k < beats.size(); ++k) EXPECT_NEAR(beats[k], static_cast<double>(k) / 1.6, 1e-12);
}

TEST(Phases, JitterSpreadMatchesConfig) {
  PhantomConfig c = small(2500);  // ~200 beats at 1.2 Hz
  const auto d = intervals(generate_phases(c).beat_times_in(c.duration_s()));
  ASSERT_GE(d.size(), 199u);
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
  double var = 0.0;
  for (double x : d) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / static_cast<double>(d.size() - 1));
  const double nominal = 1.0 / c.cardiac_rate_hz;
  EXPECT_GE(sd, 0.02 * nominal);
  EXPECT_LE(sd, 0.08 * nominal);
  for (double x : d) {
    EXPECT_GE(x, nominal * (1 - 3 * c.beat_jitter_sd) - 1e-12);
    EXPECT_LE(x, nominal * (1 + 3 * c.beat_jitter_sd) + 1e-12);
  }
}

TEST(Phases, SkippedBeatDoublesOneInterval) {
  PhantomConfig c = small();
  c.beat_jitter_sd = 0.0;
  c.cardiac_rate_hz = 1.0;
  c.events.push_back({EventKind::skipped_beat, 45, 15, 0.0});  // the beat at 3 s
  const auto ph = generate_phases(c);
  ASSERT_EQ(ph.skipped.size(), 1u);
  EXPECT_NEAR(ph.skipped[0], 3.0, 1e-12);
  const auto d = intervals(ph.beat_times_in(c.duration_s()));
  std::size_t doubled = 0;
  for (double x : d) {
    if (std::abs(x - 2.0) < 1e-9) ++doubled;
    else EXPECT_NEAR(x, 1.0, 1e-9);
  }
  EXPECT_EQ(doubled, 1u);
}

TEST(Phases, BeatIntervalsStayPhysiological) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    PhantomConfig c = small(600);
    c.seed = seed;
    for (double d : intervals(generate_phases(c).beat_times_in(c.duration_s()))) {
      EXPECT_GE(d, 0.5);
      EXPECT_LE(d, 2.0);
    }
  }
}

TEST(Render, StaticSceneGivesIdenticalFrames) {
  PhantomConfig c = small(20);
  c.cardiac_amp_px = c.resp_amp_px = c.noise_sd = c.drift_amp = 0.0;
  const auto s = generate_sequence(c);
  for (std::size_t t = 1; t < c.frames; ++t) {
    ASSERT_TRUE(std::equal(s.video.frame(t).begin(), s.video.frame(t).end(), s.video.frame(0).begin()));
  }
}

TEST(Render, VideoShiftTranslatesFrame) {
  PhantomConfig c = small(20);
  c.cardiac_amp_px = c.resp_amp_px = c.noise_sd = c.drift_amp = 0.0;
  c.events.push_back({EventKind::video_shift, 10, 0, 3.0});
  const auto s = generate_sequence(c);
  const auto before = s.video.frame(9), after = s.video.frame(10);
  for (std::size_t y = 0; y < c.height; ++y) {
    for (std::size_t x = 0; x < c.width; ++x) {
      const float expected = x >= 3 ? before[y * c.width + x - 3] : 0.0f;
      ASSERT_FLOAT_EQ(after[y * c.width + x], expected) << y << "," << x;
    }
  }
  EXPECT_TRUE(std::equal(s.video.frame(19).begin(), s.video.frame(19).end(), after.begin()));
}

TEST(Render, PixelsInUnitRangeAndFinite) {
  const auto s = generate_sequence(small());
  for (float v : s.video.pixels) {
    ASSERT_TRUE(std::isfinite(v));
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
}

TEST(Render, MeanIntensityIsConfoundedByDrift) {
  PhantomConfig c;
  c.seed = 7;
  const auto s = generate_sequence(c);
  std::vector<double> mean(c.frames);
  for (std::size_t t = 0; t < c.frames; ++t) {
    const auto f = s.video.frame(t);
    mean[t] = std::accumulate(f.begin(), f.end(), 0.0) / static_cast<double>(f.size());
  }
  EXPECT_LT(std::abs(pearson(mean, s.truth.cardiac.targets)), 0.3);
}

TEST(Determinism, EqualSeedsGiveIdenticalSequences) {
  const auto a = generate_sequence(small(), "a"), b = generate_sequence(small(), "a");
  EXPECT_EQ(a.video, b.video);
  EXPECT_EQ(a.ecg.samples, b.ecg.samples);
  EXPECT_EQ(*a.ecg.true_peaks, *b.ecg.true_peaks);
  PhantomConfig other = small();
  other.seed = 2;
  EXPECT_NE(generate_sequence(other, "a").video.pixels, a.video.pixels);
}

TEST(Ecg, NoBeatsStaysNearBaseline) {
  PhantomConfig c = small();
  const auto ecg = synthesize_ecg({}, c);
  for (double v : ecg.samples) ASSERT_LT(v, 0.1 + 4 * c.ecg_noise_sd);
  EXPECT_TRUE(ecg.true_peaks->empty());
}

TEST(Ecg, SingleBeatArgmax) {
  PhantomConfig c = small();
  c.ecg_noise_sd = 0.0;
  const auto ecg = synthesize_ecg({1.0}, c);
  const auto argmax = std::max_element(ecg.samples.begin(), ecg.samples.end()) - ecg.samples.begin();
  EXPECT_NEAR(static_cast<double>(argmax), 300.0, 2.0);
  EXPECT_EQ(*ecg.true_peaks, std::vector<std::size_t>{300});
}

TEST(GroundTruth, CardiacPhaseIsTheLabelPipelineOnTruePeaks) {
  const auto s = generate_sequence(small(300));
  const auto mapped = labels::map_peaks({*s.ecg.true_peaks, s.ecg.rate}, s.video.fps);
  const auto expected = labels::build_targets(mapped.frames, s.video.frames, s.video.fps);
  EXPECT_EQ(s.truth.cardiac.targets, expected.targets);
  EXPECT_EQ(s.truth.beat_frames, mapped.frames);
}

TEST(GroundTruth, BreathHoldFreezesRespiratoryPhase) {
  PhantomConfig c = small(300);
  c.events.push_back({EventKind::breath_hold, 100, 60, 0.0});
  const auto s = generate_sequence(c);
  for (std::size_t t = 101; t < 160; ++t) EXPECT_DOUBLE_EQ(s.truth.resp_phase[t], s.truth.resp_phase[100]) << t;
  EXPECT_NE(s.truth.resp_phase[170], s.truth.resp_phase[100]);
}

TEST(Config, RejectsImpossibleAndWarnsOutsidePhysiology) {
  PhantomConfig c = small();
  c.ecg_rate = 10.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small();
  c.events.push_back({EventKind::breath_hold, 140, 20, 0.0});
  EXPECT_THROW(c.validate(), ConfigError);
  c = small();
  c.cardiac_rate_hz = 3.0;
  EXPECT_EQ(c.validate().size(), 1u);
}
