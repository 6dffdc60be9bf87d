#include <gtest/gtest.h>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "rmen/io.hpp"
#include "rmen/run_config.hpp"

using namespace rmen;
using namespace rmen::io;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rmen_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

VideoSequence small_video(Rng& rng) {
  VideoSequence v;
  v.frames = 4;
  v.height = 3;
  v.width = 5;
  v.pixels.resize(60);
  for (float& p : v.pixels) p = static_cast<float>(rng.uniform());
  v.pixels[0] = 0.0f;
  v.pixels[1] = 1.0f;
  return v;
}

}  // namespace

TEST(Numbers, ShortestFormRoundTrips) {
  Rng rng(61);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-30, 30));
    EXPECT_EQ(parse_number(format_number(v), "t"), v);
  }
  EXPECT_TRUE(std::isnan(parse_number(format_number(std::nan("")), "t")));
  EXPECT_EQ(parse_number("-inf", "t"), -std::numeric_limits<double>::infinity());
  EXPECT_THROW(parse_number("1.5x", "t"), FormatError);
  EXPECT_THROW(parse_number("", "t"), FormatError);
  EXPECT_THROW(parse_index("-3", "t"), FormatError);
}

TEST(Video, RoundTripIsExact) {
  Rng rng(62);
  const auto v = small_video(rng);
  const auto dir = temp_dir("video");
  write_video(v, dir / "a.rmvd");
  const auto back = read_video(dir / "a.rmvd", "x", 12.5);
  EXPECT_EQ(back.pixels, v.pixels);
  EXPECT_EQ(back.frames, 4u);
  EXPECT_EQ(back.height, 3u);
  EXPECT_EQ(back.width, 5u);
  EXPECT_EQ(back.fps, 12.5);
  EXPECT_EQ(fs::file_size(dir / "a.rmvd"), 20u + 60u * 4u);
}

TEST(Video, CorruptFilesAreRejected) {
  Rng rng(63);
  const auto bytes = encode_video(small_video(rng));
  EXPECT_THROW(decode_video(std::vector<char>(bytes.begin(), bytes.end() - 1)), FormatError);
  auto magic = bytes;
  magic[3] = 'X';
  EXPECT_THROW(decode_video(magic), FormatError);
  auto version = bytes;
  version[4] = 9;
  EXPECT_THROW(decode_video(version), FormatError);
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(decode_video(extra), FormatError);
  auto pixel = bytes;
  const float bad = 1.5f;
  std::memcpy(pixel.data() + 20, &bad, 4);
  EXPECT_THROW(decode_video(pixel), FormatError);
  EXPECT_THROW(decode_video({}), FormatError);
  EXPECT_THROW(read_video(temp_dir("missing") / "none.rmvd"), IoError);
}

TEST(Series, EcgPeaksTruthAndFrameTables) {
  const auto dir = temp_dir("series");
  EcgTrace ecg;
  ecg.rate = 250.0;
  ecg.samples = {0.1, -0.25, 1e-17, 3.0};
  write_ecg(ecg, dir / "ecg.csv");
  EXPECT_EQ(read_ecg(dir / "ecg.csv", 250.0).samples, ecg.samples);

  write_peaks({0, 7, 200}, dir / "peaks.csv");
  EXPECT_EQ(read_peaks(dir / "peaks.csv"), (std::vector<std::size_t>{0, 7, 200}));

  const TruthSeries truth{{0.5, -0.1, 0.0}, {0.25, 0.125, -1.0 / 3.0}};
  write_truth(truth, dir / "truth.csv");
  EXPECT_EQ(read_truth(dir / "truth.csv"), truth);

  const std::vector<double> a{1.0, 2.5}, b{-0.1, std::nan("")};
  write_frame_table({{"a", &a}, {"b", &b}}, dir / "table.csv");
  const auto cols = read_frame_table(dir / "table.csv", {"a", "b"});
  EXPECT_EQ(cols[0], a);
  EXPECT_TRUE(std::isnan(cols[1][1]));
  EXPECT_THROW(read_frame_table(dir / "table.csv", {"a"}), FormatError);
  const std::vector<double> short_col{1.0};
  EXPECT_THROW(write_frame_table({{"a", &a}, {"s", &short_col}}, dir / "bad.csv"), ShapeError);
}

TEST(Series, MalformedCsvNamesTheProblem) {
  const auto dir = temp_dir("malformed");
  write_text(dir / "p.csv", "peak_sample_index\n5\n3\n");
  EXPECT_THROW(read_peaks(dir / "p.csv"), FormatError);
  write_text(dir / "h.csv", "wrong\n1\n");
  EXPECT_THROW(read_peaks(dir / "h.csv"), FormatError);
  write_text(dir / "e.csv", "sample_index,value\n0,1\n2,1\n");
  EXPECT_THROW(read_ecg(dir / "e.csv", 300.0), FormatError);
  write_text(dir / "c.csv", "frame,cardiac_phase,resp_phase\n0,1\n");
  try {
    read_truth(dir / "c.csv");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("c.csv:2"), std::string::npos) << e.what();
  }
  write_text(dir / "empty.csv", "");
  EXPECT_THROW(read_peaks(dir / "empty.csv"), FormatError);
  // CRLF line endings are accepted
  write_text(dir / "crlf.csv", "peak_sample_index\r\n4\r\n9\r\n");
  EXPECT_EQ(read_peaks(dir / "crlf.csv"), (std::vector<std::size_t>{4, 9}));
}

TEST(Dataset, RoundTripPreservesEverything) {
  phantom::PhantomConfig c;
  c.height = c.width = 16;
  c.frames = 60;
  c.events.push_back({phantom::EventKind::breath_hold, 10, 20, 0.0});
  const auto seq = phantom::generate_sequence(c, "seq_a");
  const auto dir = temp_dir("dataset");
  write_dataset({dataset_entry(seq)}, dir);
  const auto back = read_dataset(dir / "manifest.json");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].id, "seq_a");
  EXPECT_EQ(back[0].video.pixels, seq.video.pixels);
  EXPECT_EQ(back[0].video.fps, c.fps);
  EXPECT_EQ(back[0].ecg.samples, seq.ecg.samples);
  EXPECT_EQ(*back[0].ecg.true_peaks, *seq.ecg.true_peaks);
  EXPECT_EQ(back[0].truth.cardiac_phase, seq.truth.cardiac.targets);
  ASSERT_EQ(back[0].events.size(), 1u);
  EXPECT_EQ(back[0].events[0].kind, phantom::EventKind::breath_hold);
  EXPECT_EQ(back[0].events[0].duration_frames, 20u);

  write_text(dir / "manifest.json", "{not json");
  EXPECT_THROW(read_dataset(dir / "manifest.json"), FormatError);
  write_text(dir / "manifest.json", R"([{"id":"seq_a"}])");
  EXPECT_THROW(read_dataset(dir / "manifest.json"), FormatError);
  EXPECT_THROW(write_dataset({dataset_entry(phantom::generate_sequence(c, "a/b"))}, dir), ConfigError);
}

TEST(RunConfigFile, DefaultsRoundTripAndUnknownKeys) {
  const RunConfig defaults;
  EXPECT_NO_THROW(defaults.validate());
  EXPECT_EQ(run_config_to_json(run_config_from_json(run_config_to_json(defaults))), run_config_to_json(defaults));

  const auto dir = temp_dir("config");
  write_text(dir / "partial.json", R"({"seed": 9, "splits": {"train": 3}})");
  const auto partial = load_run_config(dir / "partial.json");
  EXPECT_EQ(partial.seed, 9u);
  EXPECT_EQ(partial.splits.train, 3u);
  EXPECT_EQ(partial.splits.val, defaults.splits.val);

  write_text(dir / "typo.json", R"({"splits": {"trian": 3}})");
  EXPECT_THROW(load_run_config(dir / "typo.json"), ConfigError);
  write_text(dir / "bad.json", "{");
  EXPECT_THROW(load_run_config(dir / "bad.json"), ConfigError);
  write_text(dir / "type.json", R"({"seed": "x"})");
  EXPECT_THROW(load_run_config(dir / "type.json"), ConfigError);
  write_text(dir / "range.json", R"({"eval": {"window": -1}})");
  EXPECT_THROW(load_run_config(dir / "range.json"), ConfigError);
  write_text(dir / "frames.json", R"({"phantom": {"height": 32}})");
  EXPECT_THROW(load_run_config(dir / "frames.json"), ConfigError);
  EXPECT_THROW(load_run_config(dir / "absent.json"), IoError);
}

TEST(RunConfigFile, SeedOverrideFromEnvironment) {
  RunConfig c;
  ::setenv("RMEN_SEED", "77", 1);
  apply_seed_override(c);
  EXPECT_EQ(c.seed, 77u);
  ::setenv("RMEN_SEED", "7x", 1);
  EXPECT_THROW(apply_seed_override(c), ConfigError);
  ::unsetenv("RMEN_SEED");
  apply_seed_override(c);
  EXPECT_EQ(c.seed, 77u);
}
