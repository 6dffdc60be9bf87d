#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rmen/binary.hpp"
#include "rmen/io.hpp"

namespace fs = std::filesystem;
using namespace rmen;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "rmen_cli";

// Runs the CLI with stdout and stderr captured into `log`; returns the exit code.
int run_cli(const std::string& args, std::string* log = nullptr) {
  const fs::path out = kRoot / "last.log";
  const std::string cmd = "cd '" + kRoot.string() + "' && '" RMEN_CLI "' " + args + " > '" + out.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  if (log) {
    std::ifstream in(out);
    std::stringstream ss;
    ss << in.rdbuf();
    *log = ss.str();
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

const char* kSmallConfig = R"({
  "seed": 5,
  "phantom": {"height": 32, "width": 32, "frames": 150},
  "splits": {"train": 2, "val": 1, "test": 2, "irregular": 1},
  "model": {"frame_height": 32, "frame_width": 32, "window_len": 8, "max_epochs": 1,
            "windows_per_epoch": 8, "val_windows": 4},
  "baselines": {"pca_max_frames": 100, "lstm_max_epochs": 1, "lstm_windows_per_epoch": 8}
})";

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    write_text(kRoot / "small.json", kSmallConfig);
    ASSERT_EQ(run_cli("generate --config small.json --out data"), 0);
  }
};

}  // namespace

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("train --bogus"), 1);
  EXPECT_EQ(run_cli("decompose --in data/test --fps abc --out x"), 1);
  EXPECT_FALSE(fs::exists(kRoot / "x"));
}

TEST_F(Cli, MalformedConfigFailsWithoutSideEffects) {
  write_text(kRoot / "broken.json", "{\"seed\": ");
  std::string log;
  EXPECT_EQ(run_cli("generate --config broken.json --out gen_broken", &log), 1);
  EXPECT_NE(log.find("malformed"), std::string::npos) << log;
  EXPECT_FALSE(fs::exists(kRoot / "gen_broken"));
  write_text(kRoot / "typo.json", R"({"splits": {"tarin": 1}})");
  EXPECT_EQ(run_cli("bench --config typo.json --out bench_typo", &log), 1);
  EXPECT_NE(log.find("tarin"), std::string::npos) << log;
  EXPECT_FALSE(fs::exists(kRoot / "bench_typo"));
  EXPECT_EQ(run_cli("train --data data --config broken.json --out never.rmck"), 1);
  EXPECT_FALSE(fs::exists(kRoot / "never.rmck"));
}

TEST_F(Cli, GenerateLayoutIsDeterministic) {
  for (const char* split : {"train", "val", "test", "irregular"}) {
    EXPECT_TRUE(fs::exists(kRoot / "data" / split / "manifest.json")) << split;
  }
  EXPECT_TRUE(fs::exists(kRoot / "data" / "config.json"));
  ASSERT_EQ(run_cli("generate --config small.json --out data2"), 0);
  for (const char* f : {"test/test_001.rmvd", "test/test_001_ecg.csv", "irregular/manifest.json"}) {
    EXPECT_EQ(binary::read_file(kRoot / "data" / f), binary::read_file(kRoot / "data2" / f)) << f;
  }
  const auto irregular = io::read_dataset(kRoot / "data" / "irregular" / "manifest.json");
  ASSERT_EQ(irregular.size(), 1u);
  EXPECT_EQ(irregular[0].events.size(), 2u);
}

TEST_F(Cli, TruthCurvesScorePerfectly) {
  const auto test = io::read_dataset(kRoot / "data" / "test" / "manifest.json");
  fs::create_directories(kRoot / "oracle");
  for (const auto& e : test) {
    const std::vector<double> zero(e.truth.cardiac_phase.size(), 0.0);
    io::write_frame_table({{"raw_median", &e.truth.cardiac_phase}, {"cardiac", &e.truth.cardiac_phase}, {"respiratory", &zero}},
                          kRoot / "oracle" / (e.id + ".csv"));
  }
  std::string log;
  ASSERT_EQ(run_cli("evaluate --truth data --split test --in oracle --out oracle_report.csv", &log), 0) << log;
  const auto rows = io::read_csv(kRoot / "oracle_report.csv", "id,matched,missed,false_positives,total_ref,mean_abs_offset");
  ASSERT_EQ(rows.size(), test.size() + 1);
  const auto& all = rows.back();
  EXPECT_EQ(all[0], "ALL");
  EXPECT_EQ(all[2], "0");
  EXPECT_EQ(all[3], "0");
  EXPECT_LE(io::parse_number(all[5], "offset"), 1.0);
}

TEST_F(Cli, FullPipelineProducesEveryArtifact) {
  std::string log;
  ASSERT_EQ(run_cli("train --data data --config small.json --out model.rmck", &log), 0) << log;
  EXPECT_TRUE(fs::exists(kRoot / "model_history.csv"));
  ASSERT_EQ(run_cli("predict --ckpt model.rmck --data data --split test --out pred", &log), 0) << log;
  ASSERT_EQ(run_cli("decompose --in pred --out dec --svg", &log), 0) << log;
  for (const char* f : {"dec/test_000.csv", "dec/test_000.svg", "dec/test_001.csv"}) EXPECT_TRUE(fs::exists(kRoot / f)) << f;
  const auto cols = io::read_frame_table(kRoot / "dec" / "test_000.csv", {"raw_median", "cardiac", "respiratory"});
  EXPECT_EQ(cols[0].size(), 150u);
  ASSERT_EQ(run_cli("evaluate --truth data --split test --in dec --out report.csv", &log), 0) << log;
  EXPECT_NE(log.find("ALL,"), std::string::npos) << log;

  ASSERT_EQ(run_cli("export-features --ckpt model.rmck --video data/test/test_000.rmvd --frames 10..18 --out feats", &log), 0)
      << log;
  std::size_t pgm = 0;
  for (const auto& e : fs::directory_iterator(kRoot / "feats")) pgm += e.path().extension() == ".pgm";
  EXPECT_EQ(pgm, 8u * 8u);  // channels x frames

  for (const char* m : {"density", "pca-ridge", "pca-lstm"}) {
    ASSERT_EQ(run_cli(std::string("baseline --method ") + m + " --data data --split test --config small.json --out base_" + m, &log),
              0)
        << log;
    EXPECT_TRUE(fs::exists(kRoot / (std::string("base_") + m) / "test_000.csv")) << m;
  }
}

TEST_F(Cli, PlanStageRejectsBadInputs) {
  std::string log;
  EXPECT_EQ(run_cli("predict --ckpt missing.rmck --data data --out p_missing", &log), 1);
  EXPECT_FALSE(fs::exists(kRoot / "p_missing"));
  EXPECT_EQ(run_cli("evaluate --truth data --split nosuch --in data --out r.csv"), 1);
  EXPECT_EQ(run_cli("baseline --method svr --data data --out b_svr"), 1);
  EXPECT_FALSE(fs::exists(kRoot / "b_svr"));
  EXPECT_EQ(run_cli("export-features --ckpt missing.rmck --video data/test/test_000.rmvd --frames 5..2 --out f_bad"), 1);
  EXPECT_FALSE(fs::exists(kRoot / "f_bad"));
  EXPECT_EQ(run_cli("decompose --in data/test --cardiac-low 3 --cardiac-high 1 --out d_bad"), 1);
  EXPECT_FALSE(fs::exists(kRoot / "d_bad"));
  write_text(kRoot / "corrupt.rmck", "RMCK garbage");
  EXPECT_EQ(run_cli("predict --ckpt corrupt.rmck --data data --out p_corrupt", &log), 2) << log;
}

TEST_F(Cli, GradcheckExitCodes) {
  std::string log;
  EXPECT_EQ(run_cli("gradcheck", &log), 0) << log;
  EXPECT_NE(log.find("gradcheck PASS"), std::string::npos);
  EXPECT_NE(log.find("lstm2.W_hf"), std::string::npos);
  EXPECT_EQ(run_cli("gradcheck --negate lstm1.W_xg", &log), 2);
  EXPECT_NE(log.find("gradcheck FAIL"), std::string::npos);
  EXPECT_EQ(run_cli("gradcheck --negate no.such"), 1);
}

TEST_F(Cli, SeedEnvironmentOverride) {
  ASSERT_EQ(run_cli("generate --config small.json --out seed_a"), 0);
  ASSERT_EQ(::setenv("RMEN_SEED", "99", 1), 0);
  const int rc = run_cli("generate --config small.json --out seed_b");
  ::unsetenv("RMEN_SEED");
  ASSERT_EQ(rc, 0);
  EXPECT_NE(binary::read_file(kRoot / "seed_a" / "test" / "test_000.rmvd"),
            binary::read_file(kRoot / "seed_b" / "test" / "test_000.rmvd"));
}
