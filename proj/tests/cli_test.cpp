#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

namespace {

namespace fs = std::filesystem;

const std::string kCli = HJBSCAN_CLI_PATH;
const std::string kConfigDir = HJBSCAN_CONFIG_DIR;

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("hjbscan_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }
  std::string out(const std::string& name) const { return (root_ / name).string(); }

  fs::path root_;
};

TEST_F(CliTest, TrackingCheckPasses) {
  ASSERT_EQ(run("solve-lqt " + kConfigDir + "/tracking.yaml --backend both --check --timing-runs 1 --out " + out("a")), 0);
  const auto report = nlohmann::json::parse(slurp(root_ / "a" / "report.json"));
  ASSERT_EQ(report["runs"].size(), 1u);
  EXPECT_LE(report["runs"][0]["max_rel_err"]["max"].get<double>(), 1e-6);
  EXPECT_EQ(report["runs"][0]["scan_depth"].get<int>(), 7);
  const auto timing = nlohmann::json::parse(slurp(root_ / "a" / "timing.json"));
  EXPECT_TRUE(timing["runs"][0]["parallel_ms"].contains("scan"));
  EXPECT_EQ(first_line(root_ / "a" / "trajectory_T100.csv"), "t,x0,x1,x2,x3,u0,u1");
  EXPECT_EQ(first_line(root_ / "a" / "values_T100.csv").substr(0, 9), "t,S00,S01");
}

TEST_F(CliTest, SweepEmitsOneRowPerT) {
  ASSERT_EQ(run("solve-lqt " + kConfigDir + "/tracking.yaml --T 10,20,40 --n 10 --timing-runs 0 --out " + out("s")), 0);
  const auto report = nlohmann::json::parse(slurp(root_ / "s" / "report.json"));
  ASSERT_EQ(report["runs"].size(), 3u);
  EXPECT_EQ(report["runs"][2]["T"].get<int>(), 40);
  EXPECT_TRUE(fs::exists(root_ / "s" / "trajectory_T20.csv"));
  EXPECT_FALSE(fs::exists(root_ / "s" / "timing.json"));
}

TEST_F(CliTest, ScalarOracle) {
  ASSERT_EQ(run("solve-lqt " + kConfigDir + "/scalar_lqr.yaml --backend both --oracle --timing-runs 0 --out " + out("o")), 0);
  const auto report = nlohmann::json::parse(slurp(root_ / "o" / "report.json"));
  EXPECT_LE(report["runs"][0]["oracle_rel_err"]["parallel"].get<double>(), 1e-6);
  EXPECT_LE(report["runs"][0]["oracle_rel_err"]["sequential"].get<double>(), 1e-6);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run("demo nope"), 2);
  EXPECT_EQ(run("solve-lqt " + kConfigDir + "/missing.yaml --out " + out("x")), 2);
  EXPECT_EQ(run("solve-lqt " + kConfigDir + "/tracking.yaml --oracle --out " + out("x")), 2);
  EXPECT_EQ(run("solve-lqt --backend sideways " + kConfigDir + "/tracking.yaml"), 2);
  EXPECT_EQ(run("demo scalar-lqr"), 0);
  EXPECT_EQ(run("demo wang"), 0);
  // Riccati step of 0.25 is past the stability limit of the tracking problem.
  EXPECT_EQ(run("solve-lqt " + kConfigDir + "/tracking.yaml --T 10 --n 5 --timing-runs 0 --out " + out("x")), 3);
  // A grid too coarse in time for the upwind scheme.
  EXPECT_EQ(run("solve-nonlinear " + kConfigDir + "/falling_body.yaml --method upwind --grid-size 60 "
                "--upwind-substeps 2 --out " + out("x")),
            3);
}

TEST_F(CliTest, UpwindOnlyRunsNoShooting) {
  ASSERT_EQ(run("solve-nonlinear " + kConfigDir + "/falling_body.yaml --method upwind --out " + out("u")), 0);
  const auto report = nlohmann::json::parse(slurp(root_ / "u" / "report.json"));
  ASSERT_EQ(report["runs"].size(), 3u);
  for (const auto& row : report["runs"]) EXPECT_FALSE(row.contains("shooting"));
  EXPECT_TRUE(fs::exists(root_ / "u" / "values_upwind_M40.csv"));
  EXPECT_FALSE(fs::exists(root_ / "u" / "values_parallel_M40.csv"));
  EXPECT_EQ(first_line(root_ / "u" / "values_upwind_M40.csv"), "t,x,V");
}

TEST_F(CliTest, CompareReportsGapPerGridSize) {
  ASSERT_EQ(run("solve-nonlinear " + kConfigDir + "/falling_body.yaml --grid-size 20,40 --compare --cache-dir " +
                out("cache") + " --out " + out("c")),
            0);
  const auto report = nlohmann::json::parse(slurp(root_ / "c" / "report.json"));
  ASSERT_EQ(report["runs"].size(), 2u);
  EXPECT_GT(report["runs"][0]["max_abs_gap"].get<double>(), report["runs"][1]["max_abs_gap"].get<double>());
  // Second run hits the cache and reproduces the same artifacts.
  ASSERT_EQ(run("solve-nonlinear " + kConfigDir + "/falling_body.yaml --grid-size 20,40 --compare --cache-dir " +
                out("cache") + " --out " + out("c2")),
            0);
  const auto timing = nlohmann::json::parse(slurp(root_ / "c2" / "timing.json"));
  EXPECT_TRUE(timing["runs"][0]["cache_hit"].get<bool>());
  EXPECT_EQ(slurp(root_ / "c" / "report.json"), slurp(root_ / "c2" / "report.json"));
  EXPECT_EQ(slurp(root_ / "c" / "values_parallel_M40.csv"), slurp(root_ / "c2" / "values_parallel_M40.csv"));
}

TEST_F(CliTest, ArtifactsIndependentOfThreadCount) {
  const std::string lqt = "solve-lqt " + kConfigDir + "/tracking.yaml --backend both --check --timing-runs 0 --seed 1 ";
  ASSERT_EQ(run(lqt + "--threads 1 --out " + out("t1")), 0);
  ASSERT_EQ(run(lqt + "--threads 4 --out " + out("t4")), 0);
  const std::string nl = "solve-nonlinear " + kConfigDir + "/falling_body.yaml --grid-size 20 --compare --seed 1 ";
  ASSERT_EQ(run(nl + "--threads 1 --out " + out("n1")), 0);
  ASSERT_EQ(run(nl + "--threads 3 --out " + out("n3")), 0);
  for (const char* f : {"report.json", "trajectory_T100.csv", "values_T100.csv"}) {
    EXPECT_EQ(slurp(root_ / "t1" / f), slurp(root_ / "t4" / f)) << f;
  }
  for (const char* f : {"report.json", "values_upwind_M20.csv", "values_parallel_M20.csv"}) {
    EXPECT_EQ(slurp(root_ / "n1" / f), slurp(root_ / "n3" / f)) << f;
  }
}

}  // namespace
