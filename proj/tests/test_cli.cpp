#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;  // stdout and stderr
};

Run corrode(const std::string& args) {
  const std::string cmd = std::string(CORRODE_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string config(const std::string& name) { return std::string(CORRODE_CONFIG_DIR) + "/" + name; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("corrode_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string out(const std::string& sub = "") const { return "-o " + (dir_ / sub).string(); }
  fs::path dir_;
};

}  // namespace

TEST_F(Cli, SolveLargeScale) {
  const auto r = corrode("solve -c " + config("large.json") + " " + out());
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("months"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "result.json"));
  EXPECT_TRUE(fs::exists(dir_ / "trajectory.csv"));
  EXPECT_NE(slurp(dir_ / "result.json").find("\"converged\""), std::string::npos);
}

TEST_F(Cli, SolveNoDistributedEdges) {
  const auto r = corrode("solve --n 1e10 --f 0 --lambda 2000 " + out());
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("infinite (no distributed edges)"), std::string::npos) << r.out;
}

TEST_F(Cli, InvalidFractionIsConfigError) {
  const auto r = corrode("solve --f 1.5 " + out());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("graph.f"), std::string::npos) << r.out;
}

TEST_F(Cli, UnknownFlagIsConfigError) {
  EXPECT_EQ(corrode("solve --frobnicate 3 " + out()).code, 2);
  EXPECT_EQ(corrode("no-such-command").code, 2);
}

TEST_F(Cli, MissingConfigFileIsConfigError) {
  EXPECT_EQ(corrode("solve -c /nonexistent/x.json " + out()).code, 2);
}

TEST_F(Cli, NotConvergedExitCode) {
  const auto r = corrode("solve -c " + config("desk.json") + " --max-iterations 1 " + out());
  EXPECT_EQ(r.code, 3) << r.out;
  EXPECT_NE(r.out.find("not converged"), std::string::npos);
}

TEST_F(Cli, HelpListsFlagsWithUnits) {
  const auto r = corrode("solve --help");
  EXPECT_EQ(r.code, 0);
  for (const char* s : {"--lambda", "--delta", "--gamma", "--config", "[queries/s]", "[s]", "[edges]"})
    EXPECT_NE(r.out.find(s), std::string::npos) << s;
}

TEST_F(Cli, DottedFlagsMatchShortFlags) {
  const auto a = corrode("solve --graph.n 20000 --graph.f 0.4 --workload.lambda 700 " + out("a"));
  const auto b = corrode("solve --n 20000 --f 0.4 --lambda 700 " + out("b"));
  ASSERT_EQ(a.code, 0) << a.out;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(slurp(dir_ / "a" / "result.json"), slurp(dir_ / "b" / "result.json"));
}

TEST_F(Cli, RepeatedRunsAreByteIdentical) {
  for (const char* name : {"a", "b"}) {
    ASSERT_EQ(corrode("simulate -c " + config("desk.json") + " --seed 5 " + out(std::string("sim_") + name)).code, 0);
    ASSERT_EQ(corrode("sweep -c " + config("sweep_lambda.json") + " " + out(std::string("sweep_") + name)).code, 0);
  }
  EXPECT_EQ(slurp(dir_ / "sim_a" / "trajectory.csv"), slurp(dir_ / "sim_b" / "trajectory.csv"));
  EXPECT_EQ(slurp(dir_ / "sim_a" / "result.json"), slurp(dir_ / "sim_b" / "result.json"));
  const auto sweep = slurp(dir_ / "sweep_a" / "sweep.csv");
  EXPECT_EQ(sweep, slurp(dir_ / "sweep_b" / "sweep.csv"));
  EXPECT_EQ(std::count(sweep.begin(), sweep.end(), '\n'), 11);
}

TEST_F(Cli, ValidateExitCodeFollowsVerdict) {
  const auto degenerate = corrode("validate --n 1000 --f 0 --seeds 2 --horizon 20 " + out("d"));
  EXPECT_EQ(degenerate.code, 0) << degenerate.out;
  EXPECT_NE(degenerate.out.find("consistent-degenerate"), std::string::npos);

  const auto strict = corrode("validate -c " + config("desk.json") + " --seeds 2 --tolerance 0 " + out("s"));
  EXPECT_EQ(strict.code, 1) << strict.out;
  EXPECT_NE(strict.out.find("verdict: fail"), std::string::npos);

  const auto loose = corrode("validate -c " + config("desk.json") + " --seeds 2 --tolerance 1e9 " + out("l"));
  EXPECT_EQ(loose.code, 0) << loose.out;
  EXPECT_TRUE(fs::exists(dir_ / "l" / "validation.csv"));
}

TEST_F(Cli, CompareTopologiesWritesOutputs) {
  const auto r = corrode(
      "compare-topologies --topology scale_free --n 1110 --f 0.3 --lambda 200 --delta 0.01 --seeds 2 " + out() +
      " -c " + config("desk.json"));
  // desk.json is complete; the flag switches the kind, and without categories the
  // full default table applies, whose N disagrees with --n
  EXPECT_EQ(r.code, 2) << r.out;

  const auto ok = corrode("compare-topologies -c " + config("desk_scalefree.json") + " --seeds 2 " + out());
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_TRUE(fs::exists(dir_ / "compare.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "onsets.csv"));
}
