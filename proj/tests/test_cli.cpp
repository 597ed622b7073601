#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "atfn/cli.hpp"

using namespace atfn;
namespace fs = std::filesystem;

namespace {

const fs::path kScenarios = ATFN_SCENARIO_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream o;
  o << in.rdbuf();
  return o.str();
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("atfn_cli_test_" + name);
  fs::remove_all(d);
  return d;
}

cli::Invocation quick(const std::string& out, std::uint32_t repeat = 2) {
  cli::Invocation inv;
  inv.scenario_path = (kScenarios / "exp3.json").string();
  inv.duration_ms = 5;
  inv.streams_per_app = 4;
  inv.repeat = repeat;
  inv.out_dir = out;
  return inv;
}

int run_binary(const std::string& args) {
  const std::string cmd = std::string(ATFN_SIM_BINARY) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Overrides, ApplyAndValidate) {
  const auto base = workload::load_scenario((kScenarios / "exp3.json").string());
  cli::Invocation inv;
  inv.mode = "rss";
  inv.t_timer_us = 50;
  inv.max_list_size = 1;
  inv.seed = 9;
  const auto s = cli::apply_overrides(base, inv);
  EXPECT_EQ(s.nic.mode, nic::Mode::Rss);
  EXPECT_EQ(s.flow_table.t_timer, time::us(50));
  EXPECT_EQ(s.flow_table.max_list_size, 1u);
  EXPECT_EQ(s.seed, 9u);

  cli::Invocation bad;
  bad.t_timer_us = -1;
  EXPECT_THROW(cli::apply_overrides(base, bad), std::invalid_argument);
  bad = {};
  bad.max_list_size = 0;
  EXPECT_THROW(cli::apply_overrides(base, bad), std::invalid_argument);
  bad = {};
  bad.mode = "dpdk";
  EXPECT_THROW(cli::apply_overrides(base, bad), std::invalid_argument);
  bad = {};
  bad.repeat = 0;
  EXPECT_THROW(cli::apply_overrides(base, bad), std::invalid_argument);
}

TEST(OutDir, FlagThenEnvThenDefault) {
  EXPECT_EQ(cli::resolve_out_dir("x"), "x");
  ::setenv(cli::kOutDirEnv, "/tmp/from_env", 1);
  EXPECT_EQ(cli::resolve_out_dir(""), "/tmp/from_env");
  ::unsetenv(cli::kOutDirEnv);
  EXPECT_EQ(cli::resolve_out_dir(""), "atfn_out");
}

TEST(Run, WritesAllReportsWithOneRowPerSeed) {
  const auto dir = fresh_dir("files");
  std::ostringstream log;
  cli::run(quick(dir.string(), 3), log);
  for (const char* f : {"runs.csv", "queues.csv", "held_delay.csv", "aggregate.csv", "summary.txt", "scenario.json"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  const auto runs = slurp(dir / "runs.csv");
  EXPECT_EQ(std::count(runs.begin(), runs.end(), '\n'), 4);
  EXPECT_NE(log.str().find("reordering_ratio"), std::string::npos);
  // The written scenario reloads to the effective configuration.
  const auto s = workload::load_scenario((dir / "scenario.json").string());
  EXPECT_EQ(s.workload.streams_per_app, 4u);
  fs::remove_all(dir);
}

TEST(Run, ParallelJobsGiveIdenticalFiles) {
  const auto a = fresh_dir("serial"), b = fresh_dir("parallel");
  std::ostringstream log;
  auto inv = quick(a.string(), 4);
  cli::run(inv, log);
  inv.out_dir = b.string();
  inv.jobs = 4;
  cli::run(inv, log);
  for (const char* f : {"runs.csv", "queues.csv", "held_delay.csv", "aggregate.csv"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Compare, IdenticalRunsGiveZeroDeltas) {
  const auto a = fresh_dir("cmp_a"), b = fresh_dir("cmp_b");
  std::ostringstream log;
  cli::run(quick(a.string()), log);
  cli::run(quick(b.string()), log);
  const auto out = cli::compare(a, b);
  std::istringstream in(out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "metric,a_mean,b_mean,delta,direction");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_TRUE(line.ends_with(",0,same")) << line;
  }
  EXPECT_GT(rows, 30);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Compare, ModeChangeIsComparable) {
  const auto a = fresh_dir("mode_a"), b = fresh_dir("mode_b");
  std::ostringstream log;
  auto inv = quick(a.string());
  cli::run(inv, log);
  inv.out_dir = b.string();
  inv.mode = "rss";
  cli::run(inv, log);
  EXPECT_NE(cli::compare(a, b).find("cross_core_packets,"), std::string::npos);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Compare, DifferentScenariosAreRejected) {
  const auto a = fresh_dir("mis_a"), b = fresh_dir("mis_b");
  std::ostringstream log;
  auto inv = quick(a.string());
  cli::run(inv, log);
  inv.out_dir = b.string();
  inv.streams_per_app = 5;
  cli::run(inv, log);
  EXPECT_THROW(cli::compare(a, b), std::invalid_argument);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Binary, ExitCodes) {
  const auto dir = fresh_dir("bin");
  const auto scen = (kScenarios / "exp1.json").string();
  EXPECT_EQ(run_binary("run " + scen + " --t-timer -1 --out " + dir.string()), 2);
  EXPECT_EQ(run_binary("run " + scen + " --mode nope --out " + dir.string()), 2);
  EXPECT_NE(run_binary("run /nonexistent.json"), 0);
  EXPECT_NE(run_binary("frobnicate"), 0);
  EXPECT_EQ(run_binary("run " + scen + " --duration 2 --streams 2 --out " + dir.string()), 0);
  EXPECT_EQ(run_binary("compare " + dir.string() + " " + dir.string()), 0);
  fs::remove_all(dir);
}
