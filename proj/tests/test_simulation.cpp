#include <gtest/gtest.h>

#include <filesystem>

#include "atfn/simulation.hpp"

using namespace atfn;

namespace {

const std::filesystem::path kScenarios = ATFN_SCENARIO_DIR;

workload::Scenario load(const char* name) { return workload::load_scenario((kScenarios / name).string()); }

workload::Scenario small(const char* name, std::uint32_t n = 5, double ms = 10) {
  auto s = load(name);
  s.workload.streams_per_app = n;
  s.workload.duration_ms = ms;
  return s;
}

}  // namespace

TEST(Simulation, ExactlyOnceDelivery) {
  for (auto mode : {nic::Mode::Rss, nic::Mode::Atfn}) {
    auto s = small("exp3.json");
    s.nic.mode = mode;
    const auto r = run_scenario(s).report;
    EXPECT_GT(r.data_sent, 1000u);
    EXPECT_EQ(r.duplicates, 0u);
    EXPECT_EQ(r.lost, 0u);
    EXPECT_EQ(r.drops, 0u);
    EXPECT_EQ(r.data_delivered, r.data_sent);
  }
}

TEST(Simulation, SameSeedSameReport) {
  const auto s = small("exp3.json");
  EXPECT_EQ(metrics::run_csv_row(run_scenario(s).report), metrics::run_csv_row(run_scenario(s).report));
  auto t = s;
  t.seed = 2;
  EXPECT_NE(metrics::run_csv_row(run_scenario(s).report), metrics::run_csv_row(run_scenario(t).report));
}

TEST(Simulation, AllHandshakesAdmittedWhenTableIsRoomy) {
  const auto r = run_scenario(small("exp1.json")).report;
  EXPECT_EQ(r.handshakes, r.flows);
  EXPECT_EQ(r.admitted, r.flows);
  EXPECT_DOUBLE_EQ(r.admitted_fraction, 1.0);
}

TEST(Simulation, HeldDelayBoundedByTimer) {
  auto s = small("exp3.json", 20, 30);
  const auto res = run_scenario(s);
  EXPECT_GT(res.report.transitions, 0u);
  EXPECT_LE(res.report.held_delay_max_ns, s.flow_table.t_timer);
  EXPECT_EQ(res.report.held_delay_overflow, 0u);
}

TEST(Simulation, PinnedAppsNeverMigrate) {
  const auto r = run_scenario(small("exp1.json")).report;
  EXPECT_EQ(r.migrations, 0u);
}

TEST(Simulation, Fig8ReordersOnlyBelowSafeTimer) {
  auto s = load("fig8.json");
  s.nic.ring_capacity = 16;
  s.flow_table.t_timer = 0;
  const auto r0 = run_scenario(s).report;
  EXPECT_GT(r0.reordered, 0u);
  EXPECT_EQ(r0.lost, 0u);

  Testbed probe(s);
  const auto safe = probe.script()->safe_t_timer();
  s.flow_table.t_timer = safe;
  const auto r1 = run_scenario(s).report;
  EXPECT_EQ(r1.reordered, 0u);
  EXPECT_EQ(r1.held_packets, 1u);
  EXPECT_LE(r1.held_delay_max_ns, safe);
}

TEST(Simulation, QueueRowsCoverEveryQueue) {
  const auto res = run_scenario(small("exp2.json"));
  ASSERT_EQ(res.queues.size(), 2u);
  EXPECT_EQ(res.queues[1].core, 2u);
  std::uint64_t queued = 0;
  for (const auto& q : res.queues) queued += q.stats.queued;
  EXPECT_GE(queued, res.report.data_delivered);
}

TEST(Simulation, TestbedRunsOnce) {
  Testbed tb(small("exp1.json", 1, 1));
  tb.run();
  EXPECT_THROW(tb.run(), std::logic_error);
}
