#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "atfn/workload.hpp"

using namespace atfn;
using namespace atfn::workload;

namespace {

const std::filesystem::path kScenarios = ATFN_SCENARIO_DIR;

Scenario two_apps(std::uint32_t n) {
  Scenario s;
  s.workload.streams_per_app = n;
  return s;
}

}  // namespace

TEST(Streams, SequentialPortsInterleavedOverApps) {
  Rng rng(1);
  const auto st = spawn_streams(two_apps(3), rng);
  ASSERT_EQ(st.size(), 6u);
  for (std::size_t i = 0; i < st.size(); ++i) {
    EXPECT_EQ(st[i].flow, i);
    EXPECT_EQ(st[i].app, i % 2);
    EXPECT_EQ(st[i].key.src_port, 32768 + i);
    EXPECT_EQ(st[i].key.dst_port, i % 2 == 0 ? 5001 : 6001);
    EXPECT_EQ(st[i].key.protocol, kProtoTcp);
  }
  EXPECT_LT(st[0].syn_at, st[1].syn_at);
}

TEST(Streams, RandomPortsDistinctAndInRange) {
  auto s = two_apps(1000);
  s.workload.port_mode = PortMode::Random;
  Rng rng(4);
  const auto st = spawn_streams(s, rng);
  std::set<std::uint16_t> ports;
  for (const auto& x : st) {
    EXPECT_GE(x.key.src_port, 32768);
    ports.insert(x.key.src_port);
  }
  EXPECT_EQ(ports.size(), st.size());
  Rng again(4);
  EXPECT_EQ(spawn_streams(s, again)[17].key, st[17].key);
}

TEST(Streams, TooManyForThePortRange) {
  auto s = two_apps(20000);
  Rng rng(1);
  EXPECT_THROW(spawn_streams(s, rng), std::invalid_argument);
}

TEST(Streams, DistinctSenderAddresses) {
  auto s = two_apps(2);
  s.workload.distinct_sender_addrs = true;
  Rng rng(1);
  const auto st = spawn_streams(s, rng);
  std::set<IpAddress> addrs;
  for (const auto& x : st) addrs.insert(x.key.src_addr);
  EXPECT_EQ(addrs.size(), 4u);
}

TEST(Streams, RateSplitsLinkCapacity) {
  auto s = two_apps(10);
  s.workload.link_gbps = 10;
  s.workload.packet_bytes = 250;
  s.workload.load_fraction = 0.5;
  EXPECT_DOUBLE_EQ(stream_rate_pps(s), 0.5 * 5e6 / 20);
  s.workload.stream_pps = 1234;
  EXPECT_DOUBLE_EQ(stream_rate_pps(s), 1234);
}

TEST(ScenarioJson, RoundTripIsAFixpoint) {
  for (const auto& entry : std::filesystem::directory_iterator(kScenarios)) {
    if (entry.path().extension() != ".json") continue;
    const auto s = load_scenario(entry.path().string());
    s.validate();
    const auto once = dump_scenario(s);
    const auto back = from_json(json::parse(once));
    EXPECT_EQ(dump_scenario(back), once) << entry.path();
    EXPECT_EQ(scenario_hash(back), scenario_hash(s));
  }
}

TEST(ScenarioJson, DefaultsRoundTrip) {
  const Scenario s;
  EXPECT_EQ(dump_scenario(from_json(to_json(s))), dump_scenario(s));
}

TEST(ScenarioJson, UnknownKeyRejected) {
  auto j = to_json(Scenario{});
  j["workload"]["streams"] = 5;
  EXPECT_THROW(from_json(j), std::invalid_argument);
  j = to_json(Scenario{});
  j["bogus"] = 1;
  EXPECT_THROW(from_json(j), std::invalid_argument);
}

TEST(ScenarioJson, WrongVersionRejected) {
  auto j = to_json(Scenario{});
  j["version"] = 99;
  EXPECT_THROW(from_json(j), std::invalid_argument);
}

TEST(ScenarioJson, MissingFileAndBadJson) {
  EXPECT_THROW(load_scenario("/nonexistent/x.json"), std::runtime_error);
  const auto p = std::filesystem::temp_directory_path() / "atfn_bad_scenario.json";
  { std::ofstream(p) << "{ not json"; }
  EXPECT_THROW(load_scenario(p.string()), std::invalid_argument);
  std::filesystem::remove(p);
}

TEST(ScenarioHash, IgnoresModeSeedAndTableButNotWorkload) {
  Scenario a;
  Scenario b = a;
  b.seed = 99;
  b.name = "other";
  b.nic.mode = nic::Mode::Rss;
  b.flow_table.t_timer = 0;
  EXPECT_EQ(scenario_hash(a), scenario_hash(b));
  b.workload.streams_per_app = 7;
  EXPECT_NE(scenario_hash(a), scenario_hash(b));
}

TEST(ScenarioValidate, RejectsBadValues) {
  Scenario s;
  s.workload.apps[0].cores = {9};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.workload.streams_per_app = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.workload.script = "fig9";
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.nic.queue_core = {0, 1, 2};
  s.rss.indirection_table = {0, 1, 3, 0};
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(ScenarioRss, DefaultTableIsRoundRobinPowerOfTwo) {
  Scenario s;
  s.nic.queue_core = {0, 1, 2};
  const auto c = s.build_rss_config();
  EXPECT_EQ(c.table.size(), 16u);
  EXPECT_EQ(c.num_queues, 3u);
  EXPECT_EQ(c.table.entries()[5], 2u);
}

TEST(Fig8, ScheduleForSmallRing) {
  rss::RssConfig r;
  r.num_queues = 2;
  r.table = rss::IndirectionTable::round_robin(8, 2);
  const rss::Classifier cls(r);
  const auto sc = adversarial_fig8_schedule(2, 3e6, cls, 0, 1);
  EXPECT_EQ(sc.depth, 2u);
  EXPECT_EQ(sc.safe_t_timer(), 333u);
  EXPECT_EQ(cls.queue_for(sc.victim_key), 0u);
  for (const auto& k : sc.filler_keys) EXPECT_EQ(cls.queue_for(k), 0u);

  // D-1 fillers and S one tick before T, the descriptor at T, S+1 after.
  std::size_t fillers_before_t = 0;
  const ScriptStep* s = nullptr;
  const ScriptStep* tx = nullptr;
  const ScriptStep* s1 = nullptr;
  for (const auto& st : sc.steps) {
    if (st.transmit) tx = &st;
    else if (st.packet.flow != 0 && st.at == sc.migrate_at - 1) ++fillers_before_t;
    else if (st.packet.flow == 0 && st.packet.seq == sc.seq_s && st.packet.kind == PacketKind::Data) s = &st;
    else if (st.packet.flow == 0 && st.packet.seq == sc.seq_s + 1) s1 = &st;
  }
  EXPECT_EQ(fillers_before_t, 1u);
  ASSERT_TRUE(s && tx && s1);
  EXPECT_EQ(s->at, sc.migrate_at - 1);
  EXPECT_EQ(tx->at, sc.migrate_at);
  EXPECT_EQ(tx->core, 1u);
  EXPECT_EQ(s1->at, sc.migrate_at + 1);
  EXPECT_THROW(adversarial_fig8_schedule(1, 3e6, cls), std::invalid_argument);
}
