#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "atfn/flow_table.hpp"
#include "atfn/host_model.hpp"
#include "atfn/nic_model.hpp"
#include "atfn/packet.hpp"
#include "atfn/rss_engine.hpp"
#include "atfn/sim_kernel.hpp"

namespace atfn::workload {

using json = nlohmann::json;

inline constexpr int kScenarioVersion = 1;

// One receiving application (an iperf server): a port, the cores its
// per-stream threads may use, and how eagerly they call recv.
struct AppSpec {
  std::uint16_t port = 5001;
  std::vector<CoreId> cores{0};
  double think_us = 20.0;
  bool reads = true;

  bool operator==(const AppSpec&) const = default;
};

enum class PortMode : std::uint8_t { Sequential, Random };

struct WorkloadSpec {
  std::uint32_t streams_per_app = 20;  // n; 2n streams with two apps
  std::vector<AppSpec> apps{AppSpec{5001, {0}}, AppSpec{6001, {1}}};
  std::uint32_t packet_bytes = 256;
  double link_gbps = 10.0;
  double load_fraction = 0.7;  // of link packet capacity, split equally over streams
  double stream_pps = 0.0;     // > 0 overrides the equal split
  std::uint32_t burst = 4;
  double duration_ms = 100.0;
  double link_latency_us = 10.0;
  double handshake_spacing_us = 2.0;
  std::string sender_addr = "10.0.0.1";
  std::string receiver_addr = "10.0.0.2";
  bool distinct_sender_addrs = false;  // one sender address per stream
  PortMode port_mode = PortMode::Sequential;
  std::uint16_t port_base = 32768;
  std::string script;  // "" for streams, "fig8" for the worst-case migration script

  bool operator==(const WorkloadSpec&) const = default;
};

struct RssSpec {
  rss::LookupMode lookup = rss::LookupMode::Indirection;
  std::vector<QueueId> indirection_table;  // empty: round-robin, 4 entries per queue
  std::string key_hex;                     // empty: verification key
  rss::HashType hash_type;

  bool operator==(const RssSpec&) const = default;
};

struct Scenario {
  int version = kScenarioVersion;
  std::string name = "scenario";
  std::uint64_t seed = 1;
  host::Topology topology;
  nic::NicConfig nic;
  RssSpec rss;
  ftable::FlowTableConfig flow_table;
  double aging_interval_ms = 10.0;
  host::HostConfig host;
  WorkloadSpec workload;
  double warmup_margin_us = 1000.0;
  double drain_ms = 5.0;
  std::uint32_t held_delay_bins = 20;

  std::size_t total_streams() const { return std::size_t{workload.streams_per_app} * workload.apps.size(); }

  void validate() const {
    if (version != kScenarioVersion)
      throw std::invalid_argument("unsupported scenario version " + std::to_string(version));
    topology.validate();
    nic.validate(topology.num_cores());
    flow_table.validate();
    host::HostConfig h = host;
    h.topology = topology;
    h.validate();
    const auto& w = workload;
    if (w.apps.empty()) throw std::invalid_argument("workload needs at least one app");
    if (w.streams_per_app == 0) throw std::invalid_argument("stream count must be > 0");
    for (const auto& a : w.apps) {
      if (a.cores.empty()) throw std::invalid_argument("app on port " + std::to_string(a.port) + " has no cores");
      for (auto c : a.cores)
        if (c >= topology.num_cores())
          throw std::invalid_argument("app on port " + std::to_string(a.port) + " names a missing core");
      if (!(a.think_us >= 0.0)) throw std::invalid_argument("think_us must be >= 0");
    }
    if (w.packet_bytes == 0) throw std::invalid_argument("packet_bytes must be > 0");
    if (!(w.link_gbps > 0.0)) throw std::invalid_argument("link_gbps must be > 0");
    if (!(w.load_fraction > 0.0)) throw std::invalid_argument("load_fraction must be > 0");
    if (!(w.stream_pps >= 0.0)) throw std::invalid_argument("stream_pps must be >= 0");
    if (w.burst == 0) throw std::invalid_argument("burst must be >= 1");
    time::from_us(w.duration_ms * 1e3);
    time::from_us(w.link_latency_us);
    time::from_us(w.handshake_spacing_us);
    time::from_us(warmup_margin_us);
    time::from_us(drain_ms * 1e3);
    time::from_us(aging_interval_ms * 1e3);
    IpAddress::parse_v4(w.sender_addr);
    IpAddress::parse_v4(w.receiver_addr);
    if (!w.script.empty() && w.script != "fig8")
      throw std::invalid_argument("unknown workload script: " + w.script);
    if (w.script == "fig8" && (nic.num_queues() < 2 || nic.mode != nic::Mode::Atfn))
      throw std::invalid_argument("fig8 script needs two queues in atfn mode");
    if (held_delay_bins == 0) throw std::invalid_argument("held_delay_bins must be >= 1");
    build_rss_config().validate();
  }

  rss::RssConfig build_rss_config() const {
    rss::RssConfig c;
    c.hash_type = rss.hash_type;
    c.key = rss.key_hex.empty() ? rss::RssKey::verification_key() : rss::RssKey::from_hex(rss.key_hex);
    c.mode = rss.lookup;
    c.num_queues = nic.num_queues();
    if (rss.indirection_table.empty()) {
      std::size_t size = 1;
      while (size < std::size_t{4} * c.num_queues) size <<= 1;
      c.table = rss::IndirectionTable::round_robin(size, c.num_queues);
    } else {
      c.table = rss::IndirectionTable(rss.indirection_table);
    }
    return c;
  }

  host::HostConfig build_host_config() const {
    host::HostConfig h = host;
    h.topology = topology;
    return h;
  }

  Duration duration() const { return time::from_us(workload.duration_ms * 1e3); }
};

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) throw std::invalid_argument(std::string(where) + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw std::invalid_argument(std::string("unknown key '") + it.key() + "' in " + where);
  }
}

template <class T>
void get_opt(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

inline std::vector<std::string> hash_fields_to_list(const rss::HashType& h) {
  std::vector<std::string> v;
  if (h.src_addr) v.push_back("src_addr");
  if (h.dst_addr) v.push_back("dst_addr");
  if (h.src_port) v.push_back("src_port");
  if (h.dst_port) v.push_back("dst_port");
  if (h.protocol) v.push_back("protocol");
  return v;
}

inline rss::HashType hash_fields_from_list(const std::vector<std::string>& v) {
  rss::HashType h{false, false, false, false, false};
  for (const auto& f : v) {
    if (f == "src_addr") h.src_addr = true;
    else if (f == "dst_addr") h.dst_addr = true;
    else if (f == "src_port") h.src_port = true;
    else if (f == "dst_port") h.dst_port = true;
    else if (f == "protocol") h.protocol = true;
    else throw std::invalid_argument("unknown hash field: " + f);
  }
  return h;
}

inline std::vector<std::string> bucket_fields_to_list(const ftable::BucketFields& b) {
  std::vector<std::string> v;
  if (b.addresses) v.push_back("addresses");
  if (b.ports) v.push_back("ports");
  if (b.protocol) v.push_back("protocol");
  return v;
}

inline ftable::BucketFields bucket_fields_from_list(const std::vector<std::string>& v) {
  ftable::BucketFields b{false, false, false};
  for (const auto& f : v) {
    if (f == "addresses") b.addresses = true;
    else if (f == "ports") b.ports = true;
    else if (f == "protocol") b.protocol = true;
    else throw std::invalid_argument("unknown bucket field: " + f);
  }
  return b;
}

inline double ns_to_us(Duration d) { return static_cast<double>(d) / 1e3; }
inline double ns_to_ms(Duration d) { return static_cast<double>(d) / 1e6; }

}  // namespace detail

inline json to_json(const Scenario& s) {
  using namespace detail;
  json apps = json::array();
  for (const auto& a : s.workload.apps)
    apps.push_back({{"port", a.port}, {"cores", a.cores}, {"think_us", a.think_us}, {"reads", a.reads}});
  const auto& w = s.workload;
  const auto& ft = s.flow_table;
  const auto& sc = s.host.scheduler;
  return json{
      {"version", s.version},
      {"name", s.name},
      {"seed", s.seed},
      {"topology", {{"processors", s.topology.processors}, {"cores_per_processor", s.topology.cores_per_processor}}},
      {"nic",
       {{"mode", nic::to_string(s.nic.mode)},
        {"queue_core", s.nic.queue_core},
        {"ring_capacity", s.nic.ring_capacity},
        {"latency_accounting", s.nic.latency_accounting},
        {"irq_delay_us", ns_to_us(s.nic.irq_delay)},
        {"rss",
         {{"lookup", s.rss.lookup == rss::LookupMode::Indirection ? "indirection" : "direct"},
          {"indirection_table", s.rss.indirection_table},
          {"key", s.rss.key_hex},
          {"hash_fields", hash_fields_to_list(s.rss.hash_type)}}}}},
      {"flow_table",
       {{"num_buckets", ft.num_buckets},
        {"max_list_size", ft.max_list_size},
        {"max_entries", ft.max_entries},
        {"t_timer_us", ns_to_us(ft.t_timer)},
        {"t_delete_ms", ns_to_ms(ft.t_delete)},
        {"t_delete_pressure_ms", ns_to_ms(ft.t_delete_pressure)},
        {"pressure_threshold", ft.pressure_threshold},
        {"bucket_fields", bucket_fields_to_list(ft.bucket_fields)},
        {"aging_interval_ms", s.aging_interval_ms}}},
      {"host",
       {{"service_pps", s.host.service_pps},
        {"ack_every", s.host.ack_every},
        {"defer_cost", s.host.defer_cost},
        {"scheduler",
         {{"mode", host::to_string(sc.kind)},
          {"tick_us", ns_to_us(sc.tick)},
          {"perturb_probability", sc.perturb_probability},
          {"partition", sc.partition}}}}},
      {"workload",
       {{"streams_per_app", w.streams_per_app},
        {"apps", apps},
        {"packet_bytes", w.packet_bytes},
        {"link_gbps", w.link_gbps},
        {"load_fraction", w.load_fraction},
        {"stream_pps", w.stream_pps},
        {"burst", w.burst},
        {"duration_ms", w.duration_ms},
        {"link_latency_us", w.link_latency_us},
        {"handshake_spacing_us", w.handshake_spacing_us},
        {"sender_addr", w.sender_addr},
        {"receiver_addr", w.receiver_addr},
        {"distinct_sender_addrs", w.distinct_sender_addrs},
        {"port_mode", w.port_mode == PortMode::Sequential ? "sequential" : "random"},
        {"port_base", w.port_base},
        {"script", w.script}}},
      {"metrics",
       {{"warmup_margin_us", s.warmup_margin_us},
        {"drain_ms", s.drain_ms},
        {"held_delay_bins", s.held_delay_bins}}},
  };
}

// Missing keys keep their defaults; unknown keys are errors.
inline Scenario from_json(const json& j) {
  using namespace detail;
  check_keys(j, {"version", "name", "seed", "topology", "nic", "flow_table", "host", "workload", "metrics"},
             "scenario");
  Scenario s;
  get_opt(j, "version", s.version);
  if (s.version != kScenarioVersion)
    throw std::invalid_argument("unsupported scenario version " + std::to_string(s.version));
  get_opt(j, "name", s.name);
  get_opt(j, "seed", s.seed);

  if (auto it = j.find("topology"); it != j.end()) {
    check_keys(*it, {"processors", "cores_per_processor"}, "topology");
    get_opt(*it, "processors", s.topology.processors);
    get_opt(*it, "cores_per_processor", s.topology.cores_per_processor);
  }

  if (auto it = j.find("nic"); it != j.end()) {
    const auto& n = *it;
    check_keys(n, {"mode", "queue_core", "ring_capacity", "latency_accounting", "irq_delay_us", "rss"}, "nic");
    if (n.contains("mode")) s.nic.mode = nic::parse_mode(n.at("mode").get<std::string>());
    if (n.contains("queue_core")) {
      s.nic.queue_core.clear();
      for (int c : n.at("queue_core").get<std::vector<int>>()) {
        if (c < 0 || c >= static_cast<int>(kMaxCores)) throw std::invalid_argument("queue_core out of range");
        s.nic.queue_core.push_back(static_cast<CoreId>(c));
      }
    }
    get_opt(n, "ring_capacity", s.nic.ring_capacity);
    get_opt(n, "latency_accounting", s.nic.latency_accounting);
    if (n.contains("irq_delay_us")) s.nic.irq_delay = time::from_us(n.at("irq_delay_us").get<double>());
    if (auto r = n.find("rss"); r != n.end()) {
      check_keys(*r, {"lookup", "indirection_table", "key", "hash_fields"}, "nic.rss");
      if (r->contains("lookup")) {
        const auto l = r->at("lookup").get<std::string>();
        if (l == "indirection") s.rss.lookup = rss::LookupMode::Indirection;
        else if (l == "direct") s.rss.lookup = rss::LookupMode::DirectMap;
        else throw std::invalid_argument("unknown rss lookup: " + l);
      }
      get_opt(*r, "indirection_table", s.rss.indirection_table);
      get_opt(*r, "key", s.rss.key_hex);
      if (r->contains("hash_fields"))
        s.rss.hash_type = hash_fields_from_list(r->at("hash_fields").get<std::vector<std::string>>());
    }
  }

  if (auto it = j.find("flow_table"); it != j.end()) {
    const auto& f = *it;
    check_keys(f, {"num_buckets", "max_list_size", "max_entries", "t_timer_us", "t_delete_ms",
                   "t_delete_pressure_ms", "pressure_threshold", "bucket_fields", "aging_interval_ms"},
               "flow_table");
    auto& ft = s.flow_table;
    get_opt(f, "num_buckets", ft.num_buckets);
    get_opt(f, "max_list_size", ft.max_list_size);
    get_opt(f, "max_entries", ft.max_entries);
    if (f.contains("t_timer_us")) ft.t_timer = time::from_us(f.at("t_timer_us").get<double>());
    if (f.contains("t_delete_ms")) ft.t_delete = time::from_us(f.at("t_delete_ms").get<double>() * 1e3);
    if (f.contains("t_delete_pressure_ms"))
      ft.t_delete_pressure = time::from_us(f.at("t_delete_pressure_ms").get<double>() * 1e3);
    get_opt(f, "pressure_threshold", ft.pressure_threshold);
    if (f.contains("bucket_fields"))
      ft.bucket_fields = bucket_fields_from_list(f.at("bucket_fields").get<std::vector<std::string>>());
    get_opt(f, "aging_interval_ms", s.aging_interval_ms);
  }

  if (auto it = j.find("host"); it != j.end()) {
    const auto& h = *it;
    check_keys(h, {"service_pps", "defer_cost", "ack_every", "scheduler"}, "host");
    get_opt(h, "service_pps", s.host.service_pps);
    get_opt(h, "defer_cost", s.host.defer_cost);
    get_opt(h, "ack_every", s.host.ack_every);
    if (auto sc = h.find("scheduler"); sc != h.end()) {
      check_keys(*sc, {"mode", "tick_us", "perturb_probability", "partition"}, "host.scheduler");
      auto& m = s.host.scheduler;
      if (sc->contains("mode")) m.kind = host::parse_scheduler(sc->at("mode").get<std::string>());
      if (sc->contains("tick_us")) m.tick = time::from_us(sc->at("tick_us").get<double>());
      get_opt(*sc, "perturb_probability", m.perturb_probability);
      get_opt(*sc, "partition", m.partition);
    }
  }

  if (auto it = j.find("workload"); it != j.end()) {
    const auto& w = *it;
    check_keys(w, {"streams_per_app", "apps", "packet_bytes", "link_gbps", "load_fraction", "stream_pps",
                   "burst", "duration_ms", "link_latency_us", "handshake_spacing_us", "sender_addr",
                   "receiver_addr", "distinct_sender_addrs", "port_mode", "port_base", "script"},
               "workload");
    auto& ws = s.workload;
    get_opt(w, "streams_per_app", ws.streams_per_app);
    if (w.contains("apps")) {
      ws.apps.clear();
      for (const auto& a : w.at("apps")) {
        check_keys(a, {"port", "cores", "think_us", "reads"}, "workload.apps[]");
        AppSpec app;
        get_opt(a, "port", app.port);
        get_opt(a, "cores", app.cores);
        get_opt(a, "think_us", app.think_us);
        get_opt(a, "reads", app.reads);
        ws.apps.push_back(std::move(app));
      }
    }
    get_opt(w, "packet_bytes", ws.packet_bytes);
    get_opt(w, "link_gbps", ws.link_gbps);
    get_opt(w, "load_fraction", ws.load_fraction);
    get_opt(w, "stream_pps", ws.stream_pps);
    get_opt(w, "burst", ws.burst);
    get_opt(w, "duration_ms", ws.duration_ms);
    get_opt(w, "link_latency_us", ws.link_latency_us);
    get_opt(w, "handshake_spacing_us", ws.handshake_spacing_us);
    get_opt(w, "sender_addr", ws.sender_addr);
    get_opt(w, "receiver_addr", ws.receiver_addr);
    get_opt(w, "distinct_sender_addrs", ws.distinct_sender_addrs);
    if (w.contains("port_mode")) {
      const auto m = w.at("port_mode").get<std::string>();
      if (m == "sequential") ws.port_mode = PortMode::Sequential;
      else if (m == "random") ws.port_mode = PortMode::Random;
      else throw std::invalid_argument("unknown port_mode: " + m);
    }
    get_opt(w, "port_base", ws.port_base);
    get_opt(w, "script", ws.script);
  }

  if (auto it = j.find("metrics"); it != j.end()) {
    check_keys(*it, {"warmup_margin_us", "drain_ms", "held_delay_bins"}, "metrics");
    get_opt(*it, "warmup_margin_us", s.warmup_margin_us);
    get_opt(*it, "drain_ms", s.drain_ms);
    get_opt(*it, "held_delay_bins", s.held_delay_bins);
  }
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read scenario file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("scenario " + path + " is not valid JSON: " + e.what());
  }
  try {
    return from_json(j);
  } catch (const json::exception& e) {
    throw std::invalid_argument("scenario " + path + ": " + e.what());
  }
}

inline std::string dump_scenario(const Scenario& s) { return to_json(s).dump(2) + "\n"; }

// FNV-1a over the canonical JSON with the knobs a comparison is allowed to
// vary (NIC mode, flow table, seed) removed.
inline std::string scenario_hash(const Scenario& s) {
  json j = to_json(s);
  j.erase("seed");
  j.erase("name");
  j.erase("flow_table");
  j["nic"].erase("mode");
  const std::string text = j.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct Stream {
  FlowId flow = 0;
  FlowKey key;  // receive direction: sender -> receiver
  std::size_t app = 0;
  SimTime syn_at = 0;
};

// Streams are interleaved over apps the way concurrent clients would open
// them; each gets a distinct ephemeral source port.
inline std::vector<Stream> spawn_streams(const Scenario& s, Rng& rng) {
  const auto& w = s.workload;
  const std::size_t total = s.total_streams();
  const std::size_t span = 65536 - std::size_t{w.port_base};
  if (total > span)
    throw std::invalid_argument("not enough ephemeral ports above " + std::to_string(w.port_base) + " for " +
                                std::to_string(total) + " streams");
  std::vector<std::uint16_t> ports;
  ports.reserve(total);
  if (w.port_mode == PortMode::Sequential) {
    for (std::size_t i = 0; i < total; ++i) ports.push_back(static_cast<std::uint16_t>(w.port_base + i));
  } else {
    std::set<std::uint16_t> used;
    while (ports.size() < total) {
      auto p = static_cast<std::uint16_t>(w.port_base + rng.uniform(span));
      if (used.insert(p).second) ports.push_back(p);
    }
  }
  std::set<std::pair<std::uint32_t, std::uint16_t>> seen;
  const auto sender = IpAddress::parse_v4(w.sender_addr);
  const auto receiver = IpAddress::parse_v4(w.receiver_addr);
  const Duration spacing = time::from_us(w.handshake_spacing_us);
  std::vector<Stream> out;
  out.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    Stream st;
    st.flow = static_cast<FlowId>(i);
    st.app = i % w.apps.size();
    st.key.src_addr = w.distinct_sender_addrs
                          ? IpAddress::v4(static_cast<std::uint32_t>(
                                (std::uint32_t{sender.bytes[0]} << 24 | std::uint32_t{sender.bytes[1]} << 16) + i + 1))
                          : sender;
    st.key.dst_addr = receiver;
    st.key.protocol = kProtoTcp;
    st.key.src_port = ports[i];
    st.key.dst_port = w.apps[st.app].port;
    st.syn_at = spacing * i;
    std::uint32_t addr = 0;
    for (int b = 0; b < 4; ++b) addr = addr << 8 | st.key.src_addr.bytes[b];
    if (!seen.emplace(addr, st.key.src_port).second)
      throw std::invalid_argument("duplicate port assignment for stream " + std::to_string(i));
    out.push_back(st);
  }
  return out;
}

// Per-stream packet rate: explicit, or the link's packet capacity times
// load_fraction split equally.
inline double stream_rate_pps(const Scenario& s) {
  const auto& w = s.workload;
  if (w.stream_pps > 0.0) return w.stream_pps;
  const double link_pps = w.link_gbps * 1e9 / (8.0 * w.packet_bytes);
  return w.load_fraction * link_pps / static_cast<double>(s.total_streams());
}

// Sending host plus the wire. Forward packets share one serializer at the
// link rate, then a constant propagation latency. Data goes in bursts of
// `burst` back-to-back packets with jittered gaps whose mean matches the
// stream rate.
class Sender {
 public:
  using Deliver = std::function<void(Packet)>;

  Sender(Kernel& kernel, const Scenario& s, std::vector<Stream> streams, Rng rng, Deliver deliver)
      : kernel_(kernel),
        w_(s.workload),
        streams_(std::move(streams)),
        rng_(rng),
        deliver_(std::move(deliver)),
        latency_(time::from_us(w_.link_latency_us)),
        wire_(time::wire_time(w_.packet_bytes, w_.link_gbps)),
        control_wire_(time::wire_time(64, w_.link_gbps)),
        end_(s.duration()),
        flows_(streams_.size()) {
    const double pps = stream_rate_pps(s);
    burst_gap_ns_ = 1e9 * w_.burst / pps;
  }

  void start() {
    for (const auto& st : streams_) {
      kernel_.schedule(st.syn_at, [this, f = st.flow] { send_control(f, PacketKind::Syn); });
    }
  }

  // Receiver -> sender direction, already past the receiver NIC.
  void on_receiver_packet(const Packet& p) {
    kernel_.schedule_in(latency_, [this, p] {
      if (p.flow >= flows_.size()) return;
      auto& f = flows_[p.flow];
      if (p.kind == PacketKind::SynAck && !f.established) {
        f.established = true;
        send_control(p.flow, PacketKind::Ack);
        const auto first = static_cast<Duration>(rng_.uniform01() * burst_gap_ns_);
        schedule_burst(p.flow, kernel_.now() + first);
      } else if (p.kind == PacketKind::Ack) {
        ++acks_received_;
      }
    });
  }

  std::uint64_t data_sent() const {
    std::uint64_t n = 0;
    for (const auto& f : flows_) n += f.next_seq;
    return n;
  }
  std::uint64_t data_sent(FlowId f) const { return flows_.at(f).next_seq; }
  std::uint64_t acks_received() const noexcept { return acks_received_; }
  const std::vector<Stream>& streams() const noexcept { return streams_; }
  Duration wire_ns() const noexcept { return wire_; }

 private:
  struct FlowState {
    bool established = false;
    std::uint64_t next_seq = 0;
  };

  void send_control(FlowId f, PacketKind kind) {
    Packet p;
    p.key = streams_[f].key;
    p.direction = Direction::Rx;
    p.kind = kind;
    p.bytes = 64;
    p.flow = f;
    emit(std::move(p), control_wire_);
  }

  void schedule_burst(FlowId f, SimTime at) {
    if (at >= end_) return;
    kernel_.schedule(at, [this, f] {
      for (std::uint32_t i = 0; i < w_.burst; ++i) {
        Packet p;
        p.key = streams_[f].key;
        p.direction = Direction::Rx;
        p.kind = PacketKind::Data;
        p.bytes = w_.packet_bytes;
        p.flow = f;
        p.seq = flows_[f].next_seq++;
        emit(std::move(p), wire_);
      }
      const auto gap = static_cast<Duration>(burst_gap_ns_ * (0.5 + rng_.uniform01()));
      schedule_burst(f, kernel_.now() + std::max<Duration>(gap, 1));
    });
  }

  void emit(Packet p, Duration wire) {
    const SimTime depart = std::max(kernel_.now(), link_free_) + wire;
    link_free_ = depart;
    kernel_.schedule(depart + latency_, [this, p = std::move(p)]() mutable { deliver_(std::move(p)); });
  }

  Kernel& kernel_;
  WorkloadSpec w_;
  std::vector<Stream> streams_;
  Rng rng_;
  Deliver deliver_;
  Duration latency_;
  Duration wire_;
  Duration control_wire_;
  SimTime end_;
  double burst_gap_ns_ = 0.0;
  SimTime link_free_ = 0;
  std::vector<FlowState> flows_;
  std::uint64_t acks_received_ = 0;
};

// Worst-case migration from the reordering analysis. The old queue holds
// D-1 packets of other flows plus the victim's packet S; the descriptor
// naming the new core lands one tick later, and S+1 one tick after that.
struct ScriptStep {
  SimTime at = 0;
  bool transmit = false;  // true: a receiver-side transmit with `core` in the descriptor
  Packet packet;
  CoreId core = 0;
};

struct Fig8Script {
  std::size_t depth = 0;
  Duration service_ns = 0;
  SimTime migrate_at = 0;  // T
  QueueId old_queue = 0;
  CoreId new_core = 1;
  FlowId victim = 0;
  FlowKey victim_key;
  std::uint64_t seq_s = 0;
  std::vector<FlowKey> filler_keys;  // flows 1..k, UDP
  std::vector<ScriptStep> steps;

  // Smallest hold that keeps S+1 behind S: (D-1) service intervals.
  Duration safe_t_timer() const { return static_cast<Duration>(depth - 1) * service_ns; }
};

inline Fig8Script adversarial_fig8_schedule(std::size_t depth, double service_pps, const rss::Classifier& cls,
                                            QueueId old_queue = 0, CoreId new_core = 1,
                                            std::size_t filler_flows = 4) {
  if (depth < 2) throw std::invalid_argument("ring depth must be >= 2");
  if (filler_flows == 0) throw std::invalid_argument("need at least one filler flow");
  Fig8Script s;
  s.depth = depth;
  s.service_ns = time::service_interval(service_pps);
  s.old_queue = old_queue;
  s.new_core = new_core;

  const auto sender = IpAddress::v4(10, 0, 0, 1);
  const auto receiver = IpAddress::v4(10, 0, 0, 2);
  auto find_key = [&](std::uint8_t proto, std::uint16_t dport, std::uint16_t& next_port) {
    for (; next_port != 0; ++next_port) {
      FlowKey k{sender, receiver, proto, next_port, dport};
      if (cls.queue_for(k) == old_queue) {
        ++next_port;
        return k;
      }
    }
    throw std::runtime_error("no port maps to the old queue");
  };
  std::uint16_t port = 32768;
  s.victim_key = find_key(kProtoTcp, 5001, port);
  for (std::size_t i = 0; i < filler_flows; ++i) s.filler_keys.push_back(find_key(kProtoUdp, 7000, port));

  auto rx = [&s](SimTime at, const FlowKey& k, FlowId flow, PacketKind kind, std::uint64_t seq,
                 std::uint32_t bytes) {
    Packet p;
    p.key = k;
    p.direction = Direction::Rx;
    p.kind = kind;
    p.seq = seq;
    p.bytes = bytes;
    p.flow = flow;
    s.steps.push_back(ScriptStep{at, false, p, 0});
  };

  // Handshake; the host answers the SYN from the old queue's core.
  rx(time::us(1), s.victim_key, 0, PacketKind::Syn, 0, 64);
  rx(time::us(10), s.victim_key, 0, PacketKind::Ack, 0, 64);
  // A few in-order packets before the squeeze.
  s.seq_s = 4;
  for (std::uint64_t i = 0; i < s.seq_s; ++i)
    rx(time::us(20) + time::us(2) * i, s.victim_key, 0, PacketKind::Data, i, 1500);

  // T sits well past the warm packets' drain.
  const SimTime t = time::us(100) + s.service_ns * depth;
  s.migrate_at = t;
  std::vector<std::uint64_t> filler_seq(filler_flows, 0);
  for (std::size_t i = 0; i + 1 < depth; ++i) {
    const std::size_t f = i % filler_flows;
    rx(t - 1, s.filler_keys[f], static_cast<FlowId>(f + 1), PacketKind::Data, filler_seq[f]++, 1500);
  }
  rx(t - 1, s.victim_key, 0, PacketKind::Data, s.seq_s, 1500);

  Packet ack;
  ack.key = reverse_key(s.victim_key);
  ack.direction = Direction::Tx;
  ack.kind = PacketKind::Ack;
  ack.bytes = 64;
  ack.flow = 0;
  s.steps.push_back(ScriptStep{t, true, ack, new_core});

  rx(t + 1, s.victim_key, 0, PacketKind::Data, s.seq_s + 1, 1500);
  return s;
}

}  // namespace atfn::workload
