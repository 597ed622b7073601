#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "atfn/nic_model.hpp"
#include "atfn/packet.hpp"
#include "atfn/sim_kernel.hpp"

namespace atfn::host {

using Pid = std::uint32_t;

// Processors are numbered consecutively; processor p owns cores
// [p * cores_per_processor, (p + 1) * cores_per_processor).
struct Topology {
  std::size_t processors = 2;
  std::size_t cores_per_processor = 2;

  std::size_t num_cores() const noexcept { return processors * cores_per_processor; }
  std::size_t processor_of(CoreId c) const noexcept { return c / cores_per_processor; }
  bool same_processor(CoreId a, CoreId b) const noexcept { return processor_of(a) == processor_of(b); }

  void validate() const {
    if (processors == 0 || cores_per_processor == 0)
      throw std::invalid_argument("topology needs at least one core");
    if (num_cores() > kMaxCores)
      throw std::invalid_argument("at most 256 cores fit a one-byte core id");
  }
};

enum class Context : std::uint8_t { Interrupt, Process };

inline const char* to_string(Context c) { return c == Context::Interrupt ? "interrupt" : "process"; }

// One data packet handed to TCP, in either context.
struct Delivery {
  FlowId flow = 0;
  std::uint64_t seq = 0;
  SimTime at = 0;
  CoreId core = 0;      // where TCP processing ran
  CoreId app_core = 0;  // where the consuming process was at that moment
  Context context = Context::Interrupt;
};

struct Migration {
  SimTime at = 0;
  Pid pid = 0;
  CoreId from = 0;
  CoreId to = 0;
};

enum class SchedulerKind : std::uint8_t { Pinned, PeakPerformance, PowerSaving, Cpuset };

inline const char* to_string(SchedulerKind k) {
  switch (k) {
    case SchedulerKind::Pinned: return "pinned";
    case SchedulerKind::PeakPerformance: return "peak_performance";
    case SchedulerKind::PowerSaving: return "power_saving";
    case SchedulerKind::Cpuset: return "cpuset";
  }
  return "?";
}

inline SchedulerKind parse_scheduler(const std::string& s) {
  if (s == "pinned") return SchedulerKind::Pinned;
  if (s == "peak_performance") return SchedulerKind::PeakPerformance;
  if (s == "power_saving") return SchedulerKind::PowerSaving;
  if (s == "cpuset") return SchedulerKind::Cpuset;
  throw std::invalid_argument("unknown scheduler mode: " + s);
}

struct SchedulerMode {
  SchedulerKind kind = SchedulerKind::Pinned;
  Duration tick = time::ms(4);
  // PEAK_PERFORMANCE: chance per tick that one free process is nudged to
  // a random allowed core before balancing (wake-up placement noise).
  double perturb_probability = 0.0;
  std::vector<CoreId> partition;  // CPUSET only
};

struct HostConfig {
  Topology topology;
  double service_pps = 3e6;
  // Softnet time for a packet deferred to the socket backlog (the stack
  // below TCP), as a fraction of the service interval.
  double defer_cost = 0.5;
  std::uint32_t ack_every = 2;
  SchedulerMode scheduler;

  void validate() const {
    topology.validate();
    if (!(service_pps > 0.0)) throw std::invalid_argument("service rate must be positive");
    if (ack_every == 0) throw std::invalid_argument("ack_every must be >= 1");
    if (!(defer_cost >= 0.0 && defer_cost <= 1.0)) throw std::invalid_argument("defer_cost must be in [0, 1]");
    for (auto c : scheduler.partition)
      if (c >= topology.num_cores()) throw std::invalid_argument("cpuset names a missing core");
    if (scheduler.kind == SchedulerKind::Cpuset && scheduler.partition.empty())
      throw std::invalid_argument("cpuset scheduler needs a partition");
    if (scheduler.kind != SchedulerKind::Pinned && scheduler.tick == 0)
      throw std::invalid_argument("scheduler tick must be positive");
  }
};

// One receiving thread with its socket. Free processes may run on any of
// `allowed`; a single allowed core means pinned.
struct AppProcess {
  Pid pid = 0;
  CoreId core = 0;
  std::vector<CoreId> allowed;
  double think_ns = 0.0;  // mean gap between returning from recv and the next call
  bool reads = true;      // false: never enters recv, all processing stays in interrupt context

  bool pinned() const noexcept { return allowed.size() == 1; }
  bool may_run_on(CoreId c) const {
    return std::find(allowed.begin(), allowed.end(), c) != allowed.end();
  }
};

struct SocketModel {
  FlowKey key;  // receive direction
  FlowId flow = 0;
  Pid owner = 0;
  bool owned_by_user = false;
  std::deque<Packet> backlog;  // backlog and prequeue merged
  std::uint64_t unread = 0;    // processed in interrupt context, not yet read
  std::uint32_t ack_counter = 0;
};

struct HostCounters {
  std::uint64_t delivered_interrupt = 0;
  std::uint64_t delivered_process = 0;
  std::uint64_t deferred = 0;
  std::uint64_t owned_deferrals = 0;      // arrivals that found owned_by_user
  std::uint64_t lock_conflicts = 0;       // ... with the owner running on another core
  std::uint64_t lock_conflicts_cross_processor = 0;
  std::uint64_t syscalls = 0;
  std::uint64_t acks_sent = 0;
  std::uint64_t control_packets = 0;
  std::uint64_t busy_ns = 0;
};

struct ContentionProxies {
  std::uint64_t cross_core_packets = 0;
  std::uint64_t cross_processor_packets = 0;
  std::uint64_t alternations = 0;
  std::uint64_t lock_conflict_events = 0;
  std::uint64_t cross_processor_conflicts = 0;
  std::uint64_t migrations = 0;
};

// Simulator-level stand-ins for hardware contention counters. Deliveries
// before `warmup_end[flow]` are skipped when warmup_end is non-empty.
inline ContentionProxies contention_proxy(std::span<const Delivery> log,
                                          std::span<const Migration> migrations,
                                          const HostCounters& counters, const Topology& topo,
                                          std::span<const SimTime> warmup_end = {}) {
  ContentionProxies out;
  std::unordered_map<FlowId, CoreId> last_core;
  for (const auto& d : log) {
    if (!warmup_end.empty() && d.flow < warmup_end.size() && d.at < warmup_end[d.flow]) continue;
    if (d.core != d.app_core) {
      ++out.cross_core_packets;
      if (!topo.same_processor(d.core, d.app_core)) ++out.cross_processor_packets;
    }
    auto [it, fresh] = last_core.try_emplace(d.flow, d.core);
    if (!fresh) {
      if (it->second != d.core) ++out.alternations;
      it->second = d.core;
    }
  }
  out.lock_conflict_events = counters.lock_conflicts;
  out.cross_processor_conflicts = counters.lock_conflicts_cross_processor;
  out.migrations = migrations.size();
  return out;
}

// Multicore receiver. Each core is a serial executor: softnet (interrupt
// context) has priority and preempts process-context work at packet
// boundaries; receive syscalls drain the socket backlog one packet per
// service interval.
class Host {
 public:
  Host(Kernel& kernel, nic::Nic& nic, HostConfig cfg, Rng rng)
      : kernel_(kernel), nic_(nic), cfg_(std::move(cfg)), rng_(rng),
        service_ns_(time::service_interval(cfg_.service_pps)),
        defer_ns_(static_cast<Duration>(std::llround(static_cast<double>(service_ns_) * cfg_.defer_cost))),
        cores_(cfg_.topology.num_cores()) {
    cfg_.validate();
    for (QueueId q = 0; q < nic_.config().num_queues(); ++q)
      cores_[nic_.config().queue_core[q]].queue = q;
    nic_.set_interrupt_handler([this](CoreId c, QueueId q) { on_interrupt(c, q); });
  }

  Host(const Host&) = delete;
  Host& operator=(const Host&) = delete;

  Pid add_process(AppProcess proc) {
    if (proc.allowed.empty()) proc.allowed.push_back(proc.core);
    for (auto c : proc.allowed)
      if (c >= cores_.size()) throw std::invalid_argument("process allowed on a missing core");
    if (!proc.may_run_on(proc.core)) proc.core = proc.allowed.front();
    proc.pid = static_cast<Pid>(procs_.size());
    procs_.push_back(ProcState{proc});
    return proc.pid;
  }

  // Binds the socket for receive-direction `key` to `owner`.
  void add_socket(FlowId flow, const FlowKey& key, Pid owner) {
    if (owner >= procs_.size()) throw std::invalid_argument("socket owner does not exist");
    if (flow >= sockets_.size()) sockets_.resize(flow + 1);
    auto& s = sockets_[flow];
    if (s) throw std::invalid_argument("socket already bound for flow " + std::to_string(flow));
    s = SocketModel{key, flow, owner};
    procs_[owner].sockets.push_back(flow);
  }

  // Starts receive loops and the scheduler. Call once before running.
  void start() {
    for (auto& p : procs_)
      if (p.spec.reads) enter_recv(p.spec.pid);
    if (cfg_.scheduler.kind != SchedulerKind::Pinned) schedule_tick();
  }

  // NIC interrupt for `queue` on `core`: softnet runs until the ring is empty.
  void on_interrupt(CoreId core, QueueId queue) {
    auto& c = cores_.at(core);
    if (!c.queue || *c.queue != queue) throw std::logic_error("interrupt routed to wrong core");
    c.softnet_pending = true;
    dispatch(core);
  }

  // Migrates now; used by the scheduler and by tests.
  void migrate(Pid pid, CoreId to) {
    auto& p = procs_.at(pid);
    if (to >= cores_.size()) throw std::invalid_argument("migration to a missing core");
    const CoreId from = p.spec.core;
    if (from == to) return;
    migrations_.push_back(Migration{kernel_.now(), pid, from, to});
    if (p.running) {
      p.pending_core = to;
      return;
    }
    p.spec.core = to;
    if (p.runnable) {
      auto& rq = cores_[from].runnable;
      rq.erase(std::find(rq.begin(), rq.end(), pid));
      cores_[to].runnable.push_back(pid);
      dispatch(to);
    }
  }

  // One scheduler pass. Returns the migrations it performed.
  std::vector<Migration> scheduler_tick() {
    const std::size_t before = migrations_.size();
    switch (cfg_.scheduler.kind) {
      case SchedulerKind::Pinned:
        break;
      case SchedulerKind::PeakPerformance:
        perturb();
        balance(nullptr);
        break;
      case SchedulerKind::PowerSaving:
        consolidate();
        break;
      case SchedulerKind::Cpuset:
        enforce_partition();
        balance(&cfg_.scheduler.partition);
        break;
    }
    return {migrations_.begin() + static_cast<long>(before), migrations_.end()};
  }

  // Forces an immediate receive call by `pid` (tests, scripted runs).
  void syscall_receive(Pid pid) {
    auto& p = procs_.at(pid);
    p.in_recv = true;
    make_runnable(pid);
  }

  const std::vector<Delivery>& delivered_log() const noexcept { return log_; }
  const std::vector<Migration>& migrations() const noexcept { return migrations_; }
  const HostCounters& counters() const noexcept { return counters_; }
  const HostConfig& config() const noexcept { return cfg_; }
  Duration service_ns() const noexcept { return service_ns_; }
  const AppProcess& process(Pid pid) const { return procs_.at(pid).spec; }
  std::size_t num_processes() const noexcept { return procs_.size(); }
  const SocketModel& socket(FlowId flow) const { return *sockets_.at(flow); }
  bool in_recv(Pid pid) const { return procs_.at(pid).in_recv; }
  const std::vector<SimTime>& first_process_ack() const noexcept { return first_process_ack_; }

  std::vector<std::size_t> run_queue_lengths() const {
    std::vector<std::size_t> load(cores_.size(), 0);
    for (const auto& p : procs_) ++load[p.spec.core];
    return load;
  }

  // Test hook: mark a socket owned as if a syscall held it.
  void set_owned(FlowId flow, bool owned) {
    auto& s = *sockets_.at(flow);
    s.owned_by_user = owned;
    procs_.at(s.owner).in_recv = owned || procs_.at(s.owner).in_recv;
  }

 private:
  struct ProcState {
    AppProcess spec;
    std::vector<FlowId> sockets;
    bool in_recv = false;   // inside recv: waiting, runnable, or running
    bool runnable = false;  // queued on a core's run queue
    bool running = false;   // executing a syscall
    std::optional<CoreId> pending_core;
    std::uint64_t consumed_in_call = 0;
  };

  struct CoreState {
    std::optional<QueueId> queue;
    bool busy = false;
    bool softnet_pending = false;
    std::deque<Pid> runnable;
    std::optional<Pid> in_syscall;
    bool dispatching = false;
  };

  void dispatch(CoreId core) {
    auto& c = cores_[core];
    if (c.dispatching) return;  // the active loop below picks up new work
    c.dispatching = true;
    dispatch_loop(core);
    c.dispatching = false;
  }

  void dispatch_loop(CoreId core) {
    auto& c = cores_[core];
    while (!c.busy) {
      if (c.softnet_pending) {
        auto pkt = nic_.drain(*c.queue);
        if (!pkt) {
          c.softnet_pending = false;
          continue;
        }
        softnet_packet(core, std::move(*pkt));
        continue;
      }
      if (c.in_syscall) {
        syscall_step(core, *c.in_syscall);
        continue;
      }
      if (!c.runnable.empty()) {
        const Pid pid = c.runnable.front();
        c.runnable.pop_front();
        auto& p = procs_[pid];
        p.runnable = false;
        p.running = true;
        p.consumed_in_call = 0;
        c.in_syscall = pid;
        ++counters_.syscalls;
        for (FlowId f : p.sockets) sockets_[f]->owned_by_user = true;
        continue;
      }
      return;
    }
  }

  void occupy(CoreId core) { occupy(core, service_ns_); }

  void occupy(CoreId core, Duration d) {
    if (d == 0) return;
    cores_[core].busy = true;
    counters_.busy_ns += d;
    kernel_.schedule_in(d, [this, core] {
      cores_[core].busy = false;
      dispatch(core);
    });
  }

  // Processes one backlogged packet, or ends the call when none is left.
  void syscall_step(CoreId core, Pid pid) {
    auto& p = procs_[pid];
    for (FlowId f : p.sockets) {
      auto& s = *sockets_[f];
      if (s.backlog.empty()) continue;
      Packet pkt = std::move(s.backlog.front());
      s.backlog.pop_front();
      occupy(core);
      deliver(s, pkt, core, Context::Process);
      ++p.consumed_in_call;
      return;
    }
    finish_syscall(core, pid);
  }

  void finish_syscall(CoreId core, Pid pid) {
    auto& p = procs_[pid];
    auto& c = cores_[core];
    c.in_syscall.reset();
    p.running = false;
    std::uint64_t consumed = p.consumed_in_call;
    for (FlowId f : p.sockets) {
      auto& s = *sockets_[f];
      s.owned_by_user = false;
      consumed += s.unread;
      s.unread = 0;
    }
    if (p.pending_core) {
      p.spec.core = *p.pending_core;
      p.pending_core.reset();
    }
    if (consumed == 0) return;  // sleeps in recv until data is deferred to it
    p.in_recv = false;
    const Duration think = rng_.exponential(p.spec.think_ns);
    kernel_.schedule_in(think, [this, pid] { enter_recv(pid); });
  }

  void enter_recv(Pid pid) {
    auto& p = procs_[pid];
    p.in_recv = true;
    bool has_data = false;
    for (FlowId f : p.sockets) {
      const auto& s = *sockets_[f];
      if (!s.backlog.empty() || s.unread > 0) has_data = true;
    }
    if (has_data) make_runnable(pid);
  }

  void make_runnable(Pid pid) {
    auto& p = procs_[pid];
    if (p.runnable || p.running) return;
    p.runnable = true;
    cores_[p.spec.core].runnable.push_back(pid);
    dispatch(p.spec.core);
  }

  // TCP processing costs one service interval wherever it runs; a deferred
  // packet only pays defer_cost in softnet.
  void softnet_packet(CoreId core, Packet pkt) {
    if (pkt.kind != PacketKind::Data) {
      occupy(core);
      ++counters_.control_packets;
      if (pkt.kind == PacketKind::Syn) {
        Packet synack;
        synack.key = reverse_key(pkt.key);
        synack.direction = Direction::Tx;
        synack.kind = PacketKind::SynAck;
        synack.bytes = 64;
        synack.flow = pkt.flow;
        nic_.tx(synack, TransmitDescriptor{synack.key, core}, kernel_.now());
      }
      return;
    }
    if (pkt.flow >= sockets_.size() || !sockets_[pkt.flow])
      throw std::logic_error("data packet for a flow with no socket");
    auto& s = *sockets_[pkt.flow];
    auto& owner = procs_[s.owner];
    if (owner.in_recv) {
      if (s.owned_by_user) {
        ++counters_.owned_deferrals;
        if (owner.running && owner.spec.core != core) {
          ++counters_.lock_conflicts;
          if (!cfg_.topology.same_processor(owner.spec.core, core))
            ++counters_.lock_conflicts_cross_processor;
        }
      }
      ++counters_.deferred;
      occupy(core, defer_ns_);
      s.backlog.push_back(std::move(pkt));
      make_runnable(s.owner);
      return;
    }
    occupy(core);
    deliver(s, pkt, core, Context::Interrupt);
    ++s.unread;
  }

  void deliver(SocketModel& s, const Packet& pkt, CoreId core, Context ctx) {
    const auto& owner = procs_[s.owner];
    log_.push_back(Delivery{s.flow, pkt.seq, kernel_.now(), core, owner.spec.core, ctx});
    if (ctx == Context::Interrupt)
      ++counters_.delivered_interrupt;
    else
      ++counters_.delivered_process;
    if (s.key.protocol == kProtoTcp && ++s.ack_counter >= cfg_.ack_every) {
      s.ack_counter = 0;
      send_ack(s, core, ctx);
    }
  }

  void send_ack(const SocketModel& s, CoreId core, Context ctx) {
    Packet ack;
    ack.key = reverse_key(s.key);
    ack.direction = Direction::Tx;
    ack.kind = PacketKind::Ack;
    ack.bytes = 64;
    ack.flow = s.flow;
    ++counters_.acks_sent;
    if (ctx == Context::Process) {
      if (first_process_ack_.size() <= s.flow) first_process_ack_.resize(s.flow + 1, kNever);
      if (first_process_ack_[s.flow] == kNever) first_process_ack_[s.flow] = kernel_.now();
    }
    nic_.tx(ack, TransmitDescriptor{ack.key, core}, kernel_.now());
  }

  void schedule_tick() {
    kernel_.schedule_in(cfg_.scheduler.tick, [this] {
      scheduler_tick();
      schedule_tick();
    });
  }

  std::optional<CoreId> least_loaded(const std::vector<std::size_t>& load,
                                     const std::vector<CoreId>& candidates) const {
    std::optional<CoreId> best;
    for (auto c : candidates)
      if (!best || load[c] < load[*best] || (load[c] == load[*best] && c < *best)) best = c;
    return best;
  }

  // With perturb_probability per tick, one free process picked at random
  // is nudged to another allowed core; balancing then reacts to it.
  void perturb() {
    const double prob = cfg_.scheduler.perturb_probability;
    if (prob <= 0.0 || !rng_.bernoulli(prob)) return;
    std::vector<Pid> free;
    for (const auto& p : procs_)
      if (!p.spec.pinned()) free.push_back(p.spec.pid);
    if (free.empty()) return;
    auto& p = procs_[free[rng_.uniform(free.size())]];
    std::vector<CoreId> others;
    for (auto c : p.spec.allowed)
      if (c != p.spec.core) others.push_back(c);
    migrate(p.spec.pid, others[rng_.uniform(others.size())]);
  }

  // Moves free processes from the longest to the shortest run queue until
  // no allowed move narrows a gap of two or more. Lowest pid moves first.
  void balance(const std::vector<CoreId>* restrict_to) {
    const std::size_t limit = procs_.size() * cores_.size() + 1;
    for (std::size_t iter = 0; iter < limit; ++iter) {
      auto load = run_queue_lengths();
      std::vector<CoreId> order(cores_.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<CoreId>(i);
      std::stable_sort(order.begin(), order.end(),
                       [&](CoreId a, CoreId b) { return load[a] > load[b]; });
      bool moved = false;
      for (CoreId src : order) {
        for (auto& p : procs_) {
          if (p.spec.core != src || p.spec.pinned() || p.pending_core) continue;
          std::vector<CoreId> cand;
          for (auto c : p.spec.allowed)
            if (!restrict_to || std::find(restrict_to->begin(), restrict_to->end(), c) != restrict_to->end())
              cand.push_back(c);
          auto dst = least_loaded(load, cand);
          if (dst && load[src] >= load[*dst] + 2) {
            migrate(p.spec.pid, *dst);
            moved = true;
            break;
          }
        }
        if (moved) break;
      }
      if (!moved) return;
    }
  }

  void consolidate() {
    auto load = run_queue_lengths();
    for (auto& p : procs_) {
      if (p.spec.pinned() || cfg_.topology.processor_of(p.spec.core) == 0) continue;
      std::vector<CoreId> cand;
      for (auto c : p.spec.allowed)
        if (cfg_.topology.processor_of(c) == 0) cand.push_back(c);
      if (auto dst = least_loaded(load, cand)) {
        --load[p.spec.core];
        ++load[*dst];
        migrate(p.spec.pid, *dst);
      }
    }
  }

  void enforce_partition() {
    const auto& part = cfg_.scheduler.partition;
    auto load = run_queue_lengths();
    for (auto& p : procs_) {
      if (p.spec.pinned()) continue;
      if (std::find(part.begin(), part.end(), p.spec.core) != part.end()) continue;
      if (auto dst = least_loaded(load, part)) {
        --load[p.spec.core];
        ++load[*dst];
        migrate(p.spec.pid, *dst);
      }
    }
  }

  Kernel& kernel_;
  nic::Nic& nic_;
  HostConfig cfg_;
  Rng rng_;
  Duration service_ns_;
  Duration defer_ns_;
  std::vector<CoreState> cores_;
  std::vector<ProcState> procs_;
  std::vector<std::optional<SocketModel>> sockets_;
  std::vector<Delivery> log_;
  std::vector<Migration> migrations_;
  std::vector<SimTime> first_process_ack_;
  HostCounters counters_;
};

}  // namespace atfn::host
