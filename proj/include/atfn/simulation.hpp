#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "atfn/flow_table.hpp"
#include "atfn/host_model.hpp"
#include "atfn/metrics.hpp"
#include "atfn/nic_model.hpp"
#include "atfn/packet.hpp"
#include "atfn/sim_kernel.hpp"
#include "atfn/workload.hpp"

namespace atfn {

struct QueueRow {
  QueueId queue = 0;
  CoreId core = 0;
  nic::QueueStats stats;
};

struct RunResult {
  metrics::RunReport report;
  std::vector<QueueRow> queues;
  metrics::Histogram held_delay;
};

// One simulated run: sender and link, NIC, host. Owns every piece of state,
// so separate instances can run on separate threads.
class Testbed {
 public:
  explicit Testbed(workload::Scenario s) : s_(std::move(s)) {
    s_.validate();
    Rng master(s_.seed);
    nic_ = std::make_unique<nic::Nic>(kernel_, s_.nic, s_.build_rss_config(),
                                      s_.nic.mode == nic::Mode::Atfn
                                          ? std::optional<ftable::FlowTableConfig>(s_.flow_table)
                                          : std::nullopt,
                                      s_.topology.num_cores());
    host_ = std::make_unique<host::Host>(kernel_, *nic_, s_.build_host_config(), master.fork(3));
    if (s_.workload.script == "fig8")
      setup_fig8();
    else
      setup_streams(master);
  }

  Testbed(const Testbed&) = delete;
  Testbed& operator=(const Testbed&) = delete;

  RunResult run() {
    if (ran_) throw std::logic_error("a testbed runs once");
    ran_ = true;
    if (s_.nic.mode == nic::Mode::Atfn) nic_->start_aging(time::from_us(s_.aging_interval_ms * 1e3));
    host_->start();
    if (sender_) sender_->start();
    const SimTime end = end_time();
    kernel_.run_until(end);
    return collect();
  }

  SimTime end_time() const {
    if (script_) {
      const Duration hold = s_.flow_table.t_timer;
      return script_->migrate_at + 2 * (script_->service_ns * script_->depth + hold) +
             time::from_us(s_.drain_ms * 1e3);
    }
    return s_.duration() + time::from_us(s_.drain_ms * 1e3);
  }

  // Per-flow start of the scored window: the first process-context ACK
  // (or handshake completion when there is none) plus one hold and the
  // configured margin.
  std::vector<SimTime> warmup_end() const {
    std::vector<SimTime> out(flows_, kNever);
    const auto& fpa = host_->first_process_ack();
    const Duration pad = s_.flow_table.t_timer + time::from_us(s_.warmup_margin_us);
    for (FlowId f = 0; f < flows_; ++f) {
      SimTime base = f < fpa.size() ? fpa[f] : kNever;
      if (base == kNever) base = established_at_[f];
      if (base != kNever) out[f] = base + pad;
    }
    return out;
  }

  const workload::Scenario& scenario() const noexcept { return s_; }
  Kernel& kernel() noexcept { return kernel_; }
  nic::Nic& nic() noexcept { return *nic_; }
  host::Host& host() noexcept { return *host_; }
  const std::optional<workload::Fig8Script>& script() const noexcept { return script_; }
  const std::vector<SimTime>& established_at() const noexcept { return established_at_; }

 private:
  void setup_streams(Rng& master) {
    Rng port_rng = master.fork(1);
    auto streams = workload::spawn_streams(s_, port_rng);
    flows_ = static_cast<FlowId>(streams.size());
    established_at_.assign(flows_, kNever);
    std::vector<std::size_t> per_app(s_.workload.apps.size(), 0);
    for (const auto& st : streams) {
      const auto& app = s_.workload.apps[st.app];
      host::AppProcess p;
      p.allowed = app.cores;
      p.core = app.cores[per_app[st.app]++ % app.cores.size()];
      p.think_ns = app.think_us * 1e3;
      p.reads = app.reads;
      const auto pid = host_->add_process(p);
      host_->add_socket(st.flow, st.key, pid);
    }
    sender_ = std::make_unique<workload::Sender>(kernel_, s_, std::move(streams), master.fork(2),
                                                 [this](Packet p) { on_wire_arrival(std::move(p)); });
    nic_->set_tx_sink([this](const Packet& p) { sender_->on_receiver_packet(p); });
  }

  void setup_fig8() {
    script_ = workload::adversarial_fig8_schedule(s_.nic.ring_capacity, s_.host.service_pps, nic_->classifier(), 0,
                                                  s_.nic.queue_core[1]);
    const auto& sc = *script_;
    flows_ = static_cast<FlowId>(1 + sc.filler_keys.size());
    established_at_.assign(flows_, kNever);
    script_sent_.assign(flows_, 0);
    const CoreId old_core = s_.nic.queue_core[0];
    auto add = [this, old_core](FlowId f, const FlowKey& k) {
      host::AppProcess p;
      p.core = old_core;
      p.reads = false;
      host_->add_socket(f, k, host_->add_process(p));
    };
    add(0, sc.victim_key);
    for (std::size_t i = 0; i < sc.filler_keys.size(); ++i) add(static_cast<FlowId>(i + 1), sc.filler_keys[i]);
    for (const auto& step : sc.steps) {
      if (!step.transmit && step.packet.kind == PacketKind::Data) ++script_sent_[step.packet.flow];
      kernel_.schedule(step.at, [this, step] {
        if (step.transmit)
          nic_->tx(step.packet, TransmitDescriptor{step.packet.key, step.core}, kernel_.now());
        else
          on_wire_arrival(step.packet);
      });
    }
  }

  void on_wire_arrival(Packet p) {
    if (p.kind == PacketKind::Ack && p.flow < established_at_.size() && established_at_[p.flow] == kNever)
      established_at_[p.flow] = kernel_.now();
    nic_->receive(std::move(p));
  }

  std::uint64_t sent(FlowId f) const { return sender_ ? sender_->data_sent(f) : script_sent_[f]; }

  RunResult collect() {
    RunResult out;
    auto& r = out.report;
    const auto& log = host_->delivered_log();
    r.scenario = s_.name;
    r.mode = nic::to_string(s_.nic.mode);
    r.seed = s_.seed;
    r.flows = flows_;
    r.t_timer = s_.nic.mode == nic::Mode::Atfn ? s_.flow_table.t_timer : 0;
    r.max_list_size = s_.nic.mode == nic::Mode::Atfn ? s_.flow_table.max_list_size : 0;

    std::vector<std::vector<std::uint8_t>> seen(flows_);
    for (FlowId f = 0; f < flows_; ++f) {
      r.data_sent += sent(f);
      seen[f].assign(sent(f), 0);
    }
    for (const auto& d : log) {
      if (d.flow >= flows_ || d.seq >= seen[d.flow].size()) throw std::logic_error("delivery of a packet never sent");
      if (seen[d.flow][d.seq]++) ++r.duplicates;
    }
    r.data_delivered = log.size();
    r.drops = nic_->total_drops();
    const std::uint64_t accounted = r.data_delivered - r.duplicates + r.drops;
    r.lost = r.data_sent > accounted ? r.data_sent - accounted : 0;

    const auto rc = metrics::count_reordering(log);
    r.reordered = rc.reordered;
    r.reordering_ratio = rc.ratio();

    const auto warm = warmup_end();
    const auto aff = metrics::affinity_scores(log, warm);
    r.flow_affinity = aff.flow_affinity;
    r.data_affinity = aff.data_affinity;
    r.scored_packets = aff.scored;

    const auto& hc = host_->counters();
    const auto proxy =
        host::contention_proxy(log, host_->migrations(), hc, host_->config().topology, warm);
    r.cross_core_packets = proxy.cross_core_packets;
    r.cross_processor_packets = proxy.cross_processor_packets;
    r.alternations = proxy.alternations;
    r.lock_conflict_events = proxy.lock_conflict_events;
    r.cross_processor_conflicts = proxy.cross_processor_conflicts;
    r.owned_deferrals = hc.owned_deferrals;
    r.migrations = proxy.migrations;
    r.delivered_interrupt = hc.delivered_interrupt;
    r.delivered_process = hc.delivered_process;
    r.process_context_fraction =
        log.empty() ? 0.0 : static_cast<double>(hc.delivered_process) / static_cast<double>(log.size());

    if (nic_->has_table()) {
      const auto& t = nic_->table();
      const auto& st = t.stats();
      r.handshakes = st.handshakes;
      r.admitted = st.admitted;
      r.rejected = st.rejected();
      r.admitted_fraction = metrics::admitted_fraction(st, st.handshakes);
      r.transitions = st.transitions;
      r.retargets = st.retargets;
      r.held_packets = st.held_packets;
      r.peak_held_bytes = st.peak_held_bytes;
      r.peak_occupancy = st.peak_occupancy;
      r.table_memory_peak_bytes = ftable::memory_estimate(st.peak_occupancy, ftable::IpVersion::V4, st.peak_held_bytes);
      r.evictions = st.evictions;
      r.max_bucket_length = st.peak_bucket_length;
      out.held_delay = metrics::held_delay_histogram(t.hold_log(), t.config().t_timer, s_.held_delay_bins);
    } else {
      out.held_delay = metrics::held_delay_histogram({}, 0, s_.held_delay_bins);
    }
    r.held_delay_max_ns = out.held_delay.max_delay;
    r.held_delay_mean_ns = out.held_delay.mean_delay;
    r.held_delay_overflow = out.held_delay.overflow;
    r.events_fired = kernel_.fired_total();
    r.sim_end_ns = kernel_.now();

    for (QueueId q = 0; q < nic_->config().num_queues(); ++q)
      out.queues.push_back(QueueRow{q, nic_->config().queue_core[q], nic_->queue_stats(q)});
    return out;
  }

  workload::Scenario s_;
  Kernel kernel_;
  std::unique_ptr<nic::Nic> nic_;
  std::unique_ptr<host::Host> host_;
  std::unique_ptr<workload::Sender> sender_;
  std::optional<workload::Fig8Script> script_;
  std::vector<std::uint64_t> script_sent_;
  std::vector<SimTime> established_at_;
  FlowId flows_ = 0;
  bool ran_ = false;
};

inline RunResult run_scenario(const workload::Scenario& s) {
  Testbed tb(s);
  return tb.run();
}

}  // namespace atfn
