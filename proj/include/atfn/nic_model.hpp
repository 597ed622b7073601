#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "atfn/flow_table.hpp"
#include "atfn/packet.hpp"
#include "atfn/rss_engine.hpp"
#include "atfn/sim_kernel.hpp"

namespace atfn::nic {

// Fixed-capacity drop-tail FIFO standing in for a receive descriptor ring.
class RingBuffer {
 public:
  RingBuffer(QueueId id, std::size_t capacity) : id_(id), capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("ring capacity must be >= 1");
  }

  bool push(Packet p) {
    if (slots_.size() >= capacity_) {
      ++drops_;
      return false;
    }
    slots_.push_back(std::move(p));
    max_depth_ = std::max(max_depth_, slots_.size());
    return true;
  }

  std::optional<Packet> pop() {
    if (slots_.empty()) return std::nullopt;
    Packet p = std::move(slots_.front());
    slots_.pop_front();
    return p;
  }

  QueueId id() const noexcept { return id_; }
  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return slots_.size(); }
  bool empty() const noexcept { return slots_.empty(); }
  bool full() const noexcept { return slots_.size() >= capacity_; }
  std::uint64_t drops() const noexcept { return drops_; }
  std::size_t max_depth() const noexcept { return max_depth_; }

 private:
  QueueId id_;
  std::size_t capacity_;
  std::deque<Packet> slots_;
  std::uint64_t drops_ = 0;
  std::size_t max_depth_ = 0;
};

enum class Mode : std::uint8_t { Rss, Atfn };

inline const char* to_string(Mode m) { return m == Mode::Rss ? "rss" : "atfn"; }

inline Mode parse_mode(const std::string& s) {
  if (s == "rss" || s == "RSS") return Mode::Rss;
  if (s == "atfn" || s == "ATFN" || s == "a-tfn" || s == "A-TFN") return Mode::Atfn;
  throw std::invalid_argument("unknown NIC mode: " + s);
}

struct NicConfig {
  // queue_core[q] is the core queue q interrupts. One queue per core at most.
  std::vector<CoreId> queue_core{0, 1};
  std::size_t ring_capacity = 256;
  Mode mode = Mode::Atfn;
  bool latency_accounting = false;
  Duration irq_delay = 0;

  QueueId num_queues() const noexcept { return static_cast<QueueId>(queue_core.size()); }

  void validate(std::size_t num_cores) const {
    if (queue_core.empty()) throw std::invalid_argument("NIC needs at least one queue");
    if (ring_capacity == 0) throw std::invalid_argument("ring capacity must be >= 1");
    std::vector<bool> used(kMaxCores, false);
    for (auto c : queue_core) {
      if (c >= num_cores)
        throw std::invalid_argument("queue pinned to core " + std::to_string(c) +
                                    " which does not exist");
      if (used[c]) throw std::invalid_argument("two queues pinned to core " + std::to_string(c));
      used[c] = true;
    }
  }
};

struct QueueStats {
  std::uint64_t offered = 0;  // push attempts, flushes included
  std::uint64_t queued = 0;
  std::uint64_t dropped = 0;
  std::uint64_t flushed = 0;  // held packets pushed at transition end
  std::uint64_t interrupts = 0;
  std::size_t max_depth = 0;
};

struct Placement {
  enum class Kind : std::uint8_t { Queued, HeldByTable, Dropped };
  Kind kind = Kind::Queued;
  QueueId queue = 0;
  std::size_t depth = 0;  // ring depth after the push

  static Placement queued(QueueId q, std::size_t d) { return {Kind::Queued, q, d}; }
  static Placement held() { return {Kind::HeldByTable, 0, 0}; }
  static Placement dropped(QueueId q) { return {Kind::Dropped, q, 0}; }
};

// Multi-queue NIC. Receive: classify, steer, ring, interrupt. Transmit:
// hand descriptors to the Flow-to-Core table.
class Nic {
 public:
  using InterruptHandler = std::function<void(CoreId, QueueId)>;
  using TxSink = std::function<void(const Packet&)>;

  Nic(Kernel& kernel, NicConfig cfg, rss::RssConfig rss_cfg,
      std::optional<ftable::FlowTableConfig> table_cfg, std::size_t num_cores)
      : kernel_(kernel), cfg_(std::move(cfg)), classifier_(fix_queue_count(rss_cfg, cfg_)) {
    cfg_.validate(num_cores);
    queue_of_core_.assign(num_cores, std::nullopt);
    for (QueueId q = 0; q < cfg_.num_queues(); ++q) {
      rings_.emplace_back(q, cfg_.ring_capacity);
      queue_of_core_[cfg_.queue_core[q]] = q;
    }
    stats_.resize(cfg_.num_queues());
    if (cfg_.mode == Mode::Atfn) {
      if (!table_cfg) throw std::invalid_argument("A-TFN mode requires a flow table config");
      table_.emplace(*table_cfg);
    }
  }

  void set_interrupt_handler(InterruptHandler h) { on_interrupt_ = std::move(h); }
  void set_tx_sink(TxSink s) { tx_sink_ = std::move(s); }

  // Wire arrival. With latency accounting, classification runs through a
  // serial pipeline charged with the table search time.
  void receive(Packet p) {
    const SimTime now = kernel_.now();
    p.arrival = now;
    if (cfg_.latency_accounting && table_) {
      const std::size_t pos = table_->probe_position(p.receive_key());
      const SimTime start = std::max(now, pipeline_free_);
      pipeline_free_ = start + ftable::search_time(pos, table_->config().max_list_size);
      lookup_ns_ += pipeline_free_ - now;
      kernel_.schedule(pipeline_free_, [this, p = std::move(p)]() mutable { rx(std::move(p), kernel_.now()); });
      return;
    }
    rx(std::move(p), now);
  }

  Placement rx(Packet p, SimTime now) {
    ++rx_packets_;
    const QueueId hashed = classifier_.queue_for(p);
    if (!table_) return push(hashed, std::move(p), false);

    table_->on_connection_tracking(p, now, cfg_.queue_core[hashed]);
    const auto d = table_->steer(p, now);
    switch (d.kind) {
      case ftable::SteerDecision::Kind::Direct:
        return push(queue_for_core(d.core, hashed), std::move(p), false);
      case ftable::SteerDecision::Kind::Held:
        return Placement::held();
      case ftable::SteerDecision::Kind::Fallback:
        break;
    }
    return push(hashed, std::move(p), false);
  }

  // Outgoing packet with its descriptor. In RSS mode the descriptor's core
  // ID is ignored.
  ftable::UpdateOutcome tx(const Packet& p, const TransmitDescriptor& desc, SimTime now) {
    if (desc.core_id >= queue_of_core_.size())
      throw std::invalid_argument("descriptor core id out of range");
    ++tx_packets_;
    auto outcome = ftable::UpdateOutcome::NoEntry;
    if (table_) {
      table_->on_connection_tracking(p, now, 0);
      if (p.is_tcp()) {
        const auto upd = table_->observe_tx(desc, now);
        outcome = upd.outcome;
        if (outcome == ftable::UpdateOutcome::TransitionStarted) arm_timer(*upd.entry);
      }
    }
    if (tx_sink_) tx_sink_(p);
    return outcome;
  }

  // Host side: next packet of `queue`, FIFO.
  std::optional<Packet> drain(QueueId queue) { return rings_.at(queue).pop(); }

  // Periodic table aging.
  void start_aging(Duration interval) {
    if (!table_ || interval == 0) return;
    kernel_.schedule_in(interval, [this, interval] {
      table_->age(kernel_.now());
      start_aging(interval);
    });
  }

  QueueId queue_for_core(CoreId core, QueueId fallback) const {
    if (core < queue_of_core_.size() && queue_of_core_[core]) return *queue_of_core_[core];
    return fallback;
  }

  const NicConfig& config() const noexcept { return cfg_; }
  const rss::Classifier& classifier() const noexcept { return classifier_; }
  bool has_table() const noexcept { return table_.has_value(); }
  ftable::FlowTable& table() { return table_.value(); }
  const ftable::FlowTable& table() const { return table_.value(); }
  const RingBuffer& ring(QueueId q) const { return rings_.at(q); }
  const QueueStats& queue_stats(QueueId q) const { return stats_.at(q); }
  std::uint64_t rx_packets() const noexcept { return rx_packets_; }
  std::uint64_t tx_packets() const noexcept { return tx_packets_; }
  Duration lookup_ns() const noexcept { return lookup_ns_; }
  std::uint64_t total_drops() const {
    std::uint64_t n = 0;
    for (const auto& s : stats_) n += s.dropped;
    return n;
  }

 private:
  static rss::RssConfig fix_queue_count(rss::RssConfig rss_cfg, const NicConfig& cfg) {
    rss_cfg.num_queues = cfg.num_queues();
    return rss_cfg;
  }

  Placement push(QueueId q, Packet p, bool flushed) {
    auto& ring = rings_[q];
    auto& st = stats_[q];
    ++st.offered;
    if (flushed) ++st.flushed;
    const bool was_empty = ring.empty();
    if (!ring.push(std::move(p))) {
      ++st.dropped;
      return Placement::dropped(q);
    }
    ++st.queued;
    st.max_depth = std::max(st.max_depth, ring.size());
    if (was_empty) raise_interrupt(q);
    return Placement::queued(q, ring.size());
  }

  void raise_interrupt(QueueId q) {
    ++stats_[q].interrupts;
    const CoreId core = cfg_.queue_core[q];
    kernel_.schedule_in(cfg_.irq_delay, [this, core, q] {
      if (on_interrupt_) on_interrupt_(core, q);
    });
  }

  void arm_timer(const ftable::FlowEntry& e) {
    kernel_.schedule(*e.timer_deadline, [this, key = e.key, epoch = e.epoch] {
      auto packets = table_->on_timer_expire(key, epoch, kernel_.now());
      const auto* entry = table_->find(key);
      const QueueId hashed = classifier_.queue_for(key);
      const QueueId q = queue_for_core(entry->core_id, hashed);
      for (auto& p : packets) push(q, std::move(p), true);
    });
  }

  Kernel& kernel_;
  NicConfig cfg_;
  rss::Classifier classifier_;
  std::optional<ftable::FlowTable> table_;
  std::vector<RingBuffer> rings_;
  std::vector<QueueStats> stats_;
  std::vector<std::optional<QueueId>> queue_of_core_;
  InterruptHandler on_interrupt_;
  TxSink tx_sink_;
  SimTime pipeline_free_ = 0;
  Duration lookup_ns_ = 0;
  std::uint64_t rx_packets_ = 0;
  std::uint64_t tx_packets_ = 0;
};

}  // namespace atfn::nic
