#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "atfn/packet.hpp"
#include "atfn/sim_kernel.hpp"

namespace atfn::ftable {

// Fields folded into the bucket hash.
struct BucketFields {
  bool addresses = true;
  bool ports = true;
  bool protocol = false;

  bool operator==(const BucketFields&) const = default;
};

namespace detail {

inline std::uint32_t fold_address(const IpAddress& a) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < a.width(); i += 4)
    v ^= (std::uint32_t{a.bytes[i]} << 24) | (std::uint32_t{a.bytes[i + 1]} << 16) |
         (std::uint32_t{a.bytes[i + 2]} << 8) | a.bytes[i + 3];
  return v;
}

// murmur3 finalizer
inline std::uint32_t fmix32(std::uint32_t h) {
  h ^= h >> 16;
  h *= 0x85ebca6bu;
  h ^= h >> 13;
  h *= 0xc2b2ae35u;
  h ^= h >> 16;
  return h;
}

inline std::uint32_t rotl32(std::uint32_t v, int r) { return (v << r) | (v >> (32 - r)); }

}  // namespace detail

// Port pair XOR-folded with the addresses, then mixed. With a single
// shared address pair, placement is decided by the ports alone.
inline std::size_t bucket_index(const FlowKey& key, std::size_t num_buckets,
                                const BucketFields& fields = {}) {
  if (num_buckets == 0) throw std::invalid_argument("num_buckets must be >= 1");
  std::uint32_t v = 0;
  if (fields.ports) v = (std::uint32_t{key.src_port} << 16) | key.dst_port;
  if (fields.addresses)
    v ^= detail::fold_address(key.src_addr) ^ detail::rotl32(detail::fold_address(key.dst_addr), 16);
  if (fields.protocol) v ^= std::uint32_t{key.protocol} * 0x01000193u;
  return detail::fmix32(v) % num_buckets;
}

struct FlowTableConfig {
  std::size_t num_buckets = 256;
  std::size_t max_list_size = 6;
  std::size_t max_entries = 10'000;
  Duration t_timer = time::us(100);
  Duration t_delete = time::ms(1'000);
  Duration t_delete_pressure = time::ms(100);
  double pressure_threshold = 0.9;
  BucketFields bucket_fields;

  void validate() const {
    if (num_buckets == 0) throw std::invalid_argument("num_buckets must be >= 1");
    if (max_list_size == 0) throw std::invalid_argument("max_list_size must be >= 1");
    if (max_entries == 0) throw std::invalid_argument("max_entries must be >= 1");
    if (t_delete_pressure > t_delete)
      throw std::invalid_argument("t_delete_pressure must not exceed t_delete");
    if (!(pressure_threshold > 0.0 && pressure_threshold <= 1.0))
      throw std::invalid_argument("pressure_threshold must be in (0, 1]");
  }
};

struct HeldPacket {
  Packet packet;
  SimTime held_at = 0;
};

// One row of the Flow-to-Core table.
struct FlowEntry {
  FlowKey key;
  CoreId core_id = 0;
  bool transition = false;
  std::deque<HeldPacket> held;
  std::optional<SimTime> timer_deadline;
  SimTime last_activity = 0;
  std::uint64_t epoch = 0;  // increments per transition; tags the timer event
};

enum class HandshakeState : std::uint8_t { SynSeen, SynAckSeen, Established };

// Three-way handshake detector. Not a TCP state machine: it only follows
// SYN -> SYN-ACK -> ACK and forgets anything else.
class HandshakeTracker {
 public:
  struct Progress {
    HandshakeState state = HandshakeState::SynSeen;
    SimTime syn_at = 0;
    SimTime synack_at = 0;
    SimTime established_at = 0;
  };

  // Returns true when `packet` completes a handshake. The completed key is
  // dropped from the tracker.
  bool advance(const Packet& packet, SimTime now) {
    if (!packet.is_tcp()) return false;
    const FlowKey key = packet.receive_key();
    switch (packet.kind) {
      case PacketKind::Syn:
        if (packet.direction == Direction::Rx) {
          pending_[key] = Progress{HandshakeState::SynSeen, now, 0, 0};
        }
        return false;
      case PacketKind::SynAck: {
        auto it = pending_.find(key);
        if (it != pending_.end() && it->second.state == HandshakeState::SynSeen &&
            packet.direction == Direction::Tx) {
          it->second.state = HandshakeState::SynAckSeen;
          it->second.synack_at = now;
        }
        return false;
      }
      case PacketKind::Ack:
      case PacketKind::Data: {
        if (packet.direction != Direction::Rx) return false;
        auto it = pending_.find(key);
        if (it == pending_.end() || it->second.state != HandshakeState::SynAckSeen) return false;
        pending_.erase(it);
        return true;
      }
      case PacketKind::Fin:
        return false;
    }
    return false;
  }

  std::optional<Progress> progress(const FlowKey& receive_key) const {
    auto it = pending_.find(receive_key);
    if (it == pending_.end()) return std::nullopt;
    return it->second;
  }

  // Drops partial handshakes whose SYN is older than `ttl`.
  std::size_t expire(SimTime now, Duration ttl) {
    std::size_t n = 0;
    for (auto it = pending_.begin(); it != pending_.end();) {
      if (now - it->second.syn_at >= ttl) {
        it = pending_.erase(it);
        ++n;
      } else {
        ++it;
      }
    }
    return n;
  }

  std::size_t size() const noexcept { return pending_.size(); }

 private:
  std::map<FlowKey, Progress> pending_;
};

enum class UpdateOutcome : std::uint8_t {
  NoEntry,
  SameCore,
  TransitionStarted,
  // Core changed while already in transition; the running timer is kept.
  TransitionRetargeted,
  // Core changed with t_timer == 0: no hold at all.
  Retargeted,
};

inline const char* to_string(UpdateOutcome o) {
  switch (o) {
    case UpdateOutcome::NoEntry: return "NoEntry";
    case UpdateOutcome::SameCore: return "SameCore";
    case UpdateOutcome::TransitionStarted: return "TransitionStarted";
    case UpdateOutcome::TransitionRetargeted: return "TransitionRetargeted";
    case UpdateOutcome::Retargeted: return "Retargeted";
  }
  return "?";
}

struct TxUpdate {
  UpdateOutcome outcome = UpdateOutcome::NoEntry;
  const FlowEntry* entry = nullptr;
};

struct SteerDecision {
  enum class Kind : std::uint8_t { Direct, Held, Fallback };
  Kind kind = Kind::Fallback;
  CoreId core = 0;  // valid for Direct

  static SteerDecision direct(CoreId c) { return {Kind::Direct, c}; }
  static SteerDecision held() { return {Kind::Held, 0}; }
  static SteerDecision fallback() { return {Kind::Fallback, 0}; }
};

struct TableStats {
  std::uint64_t handshakes = 0;
  std::uint64_t admitted = 0;
  std::uint64_t rejected_bucket_full = 0;
  std::uint64_t rejected_table_full = 0;
  std::uint64_t evictions = 0;
  std::uint64_t tracker_expired = 0;
  std::uint64_t transitions = 0;
  std::uint64_t retargets = 0;
  std::uint64_t held_packets = 0;
  std::size_t peak_occupancy = 0;
  std::size_t peak_bucket_length = 0;
  std::uint64_t peak_held_bytes = 0;

  std::uint64_t rejected() const noexcept { return rejected_bucket_full + rejected_table_full; }
};

struct HoldRecord {
  FlowId flow = 0;
  std::uint64_t seq = 0;
  std::uint32_t bytes = 0;
  SimTime held_at = 0;
  SimTime flushed_at = 0;

  Duration delay() const noexcept { return flushed_at - held_at; }
};

class FlowTable {
 public:
  explicit FlowTable(FlowTableConfig cfg) : cfg_(cfg), buckets_(cfg.num_buckets) {
    cfg_.validate();
  }

  const FlowTableConfig& config() const noexcept { return cfg_; }

  // Follows the handshake; on completion tries to admit the flow with
  // `default_core` (the core the hash fallback would pick). A full bucket
  // or a full table is a rejection, never an error.
  const FlowEntry* on_connection_tracking(const Packet& packet, SimTime now, CoreId default_core) {
    if (!tracker_.advance(packet, now)) return nullptr;
    ++stats_.handshakes;
    const FlowKey key = packet.receive_key();
    if (FlowEntry* existing = find_mut(key)) {
      existing->last_activity = now;
      return nullptr;
    }
    if (size_ >= cfg_.max_entries) {
      ++stats_.rejected_table_full;
      return nullptr;
    }
    auto& list = buckets_[bucket_of(key)];
    if (list.size() >= cfg_.max_list_size) {
      ++stats_.rejected_bucket_full;
      return nullptr;
    }
    FlowEntry e;
    e.key = key;
    e.core_id = default_core;
    e.last_activity = now;
    list.push_back(std::move(e));
    ++size_;
    ++stats_.admitted;
    stats_.peak_occupancy = std::max(stats_.peak_occupancy, size_);
    stats_.peak_bucket_length = std::max(stats_.peak_bucket_length, list.size());
    return &list.back();
  }

  // Applies a transmit descriptor. The entry is looked up under the
  // reversed (receive-direction) key.
  TxUpdate observe_tx(const TransmitDescriptor& desc, SimTime now) {
    FlowEntry* e = find_mut(reverse_key(desc.key));
    if (e == nullptr) return {UpdateOutcome::NoEntry, nullptr};
    e->last_activity = now;
    if (desc.core_id == e->core_id) return {UpdateOutcome::SameCore, e};
    e->core_id = desc.core_id;
    ++stats_.retargets;
    if (e->transition) return {UpdateOutcome::TransitionRetargeted, e};
    if (cfg_.t_timer == 0) return {UpdateOutcome::Retargeted, e};
    e->transition = true;
    e->timer_deadline = now + cfg_.t_timer;
    ++e->epoch;
    ++stats_.transitions;
    return {UpdateOutcome::TransitionStarted, e};
  }

  SteerDecision steer(const Packet& packet, SimTime now) {
    FlowEntry* e = find_mut(packet.receive_key());
    if (e == nullptr) return SteerDecision::fallback();
    e->last_activity = now;
    if (!e->transition) return SteerDecision::direct(e->core_id);
    e->held.push_back(HeldPacket{packet, now});
    ++stats_.held_packets;
    held_bytes_ += packet.bytes;
    stats_.peak_held_bytes = std::max(stats_.peak_held_bytes, held_bytes_);
    return SteerDecision::held();
  }

  // Ends a transition. Returns held packets in arrival order for the
  // entry's (new) core. Firing for an entry not in transition, or with a
  // stale epoch, is an engine bug.
  std::vector<Packet> on_timer_expire(const FlowKey& key, std::uint64_t epoch, SimTime now) {
    FlowEntry* e = find_mut(key);
    if (e == nullptr || !e->transition || e->epoch != epoch)
      throw std::logic_error("transition timer fired for a flow not in transition: " +
                             key.to_string());
    if (!e->timer_deadline || *e->timer_deadline != now)
      throw std::logic_error("transition timer fired off its deadline: " + key.to_string());
    std::vector<Packet> out;
    out.reserve(e->held.size());
    for (auto& h : e->held) {
      hold_log_.push_back(HoldRecord{h.packet.flow, h.packet.seq, h.packet.bytes, h.held_at, now});
      held_bytes_ -= h.packet.bytes;
      out.push_back(std::move(h.packet));
    }
    e->held.clear();
    e->transition = false;
    e->timer_deadline.reset();
    return out;
  }

  Duration effective_t_delete() const noexcept {
    const double occupancy = static_cast<double>(size_);
    return occupancy >= cfg_.pressure_threshold * static_cast<double>(cfg_.max_entries)
               ? cfg_.t_delete_pressure
               : cfg_.t_delete;
  }

  // Evicts idle entries. Entries in transition stay until flushed.
  std::vector<FlowKey> age(SimTime now) {
    const Duration ttl = effective_t_delete();
    std::vector<FlowKey> evicted;
    for (auto& list : buckets_) {
      for (auto it = list.begin(); it != list.end();) {
        if (!it->transition && now - it->last_activity >= ttl) {
          evicted.push_back(it->key);
          it = list.erase(it);
          --size_;
        } else {
          ++it;
        }
      }
    }
    stats_.evictions += evicted.size();
    stats_.tracker_expired += tracker_.expire(now, cfg_.t_delete);
    return evicted;
  }

  const FlowEntry* find(const FlowKey& receive_key) const {
    const auto& list = buckets_[bucket_of(receive_key)];
    for (const auto& e : list)
      if (e.key == receive_key) return &e;
    return nullptr;
  }

  // 1-based number of list nodes a lookup touches: the entry's position on
  // a hit, the full list length on a miss (at least one probe).
  std::size_t probe_position(const FlowKey& receive_key) const {
    const auto& list = buckets_[bucket_of(receive_key)];
    for (std::size_t i = 0; i < list.size(); ++i)
      if (list[i].key == receive_key) return i + 1;
    return std::max<std::size_t>(1, list.size());
  }

  std::size_t bucket_of(const FlowKey& key) const {
    return bucket_index(key, cfg_.num_buckets, cfg_.bucket_fields);
  }

  std::size_t size() const noexcept { return size_; }
  std::size_t bucket_length(std::size_t b) const { return buckets_.at(b).size(); }
  std::size_t num_buckets() const noexcept { return buckets_.size(); }
  std::size_t max_bucket_length() const {
    std::size_t m = 0;
    for (const auto& l : buckets_) m = std::max(m, l.size());
    return m;
  }
  std::uint64_t held_bytes() const noexcept { return held_bytes_; }
  const TableStats& stats() const noexcept { return stats_; }
  const std::vector<HoldRecord>& hold_log() const noexcept { return hold_log_; }
  const HandshakeTracker& tracker() const noexcept { return tracker_; }

 private:
  FlowEntry* find_mut(const FlowKey& receive_key) {
    auto& list = buckets_[bucket_of(receive_key)];
    for (auto& e : list)
      if (e.key == receive_key) return &e;
    return nullptr;
  }

  FlowTableConfig cfg_;
  // Chains are short (<= max_list_size); a vector per bucket stands in for
  // the linked list.
  std::vector<std::vector<FlowEntry>> buckets_;
  std::size_t size_ = 0;
  std::uint64_t held_bytes_ = 0;
  HandshakeTracker tracker_;
  TableStats stats_;
  std::vector<HoldRecord> hold_log_;
};

enum class IpVersion : std::uint8_t { V4 = 4, V6 = 6 };

// Table memory: 20 bytes per IPv4 entry, 24 more for IPv6, plus held bytes.
inline std::uint64_t memory_estimate(std::uint64_t n_entries, IpVersion v, std::uint64_t held_bytes) {
  const std::uint64_t per_entry = v == IpVersion::V4 ? 20 : 44;
  return n_entries * per_entry + held_bytes;
}

// Upper bound on bytes held during one T_timer at a given line rate.
inline std::uint64_t held_bound_bytes(double link_gbps, Duration t_timer) {
  return static_cast<std::uint64_t>(link_gbps * static_cast<double>(t_timer) / 8.0 + 0.5);
}

// Lookup latency: 260 ns for the first list node, 150 ns per further node.
inline Duration search_time(std::size_t position) {
  if (position == 0) throw std::invalid_argument("search position is 1-based");
  return 260 + 150 * static_cast<Duration>(position - 1);
}

inline Duration search_time(std::size_t position, std::size_t max_list_size) {
  if (position > max_list_size)
    throw std::invalid_argument("search position beyond max_list_size");
  return search_time(position);
}

}  // namespace atfn::ftable
