#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <queue>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace atfn {

// Virtual time in nanoseconds since simulation start.
using SimTime = std::uint64_t;
using Duration = std::uint64_t;

inline constexpr SimTime kNever = std::numeric_limits<SimTime>::max();

namespace time {

inline constexpr Duration ns(std::uint64_t v) { return v; }
inline constexpr Duration us(std::uint64_t v) { return v * 1'000; }
inline constexpr Duration ms(std::uint64_t v) { return v * 1'000'000; }

// Converts fractional microseconds, as found in scenario files, to ns.
inline Duration from_us(double v) {
  if (!(v >= 0.0) || !std::isfinite(v))
    throw std::invalid_argument("duration must be a finite non-negative value");
  return static_cast<Duration>(std::llround(v * 1e3));
}

// Per-packet service interval for a stack running at `pps` packets/second.
inline Duration service_interval(double pps) {
  if (!(pps > 0.0) || !std::isfinite(pps))
    throw std::invalid_argument("service rate must be positive");
  auto v = static_cast<Duration>(std::llround(1e9 / pps));
  return v == 0 ? 1 : v;
}

// Serialization delay of `bytes` on a link of `gbps`.
inline Duration wire_time(std::uint32_t bytes, double gbps) {
  if (!(gbps > 0.0))
    throw std::invalid_argument("link rate must be positive");
  auto v = static_cast<Duration>(std::llround(bytes * 8.0 / gbps));
  return v == 0 ? 1 : v;
}

}  // namespace time

using EventId = std::uint64_t;

// Single-threaded virtual-time event loop. Events with equal fire time run
// in the order they were scheduled.
class Kernel {
 public:
  using Action = std::function<void()>;

  SimTime now() const noexcept { return now_; }

  EventId schedule(SimTime fire_time, Action action) {
    if (fire_time < now_)
      throw std::logic_error("event scheduled in the past: t=" + std::to_string(fire_time) +
                             " now=" + std::to_string(now_));
    const EventId id = next_ordinal_++;
    queue_.push(Entry{fire_time, id, std::move(action)});
    return id;
  }

  EventId schedule_in(Duration delay, Action action) {
    if (delay > kNever - now_)
      throw std::overflow_error("event time overflows SimTime");
    return schedule(now_ + delay, std::move(action));
  }

  // Lazy cancellation: the entry stays queued and is skipped when it surfaces.
  void cancel(EventId id) { cancelled_.insert(id); }

  // Fires every event with fire_time <= t_end, including events scheduled
  // while running. Afterwards now() == t_end.
  std::uint64_t run_until(SimTime t_end) {
    if (t_end < now_)
      throw std::logic_error("run_until target is in the past");
    std::uint64_t fired = 0;
    while (!queue_.empty() && queue_.top().fire_time <= t_end) {
      if (fire_next()) ++fired;
    }
    now_ = t_end;
    return fired;
  }

  // Runs to quiescence.
  std::uint64_t run() {
    std::uint64_t fired = 0;
    while (!queue_.empty())
      if (fire_next()) ++fired;
    return fired;
  }

  bool empty() const noexcept { return queue_.empty(); }
  std::size_t pending() const noexcept { return queue_.size(); }
  std::uint64_t fired_total() const noexcept { return fired_total_; }

 private:
  struct Entry {
    SimTime fire_time;
    EventId ordinal;
    Action action;
  };
  struct Later {
    bool operator()(const Entry& a, const Entry& b) const noexcept {
      if (a.fire_time != b.fire_time) return a.fire_time > b.fire_time;
      return a.ordinal > b.ordinal;
    }
  };

  bool fire_next() {
    // priority_queue::top is const; the action is moved out via const_cast
    // immediately before pop.
    Entry& top = const_cast<Entry&>(queue_.top());
    const SimTime t = top.fire_time;
    const EventId id = top.ordinal;
    Action action = std::move(top.action);
    queue_.pop();
    if (is_cancelled(id)) return false;
    now_ = t;
    ++fired_total_;
    action();
    return true;
  }

  bool is_cancelled(EventId id) {
    if (cancelled_.empty()) return false;
    return cancelled_.erase(id) > 0;
  }

  SimTime now_ = 0;
  EventId next_ordinal_ = 0;
  std::uint64_t fired_total_ = 0;
  std::priority_queue<Entry, std::vector<Entry>, Later> queue_;
  std::unordered_set<EventId> cancelled_;
};

// Deterministic generator: mt19937_64 with hand-rolled distributions, so
// results do not depend on the standard library's distribution algorithms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next_u64() { return engine_(); }
  std::uint32_t next_u32() { return static_cast<std::uint32_t>(engine_() >> 32); }

  // Uniform in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t uniform(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform(0)");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform01() < p; }

  // Exponential with the given mean, in ns.
  Duration exponential(double mean_ns) {
    if (mean_ns <= 0.0) return 0;
    const double u = 1.0 - uniform01();
    return static_cast<Duration>(std::llround(-std::log(u) * mean_ns));
  }

  // Child stream for a sub-component; independent of call order elsewhere.
  Rng fork(std::uint64_t salt) const {
    std::uint64_t z = seed_ + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return Rng(z ^ (z >> 31));
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace atfn
