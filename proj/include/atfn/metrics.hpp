#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "atfn/flow_table.hpp"
#include "atfn/host_model.hpp"
#include "atfn/packet.hpp"
#include "atfn/sim_kernel.hpp"

namespace atfn::metrics {

// Bumped whenever a column is added, renamed or redefined.
inline constexpr int kCsvVersion = 1;

struct ReorderCount {
  std::uint64_t delivered = 0;
  std::uint64_t reordered = 0;  // seq below the flow's running max at delivery

  double ratio() const noexcept {
    return delivered == 0 ? 0.0 : static_cast<double>(reordered) / static_cast<double>(delivered);
  }
};

inline ReorderCount count_reordering(std::span<const host::Delivery> log) {
  ReorderCount rc;
  std::unordered_map<FlowId, std::uint64_t> max_seq;
  for (const auto& d : log) {
    ++rc.delivered;
    auto [it, fresh] = max_seq.try_emplace(d.flow, d.seq);
    if (fresh) continue;
    if (d.seq < it->second)
      ++rc.reordered;
    else
      it->second = d.seq;
  }
  return rc;
}

inline double reordering_ratio(std::span<const host::Delivery> log) { return count_reordering(log).ratio(); }

inline double admitted_fraction(const ftable::TableStats& stats, std::uint64_t total_flows) {
  if (total_flows == 0) return 0.0;
  return static_cast<double>(stats.admitted) / static_cast<double>(total_flows);
}

struct Affinity {
  double flow_affinity = 1.0;
  double data_affinity = 1.0;
  std::uint64_t scored = 0;  // deliveries past warm-up; both scores are 1.0 when zero
};

// Deliveries before warmup_end[flow] are ignored; an empty span scores all.
inline Affinity affinity_scores(std::span<const host::Delivery> log, std::span<const SimTime> warmup_end = {}) {
  Affinity a;
  std::map<FlowId, std::map<CoreId, std::uint64_t>> per_flow;
  std::uint64_t on_app_core = 0;
  for (const auto& d : log) {
    if (!warmup_end.empty() && d.flow < warmup_end.size() && d.at < warmup_end[d.flow]) continue;
    ++a.scored;
    ++per_flow[d.flow][d.core];
    if (d.core == d.app_core) ++on_app_core;
  }
  if (a.scored == 0) return a;
  double sum = 0.0;
  for (const auto& [flow, cores] : per_flow) {
    std::uint64_t total = 0, modal = 0;
    for (const auto& [core, n] : cores) {
      total += n;
      modal = std::max(modal, n);
    }
    sum += static_cast<double>(modal) / static_cast<double>(total);
  }
  a.flow_affinity = sum / static_cast<double>(per_flow.size());
  a.data_affinity = static_cast<double>(on_app_core) / static_cast<double>(a.scored);
  return a;
}

struct Histogram {
  Duration bin_width = 1;
  std::vector<std::uint64_t> counts;
  std::uint64_t overflow = 0;  // delays beyond t_timer; should stay zero
  std::uint64_t total = 0;
  Duration max_delay = 0;
  double mean_delay = 0.0;
};

// Bins [i*w, (i+1)*w), the last one closed at t_timer.
inline Histogram held_delay_histogram(std::span<const ftable::HoldRecord> holds, Duration t_timer,
                                      std::size_t bins) {
  Histogram h;
  if (bins == 0) bins = 1;
  h.bin_width = std::max<Duration>(1, (t_timer + bins - 1) / bins);
  h.counts.assign(bins, 0);
  double sum = 0.0;
  for (const auto& r : holds) {
    const Duration d = r.delay();
    ++h.total;
    sum += static_cast<double>(d);
    h.max_delay = std::max(h.max_delay, d);
    if (d > t_timer) {
      ++h.overflow;
      continue;
    }
    h.counts[std::min<std::size_t>(d / h.bin_width, bins - 1)] += 1;
  }
  if (h.total > 0) h.mean_delay = sum / static_cast<double>(h.total);
  return h;
}

struct RunReport {
  std::string scenario;
  std::string mode;
  std::uint64_t seed = 0;
  std::uint64_t flows = 0;
  Duration t_timer = 0;
  std::size_t max_list_size = 0;
  std::uint64_t data_sent = 0;
  std::uint64_t data_delivered = 0;
  std::uint64_t drops = 0;
  std::uint64_t lost = 0;        // sent, never delivered, never dropped
  std::uint64_t duplicates = 0;  // delivered more than once
  std::uint64_t reordered = 0;
  double reordering_ratio = 0.0;
  std::uint64_t handshakes = 0;
  std::uint64_t admitted = 0;
  std::uint64_t rejected = 0;
  double admitted_fraction = 0.0;
  double flow_affinity = 1.0;
  double data_affinity = 1.0;
  std::uint64_t scored_packets = 0;
  std::uint64_t cross_core_packets = 0;
  std::uint64_t cross_processor_packets = 0;
  std::uint64_t alternations = 0;
  std::uint64_t lock_conflict_events = 0;
  std::uint64_t cross_processor_conflicts = 0;
  std::uint64_t owned_deferrals = 0;
  std::uint64_t migrations = 0;
  std::uint64_t delivered_interrupt = 0;
  std::uint64_t delivered_process = 0;
  double process_context_fraction = 0.0;
  std::uint64_t transitions = 0;
  std::uint64_t retargets = 0;
  std::uint64_t held_packets = 0;
  Duration held_delay_max_ns = 0;
  double held_delay_mean_ns = 0.0;
  std::uint64_t held_delay_overflow = 0;
  std::uint64_t peak_held_bytes = 0;
  std::uint64_t peak_occupancy = 0;
  std::uint64_t table_memory_peak_bytes = 0;
  std::uint64_t evictions = 0;
  std::uint64_t max_bucket_length = 0;  // peak over the run
  std::uint64_t events_fired = 0;
  SimTime sim_end_ns = 0;
};

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

struct Column {
  const char* name;
  std::function<double(const RunReport&)> value;  // numeric columns are aggregated
  bool integral = true;
};

// Numeric run columns in output order. Text columns (scenario, mode) are
// written separately at the front.
inline const std::vector<Column>& run_columns() {
  static const std::vector<Column> cols = [] {
    std::vector<Column> c;
    auto u = [&c](const char* n, auto member) {
      c.push_back({n, [member](const RunReport& r) { return static_cast<double>(r.*member); }, true});
    };
    auto d = [&c](const char* n, auto member) {
      c.push_back({n, [member](const RunReport& r) { return static_cast<double>(r.*member); }, false});
    };
    u("seed", &RunReport::seed);
    u("flows", &RunReport::flows);
    u("t_timer_ns", &RunReport::t_timer);
    u("max_list_size", &RunReport::max_list_size);
    u("data_sent", &RunReport::data_sent);
    u("data_delivered", &RunReport::data_delivered);
    u("drops", &RunReport::drops);
    u("lost", &RunReport::lost);
    u("duplicates", &RunReport::duplicates);
    u("reordered", &RunReport::reordered);
    d("reordering_ratio", &RunReport::reordering_ratio);
    u("handshakes", &RunReport::handshakes);
    u("admitted", &RunReport::admitted);
    u("rejected", &RunReport::rejected);
    d("admitted_fraction", &RunReport::admitted_fraction);
    d("flow_affinity", &RunReport::flow_affinity);
    d("data_affinity", &RunReport::data_affinity);
    u("scored_packets", &RunReport::scored_packets);
    u("cross_core_packets", &RunReport::cross_core_packets);
    u("cross_processor_packets", &RunReport::cross_processor_packets);
    u("alternations", &RunReport::alternations);
    u("lock_conflict_events", &RunReport::lock_conflict_events);
    u("cross_processor_conflicts", &RunReport::cross_processor_conflicts);
    u("owned_deferrals", &RunReport::owned_deferrals);
    u("migrations", &RunReport::migrations);
    u("delivered_interrupt", &RunReport::delivered_interrupt);
    u("delivered_process", &RunReport::delivered_process);
    d("process_context_fraction", &RunReport::process_context_fraction);
    u("transitions", &RunReport::transitions);
    u("retargets", &RunReport::retargets);
    u("held_packets", &RunReport::held_packets);
    u("held_delay_max_ns", &RunReport::held_delay_max_ns);
    d("held_delay_mean_ns", &RunReport::held_delay_mean_ns);
    u("held_delay_overflow", &RunReport::held_delay_overflow);
    u("peak_held_bytes", &RunReport::peak_held_bytes);
    u("peak_occupancy", &RunReport::peak_occupancy);
    u("table_memory_peak_bytes", &RunReport::table_memory_peak_bytes);
    u("evictions", &RunReport::evictions);
    u("max_bucket_length", &RunReport::max_bucket_length);
    u("events_fired", &RunReport::events_fired);
    u("sim_end_ns", &RunReport::sim_end_ns);
    return c;
  }();
  return cols;
}

inline std::string run_csv_header() {
  std::string s = "csv_version,scenario,mode";
  for (const auto& c : run_columns()) s += std::string(",") + c.name;
  return s + "\n";
}

inline std::string run_csv_row(const RunReport& r) {
  std::string s = std::to_string(kCsvVersion) + "," + r.scenario + "," + r.mode;
  for (const auto& c : run_columns()) {
    const double v = c.value(r);
    s += ",";
    s += c.integral ? std::to_string(static_cast<std::uint64_t>(v)) : fmt_double(v);
  }
  return s + "\n";
}

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // sample stddev; 0 for a single run
};

inline MeanStd mean_std(std::span<const double> xs) {
  MeanStd m;
  if (xs.empty()) return m;
  double sum = 0.0;
  for (double x : xs) sum += x;
  m.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return m;
}

// One wide row: every numeric column as <name>_mean,<name>_std.
inline std::pair<std::string, std::string> aggregate_csv(std::span<const RunReport> runs,
                                                         const std::string& scenario_hash) {
  std::string head = "csv_version,scenario,mode,scenario_hash,runs";
  std::string row = std::to_string(kCsvVersion) + "," + (runs.empty() ? "" : runs.front().scenario) + "," +
                    (runs.empty() ? "" : runs.front().mode) + "," + scenario_hash + "," +
                    std::to_string(runs.size());
  for (const auto& c : run_columns()) {
    if (std::string(c.name) == "seed") continue;
    std::vector<double> xs;
    for (const auto& r : runs) xs.push_back(c.value(r));
    const auto m = mean_std(xs);
    head += std::string(",") + c.name + "_mean," + c.name + "_std";
    row += "," + fmt_double(m.mean) + "," + fmt_double(m.stddev);
  }
  return {head + "\n", row + "\n"};
}

}  // namespace atfn::metrics
