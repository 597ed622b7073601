#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "atfn/metrics.hpp"
#include "atfn/nic_model.hpp"
#include "atfn/simulation.hpp"
#include "atfn/workload.hpp"

namespace atfn::cli {

inline constexpr const char* kOutDirEnv = "ATFN_OUT_DIR";

struct Invocation {
  std::string scenario_path;
  std::optional<std::string> mode;
  std::optional<double> t_timer_us;
  std::optional<std::size_t> max_list_size;
  std::optional<std::uint64_t> seed;
  std::optional<double> duration_ms;
  std::optional<std::uint32_t> streams_per_app;
  std::string out_dir;  // empty: $ATFN_OUT_DIR, then ./atfn_out
  std::uint32_t repeat = 1;
  unsigned jobs = 1;
};

inline std::string resolve_out_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return "atfn_out";
}

// Overrides win over file values; the result is validated.
inline workload::Scenario apply_overrides(workload::Scenario s, const Invocation& inv) {
  if (inv.mode) s.nic.mode = nic::parse_mode(*inv.mode);
  if (inv.t_timer_us) s.flow_table.t_timer = time::from_us(*inv.t_timer_us);
  if (inv.max_list_size) s.flow_table.max_list_size = *inv.max_list_size;
  if (inv.seed) s.seed = *inv.seed;
  if (inv.duration_ms) {
    if (!(*inv.duration_ms >= 0.0)) throw std::invalid_argument("duration must be >= 0");
    s.workload.duration_ms = *inv.duration_ms;
  }
  if (inv.streams_per_app) s.workload.streams_per_app = *inv.streams_per_app;
  if (inv.repeat == 0) throw std::invalid_argument("repeat must be >= 1");
  s.validate();
  return s;
}

// Runs seeds base, base+1, ... on up to `jobs` threads. Results come back
// in seed order whatever the completion order.
inline std::vector<RunResult> run_repeats(const workload::Scenario& s, std::uint32_t repeat, unsigned jobs) {
  std::vector<std::optional<RunResult>> slots(repeat);
  std::vector<std::string> errors(repeat);
  std::atomic<std::uint32_t> next{0};
  auto worker = [&] {
    for (std::uint32_t i = next++; i < repeat; i = next++) {
      try {
        auto sc = s;
        sc.seed = s.seed + i;
        slots[i] = run_scenario(sc);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(jobs, repeat));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  std::vector<RunResult> out;
  for (std::uint32_t i = 0; i < repeat; ++i) {
    if (!errors[i].empty()) throw std::runtime_error("run with seed " + std::to_string(s.seed + i) + ": " + errors[i]);
    out.push_back(std::move(*slots[i]));
  }
  return out;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + p.string());
}

inline std::string summary_text(const workload::Scenario& s, const std::vector<RunResult>& runs,
                                const std::string& hash) {
  std::vector<metrics::RunReport> reports;
  for (const auto& r : runs) reports.push_back(r.report);
  auto stat = [&](auto get) {
    std::vector<double> xs;
    for (const auto& r : reports) xs.push_back(static_cast<double>(get(r)));
    return metrics::mean_std(xs);
  };
  auto line = [](const char* name, metrics::MeanStd m) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "  %-26s %.6g +- %.3g\n", name, m.mean, m.stddev);
    return std::string(buf);
  };
  std::ostringstream o;
  o << "scenario " << s.name << " (hash " << hash << ")\n";
  o << "mode " << nic::to_string(s.nic.mode) << ", " << runs.size() << " run(s), seeds " << s.seed << ".."
    << s.seed + runs.size() - 1 << "\n";
  if (s.nic.mode == nic::Mode::Atfn)
    o << "t_timer " << s.flow_table.t_timer << " ns, max_list_size " << s.flow_table.max_list_size << "\n";
  o << "flows " << reports.front().flows << ", ring " << s.nic.ring_capacity << ", service "
    << s.host.service_pps << " pps\n\n";
  using R = metrics::RunReport;
  o << line("reordering_ratio", stat([](const R& r) { return r.reordering_ratio; }));
  o << line("admitted_fraction", stat([](const R& r) { return r.admitted_fraction; }));
  o << line("flow_affinity", stat([](const R& r) { return r.flow_affinity; }));
  o << line("data_affinity", stat([](const R& r) { return r.data_affinity; }));
  o << line("cross_core_packets", stat([](const R& r) { return r.cross_core_packets; }));
  o << line("alternations", stat([](const R& r) { return r.alternations; }));
  o << line("lock_conflict_events", stat([](const R& r) { return r.lock_conflict_events; }));
  o << line("migrations", stat([](const R& r) { return r.migrations; }));
  o << line("process_context_fraction", stat([](const R& r) { return r.process_context_fraction; }));
  o << line("held_packets", stat([](const R& r) { return r.held_packets; }));
  o << line("held_delay_max_ns", stat([](const R& r) { return r.held_delay_max_ns; }));
  o << line("peak_held_bytes", stat([](const R& r) { return r.peak_held_bytes; }));
  o << line("drops", stat([](const R& r) { return r.drops; }));
  o << line("data_delivered", stat([](const R& r) { return r.data_delivered; }));
  return o.str();
}

// Writes runs.csv, queues.csv, held_delay.csv, aggregate.csv, summary.txt
// and the effective scenario.json. Returns the output directory.
inline std::filesystem::path run(const Invocation& inv, std::ostream& log) {
  const auto base = workload::load_scenario(inv.scenario_path);
  const auto s = apply_overrides(base, inv);
  const std::filesystem::path dir = resolve_out_dir(inv.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw std::runtime_error("cannot create output directory " + dir.string());

  const auto results = run_repeats(s, inv.repeat, inv.jobs);
  const auto hash = workload::scenario_hash(s);

  std::string runs = metrics::run_csv_header();
  std::string queues = "csv_version,seed,queue,core,offered,queued,dropped,flushed,interrupts,max_depth\n";
  std::string held = "csv_version,seed,bin,lo_ns,hi_ns,count\n";
  std::vector<metrics::RunReport> reports;
  for (const auto& r : results) {
    reports.push_back(r.report);
    runs += metrics::run_csv_row(r.report);
    for (const auto& q : r.queues) {
      queues += std::to_string(metrics::kCsvVersion) + "," + std::to_string(r.report.seed) + "," +
                std::to_string(q.queue) + "," + std::to_string(q.core) + "," + std::to_string(q.stats.offered) +
                "," + std::to_string(q.stats.queued) + "," + std::to_string(q.stats.dropped) + "," +
                std::to_string(q.stats.flushed) + "," + std::to_string(q.stats.interrupts) + "," +
                std::to_string(q.stats.max_depth) + "\n";
    }
    const auto& h = r.held_delay;
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      held += std::to_string(metrics::kCsvVersion) + "," + std::to_string(r.report.seed) + "," +
              std::to_string(b) + "," + std::to_string(b * h.bin_width) + "," +
              std::to_string((b + 1) * h.bin_width) + "," + std::to_string(h.counts[b]) + "\n";
    }
  }
  const auto [agg_head, agg_row] = metrics::aggregate_csv(reports, hash);

  write_file(dir / "runs.csv", runs);
  write_file(dir / "queues.csv", queues);
  write_file(dir / "held_delay.csv", held);
  write_file(dir / "aggregate.csv", agg_head + agg_row);
  write_file(dir / "summary.txt", summary_text(s, results, hash));
  write_file(dir / "scenario.json", workload::dump_scenario(s));
  log << summary_text(s, results, hash);
  log << "wrote " << dir.string() << "\n";
  return dir;
}

struct AggregateFile {
  std::string mode;
  std::string hash;
  std::map<std::string, double> values;  // <metric>_mean / <metric>_std
  std::vector<std::string> order;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline AggregateFile read_aggregate(const std::filesystem::path& dir) {
  std::ifstream in(dir / "aggregate.csv");
  if (!in) throw std::runtime_error("no aggregate.csv in " + dir.string());
  std::string head, row;
  std::getline(in, head);
  std::getline(in, row);
  const auto h = split_csv_line(head);
  const auto v = split_csv_line(row);
  if (h.size() != v.size() || h.size() < 5) throw std::runtime_error("malformed aggregate.csv in " + dir.string());
  AggregateFile a;
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (h[i] == "mode") a.mode = v[i];
    else if (h[i] == "scenario_hash") a.hash = v[i];
    else if (h[i].ends_with("_mean") || h[i].ends_with("_std")) {
      a.values[h[i]] = std::stod(v[i]);
      a.order.push_back(h[i]);
    }
  }
  return a;
}

// Per-metric deltas (b - a) of the means, with a direction flag.
inline std::string compare(const std::filesystem::path& a_dir, const std::filesystem::path& b_dir) {
  const auto a = read_aggregate(a_dir);
  const auto b = read_aggregate(b_dir);
  if (a.hash != b.hash)
    throw std::invalid_argument("scenario mismatch: " + a.hash + " vs " + b.hash);
  std::ostringstream o;
  o << "metric,a_mean,b_mean,delta,direction\n";
  for (const auto& key : a.order) {
    if (!key.ends_with("_mean")) continue;
    auto it = b.values.find(key);
    if (it == b.values.end()) continue;
    const double va = a.values.at(key);
    const double vb = it->second;
    const double d = vb - va;
    const char* dir = d > 0 ? "up" : (d < 0 ? "down" : "same");
    o << key.substr(0, key.size() - 5) << "," << metrics::fmt_double(va) << "," << metrics::fmt_double(vb) << ","
      << metrics::fmt_double(d) << "," << dir << "\n";
  }
  return o.str();
}

}  // namespace atfn::cli
