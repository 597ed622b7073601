// Scenario runner: `atfn_sim run <scenario.json>` and `atfn_sim compare A B`.
#include <iostream>

#include "CLI11.hpp"

#include "atfn/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Discrete-event NIC/host simulator for RSS and A-TFN flow steering"};
  app.require_subcommand(1);

  atfn::cli::Invocation inv;
  double t_timer = 0;
  std::size_t max_list = 0;
  std::uint64_t seed = 0;
  double duration = 0;
  std::uint32_t streams = 0;
  std::string mode;

  auto* run = app.add_subcommand("run", "run a scenario and write CSV reports");
  run->add_option("scenario", inv.scenario_path, "scenario JSON file")->required()->check(CLI::ExistingFile);
  auto* o_mode = run->add_option("--mode", mode, "rss | atfn");
  auto* o_tt = run->add_option("--t-timer", t_timer, "transition hold in microseconds");
  auto* o_ml = run->add_option("--max-list-size", max_list, "bucket chain cap");
  auto* o_seed = run->add_option("--seed", seed, "first seed; repeats use seed+1, seed+2, ...");
  auto* o_dur = run->add_option("--duration", duration, "traffic duration in milliseconds");
  auto* o_str = run->add_option("--streams", streams, "streams per app (n)");
  run->add_option("--repeat", inv.repeat, "number of seeds")->check(CLI::PositiveNumber);
  run->add_option("--out", inv.out_dir, "output directory (default $ATFN_OUT_DIR or ./atfn_out)");
  run->add_option("--jobs", inv.jobs, "parallel runs")->check(CLI::PositiveNumber);

  std::string dir_a, dir_b;
  auto* cmp = app.add_subcommand("compare", "diff two run directories of the same scenario");
  cmp->add_option("a", dir_a, "baseline run directory")->required()->check(CLI::ExistingDirectory);
  cmp->add_option("b", dir_b, "other run directory")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      if (*o_mode) inv.mode = mode;
      if (*o_tt) inv.t_timer_us = t_timer;
      if (*o_ml) inv.max_list_size = max_list;
      if (*o_seed) inv.seed = seed;
      if (*o_dur) inv.duration_ms = duration;
      if (*o_str) inv.streams_per_app = streams;
      atfn::cli::run(inv, std::cout);
    } else if (*cmp) {
      std::cout << atfn::cli::compare(dir_a, dir_b);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
