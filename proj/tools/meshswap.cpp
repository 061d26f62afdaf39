#include "meshswap/commands.hpp"
#include "meshswap/report_csv.hpp"
#include "meshswap/sweep.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>

using namespace meshswap;

namespace {

std::string schema_help() {
  std::string s = "\nOutputs (all CSV files have a header row):\n";
  s += "  run_report.csv       ";
  s += run_csv_header;
  s += "\n  exchange_report.csv  ";
  s += exchange_csv_header;
  s += "\n  sweep.csv            ";
  s += sweep_csv_header;
  s +=
      "\n  producer_forest.json, consumer_forest.json  final mesh snapshots\n"
      "Counts in run_report.csv and exchange_report.csv sum both exchange directions.\n"
      "Wall-clock columns are 0 with --no-timing or record_wall_times=false.\n"
      "\nEnvironment: MESHSWAP_LOG=trace|debug|info|warn|error|off (default warn)\n"
      "Exit codes: 0 ok, 1 validation or runtime error, 2 verification failure\n";
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Coupled adaptive-mesh exchange over a simulated multi-rank transport"};
  app.require_subcommand(1);
  app.footer(schema_help());

  CliOptions opts;
  std::string config_path, mode, out_dir;
  int ranks = 0;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "flat JSON config with a config_version field")
        ->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (overrides out_dir)");
    sub->add_option("--ranks", ranks, "simulated rank count (overrides ranks)")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "random seed (overrides seed)");
    sub->add_option("--mode", mode, "producer/consumer dimensions")
        ->check(CLI::IsMember({"2d", "3d", "3d-extruded"}));
    sub->add_flag("--no-timing", opts.no_timing, "write 0 in wall-clock columns");
  };

  auto* run = app.add_subcommand("run", "run the coupled scenario and write reports");
  add_common(run);
  auto* sweep = app.add_subcommand("sweep", "time static exchanges for growing consumer patch counts");
  add_common(sweep);
  sweep->add_option("--multipliers", opts.multipliers, "patch-count multipliers (at least 3)");
  auto* verify = app.add_subcommand("verify", "run the oracle suites");
  add_common(verify);
  verify->add_option("--inject-fault", opts.inject_fault, "perturb internals to check the suites fail")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_validation;
  }

  auto fill_overrides = [&](CLI::App* sub) {
    if (!config_path.empty()) opts.config_path = config_path;
    if (sub->count("--out")) opts.overrides.out_dir = out_dir;
    if (sub->count("--ranks")) opts.overrides.ranks = ranks;
    if (sub->count("--seed")) opts.overrides.seed = seed;
    if (sub->count("--mode")) opts.overrides.mode = parse_mode(mode);
  };

  if (run->parsed()) {
    fill_overrides(run);
    return cmd_run(opts);
  }
  if (sweep->parsed()) {
    fill_overrides(sweep);
    return cmd_sweep(opts);
  }
  fill_overrides(verify);
  return cmd_verify(opts);
}
