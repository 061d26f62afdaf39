#pragma once

#include "meshswap/run_config.hpp"

#include <optional>
#include <string>
#include <vector>

namespace meshswap {

enum ExitCode : int { exit_ok = 0, exit_validation = 1, exit_verification = 2 };

struct CliOptions {
  std::optional<std::string> config_path;
  ConfigOverrides overrides;
  bool no_timing = false;
  std::vector<double> multipliers;  // sweep only; empty means the config's list
  std::string inject_fault;         // verify only: "markers"
};

/// Loads the config named by the options, or the defaults when none is given.
RunConfig resolve_config(const CliOptions& opts);

int cmd_run(const CliOptions& opts);
int cmd_sweep(const CliOptions& opts);
int cmd_verify(const CliOptions& opts);

/// Reads MESHSWAP_LOG (trace, debug, info, warn, error, off).
void configure_logging();

}  // namespace meshswap
