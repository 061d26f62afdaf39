#pragma once

#include "meshswap/run_config.hpp"

#include <ostream>
#include <vector>

namespace meshswap {

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Ordinary least squares y = slope * x + intercept.
LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

struct SweepRow {
  int multiplier = 1;
  std::size_t consumer_patches = 0;
  std::size_t queries = 0;
  std::size_t found = 0;
  double avg_exchange_wall_s = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  LinearFit fit;  // avg_exchange_wall_s against consumer_patches
};

inline constexpr const char* sweep_csv_header = "multiplier,consumer_patches,queries,found,avg_exchange_wall_s";

/// Static snapshot at config.sweep_time: the producer is built and adapted
/// once, then for every multiplier the consumer box is split into that many
/// times more trees and the consumer-to-producer exchange is timed over
/// config.sweep_repeats rounds after one warm-up round.
SweepResult run_sweep(const RunConfig& config);

void write_sweep_csv(std::ostream& out, const SweepResult& result, bool timing = true);

}  // namespace meshswap
