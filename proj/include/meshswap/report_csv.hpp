#pragma once

#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

namespace meshswap {

/// One row per synchronization of a coupled run. Counts cover both
/// exchange directions.
struct RunRow {
  int sync_index = 0;
  double t_sync = 0.0;
  long steps_p = 0;
  long steps_c = 0;
  std::size_t producer_patches = 0;
  std::size_t consumer_patches = 0;
  std::size_t queries = 0;
  std::size_t found = 0;
  std::size_t unmatched = 0;
  std::size_t batches = 0;
  double exchange_wall_s = 0.0;
  double step_wall_p_s = 0.0;
  double step_wall_c_s = 0.0;
};

inline constexpr const char* run_csv_header =
    "sync_index,t_sync,steps_p,steps_c,producer_patches,consumer_patches,queries,found,exchange_wall_s,"
    "step_wall_p_s,step_wall_c_s";
inline constexpr const char* exchange_csv_header = "round,queries_sent,found,unmatched,batches,wall_seconds";

/// With `timing` false every wall-clock column is written as 0.
void write_run_csv(std::ostream& out, const std::vector<RunRow>& rows, bool timing = true);
void write_exchange_csv(std::ostream& out, const std::vector<RunRow>& rows, bool timing = true);

/// Shortest round-trip decimal form of a double.
std::string format_double(double x);

}  // namespace meshswap
