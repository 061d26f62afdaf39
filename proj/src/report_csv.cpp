#include "meshswap/report_csv.hpp"

#include <charconv>

namespace meshswap {

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

void write_run_csv(std::ostream& out, const std::vector<RunRow>& rows, bool timing) {
  out << run_csv_header << '\n';
  for (const auto& r : rows) {
    out << r.sync_index << ',' << format_double(r.t_sync) << ',' << r.steps_p << ',' << r.steps_c << ','
        << r.producer_patches << ',' << r.consumer_patches << ',' << r.queries << ',' << r.found << ','
        << format_double(timing ? r.exchange_wall_s : 0.0) << ',' << format_double(timing ? r.step_wall_p_s : 0.0)
        << ',' << format_double(timing ? r.step_wall_c_s : 0.0) << '\n';
  }
}

void write_exchange_csv(std::ostream& out, const std::vector<RunRow>& rows, bool timing) {
  out << exchange_csv_header << '\n';
  for (const auto& r : rows) {
    out << r.sync_index << ',' << r.queries << ',' << r.found << ',' << r.unmatched << ',' << r.batches << ','
        << format_double(timing ? r.exchange_wall_s : 0.0) << '\n';
  }
}

}  // namespace meshswap
