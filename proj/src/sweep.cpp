#include "meshswap/sweep.hpp"

#include "meshswap/report_csv.hpp"
#include "meshswap/scenario.hpp"

#include <spdlog/spdlog.h>

namespace meshswap {

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit needs at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit needs distinct x values");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.slope * x[i] + f.intercept);
    ss_res += r * r;
  }
  f.r2 = syy > 0.0 ? 1.0 - ss_res / syy : (ss_res == 0.0 ? 1.0 : 0.0);
  return f;
}

namespace {

template <int Dp, int Dc>
SweepResult sweep_dims(const RunConfig& c) {
  auto producer = build_producer<Dp>(c, c.sweep_time);
  CouplingOptions opts;
  opts.exchange.threads = c.threads;
  opts.stencil = config_stencil(c);
  opts.shuffle_seed = c.seed;
  opts.reverse = false;
  SweepResult out;
  for (double m : c.sweep_multipliers) {
    auto consumer = build_consumer<Dc>(c, static_cast<int>(m));
    std::uint64_t round = 0;
    couple(producer, consumer, opts, round++);
    SweepRow row;
    row.multiplier = static_cast<int>(m);
    row.consumer_patches = consumer.forest.leaf_count();
    double wall = 0.0;
    for (int k = 0; k < c.sweep_repeats; ++k) {
      const auto rep = couple(producer, consumer, opts, round++);
      wall += rep.exchange.a_to_b.wall_time_seconds;
      row.queries = rep.exchange.a_to_b.queries_sent;
      row.found = rep.exchange.a_to_b.queries_found;
    }
    row.avg_exchange_wall_s = wall / c.sweep_repeats;
    spdlog::info("sweep x{}: {} patches, {} queries, {:.5f} s", row.multiplier, row.consumer_patches, row.queries,
                 row.avg_exchange_wall_s);
    out.rows.push_back(row);
  }
  std::vector<double> x, y;
  for (const auto& r : out.rows) {
    x.push_back(static_cast<double>(r.consumer_patches));
    y.push_back(r.avg_exchange_wall_s);
  }
  out.fit = fit_line(x, y);
  return out;
}

}  // namespace

SweepResult run_sweep(const RunConfig& c) {
  validate(c);
  return dispatch_mode(c.mode, [&](auto dp, auto dc) { return sweep_dims<decltype(dp)::value, decltype(dc)::value>(c); });
}

void write_sweep_csv(std::ostream& out, const SweepResult& result, bool timing) {
  out << sweep_csv_header << '\n';
  for (const auto& r : result.rows) {
    out << r.multiplier << ',' << r.consumer_patches << ',' << r.queries << ',' << r.found << ','
        << format_double(timing ? r.avg_exchange_wall_s : 0.0) << '\n';
  }
}

}  // namespace meshswap
