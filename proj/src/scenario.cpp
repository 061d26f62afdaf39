#include "meshswap/scenario.hpp"

#include "meshswap/forest_json.hpp"

#include <spdlog/spdlog.h>

#include <cmath>

namespace meshswap {

EnuOrigin<double> config_origin(const RunConfig& c) {
  constexpr double deg = std::numbers::pi / 180.0;
  return {c.origin_lat_deg * deg, c.origin_lon_deg * deg, earth_radius_km};
}

PulseParams config_pulse(const RunConfig& c) {
  PulseParams p;
  p.speed = c.pulse_speed_km_s;
  p.width = c.pulse_width_km;
  p.amplitude = c.pulse_amplitude;
  return p;
}

BoundaryStencil config_stencil(const RunConfig& c) {
  return c.interp_stencil == "clamp" ? BoundaryStencil::clamp : BoundaryStencil::extrapolate;
}

RunParams config_params(const RunConfig& c) {
  RunParams rp;
  rp.t_sync = c.t_sync;
  rp.t_end = c.t_end;
  rp.coupling.exchange.threads = c.threads;
  rp.coupling.stencil = config_stencil(c);
  rp.coupling.shuffle_seed = c.seed;
  rp.producer_adapt = {c.producer_max_level, c.producer_refine_tol, c.producer_max_leaves};
  rp.consumer_adapt = {c.consumer_max_level, c.consumer_refine_threshold, c.consumer_max_leaves};
  rp.adapt = c.adapt;
  return rp;
}

namespace {

template <int Dim>
double field_sum(const Forest<Dim>& f, const std::string& name) {
  double s = 0.0;
  for (const auto& p : f.leaves()) {
    for (double v : p.field(name)) s += v;
  }
  return s;
}

template <int Dp, int Dc>
RunOutput run_dims(const RunConfig& c) {
  auto producer = build_producer<Dp>(c, 0.0);
  auto consumer = build_consumer<Dc>(c);
  spdlog::info("mode {}: producer {} patches, consumer {} patches, {} ranks", to_string(c.mode),
               producer.forest.leaf_count(), consumer.forest.leaf_count(), c.ranks);
  RunOutput out;
  const auto records = run_coupled<Dp, Dc>(
      producer, consumer, config_params(c),
      [&](const SyncRecord& r, const ProducerState<Dp>&, const ConsumerState<Dc>&) {
        spdlog::debug("sync {} t={} found {}/{} wall {:.4f}s", r.sync_index, r.t_sync, r.coupling.found(),
                      r.coupling.queries(), r.coupling.wall_seconds());
      });
  for (const auto& r : records) {
    RunRow row;
    row.sync_index = r.sync_index;
    row.t_sync = r.t_sync;
    row.steps_p = r.steps_p;
    row.steps_c = r.steps_c;
    row.producer_patches = r.producer_patches;
    row.consumer_patches = r.consumer_patches;
    row.queries = r.coupling.queries();
    row.found = r.coupling.found();
    row.unmatched = r.coupling.unmatched();
    row.batches = r.coupling.batches();
    row.exchange_wall_s = r.coupling.wall_seconds();
    row.step_wall_p_s = r.step_wall_p;
    row.step_wall_c_s = r.step_wall_c;
    out.rows.push_back(row);
    out.dropped_queries += r.coupling.dropped_forward + r.coupling.dropped_reverse;
  }
  if (out.dropped_queries > 0) spdlog::warn("{} queries dropped by failed coordinate conversion", out.dropped_queries);
  out.producer_json = forest_to_json(producer.forest).dump(1);
  out.consumer_json = forest_to_json(consumer.forest).dump(1);
  out.consumer_rho_sum = field_sum(consumer.forest, "rho_pert");
  out.producer_rate_sum = field_sum(producer.forest, "energy_rate");
  return out;
}

template <int Dp, int Dc>
SnapshotError snapshot_dims(const RunConfig& c, int level, double t) {
  const auto producer = build_producer<Dp>(c, t, level);
  const auto consumer = build_consumer<Dc>(c);
  QueryLists<Dp> queries;
  make_consumer_queries<Dc, Dp>(consumer.forest, consumer.origin, queries, consumer.layers);
  Transport<Dp> transport(c.ranks);
  exchange_one_way<Dp>(producer.forest, queries, default_point_intersect<Dp, Query<Dp>>(producer.forest.trees()),
                       multilinear_interpolator<Dp>({"rho_pert"}, config_stencil(c)), transport);
  SnapshotError e;
  double sq = 0.0;
  for (const auto& list : queries) {
    for (const auto& q : list) {
      if (!q.found) continue;
      const double err = std::abs(q.values[0] - pulse_envelope(producer_point_enu<Dp>(q.coords), t, producer.pulse));
      e.max_abs = std::max(e.max_abs, err);
      sq += err * err;
      ++e.found;
    }
  }
  if (e.found > 0) e.rms = std::sqrt(sq / e.found);
  return e;
}

}  // namespace

RunOutput run_scenario(const RunConfig& c) {
  return dispatch_mode(c.mode, [&](auto dp, auto dc) { return run_dims<decltype(dp)::value, decltype(dc)::value>(c); });
}

SnapshotError snapshot_error(const RunConfig& c, int level, double t) {
  return dispatch_mode(c.mode, [&](auto dp, auto dc) {
    return snapshot_dims<decltype(dp)::value, decltype(dc)::value>(c, level, t);
  });
}

}  // namespace meshswap
