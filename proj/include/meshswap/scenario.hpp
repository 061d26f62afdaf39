#pragma once

#include "meshswap/coupling.hpp"
#include "meshswap/report_csv.hpp"
#include "meshswap/run_config.hpp"

#include <numbers>
#include <string>
#include <type_traits>
#include <vector>

namespace meshswap {

EnuOrigin<double> config_origin(const RunConfig& c);
PulseParams config_pulse(const RunConfig& c);
BoundaryStencil config_stencil(const RunConfig& c);
RunParams config_params(const RunConfig& c);

/// Calls f(integral_constant<Dp>, integral_constant<Dc>) for the mode's
/// producer and consumer dimensions.
template <typename F>
decltype(auto) dispatch_mode(Mode m, F&& f) {
  using I2 = std::integral_constant<int, 2>;
  using I3 = std::integral_constant<int, 3>;
  switch (m) {
    case Mode::two_d:
      return f(I2{}, I3{});
    case Mode::three_d:
      return f(I3{}, I3{});
    default:
      return f(I3{}, I2{});
  }
}

/// Producer at time t0. With `uniform_level` set the mesh is uniform at that
/// level and not adapted.
template <int Dp>
ProducerState<Dp> build_producer(const RunConfig& c, double t0, std::optional<int> uniform_level = std::nullopt) {
  std::array<int, Dp> cells{};
  cells.fill(c.producer_cells);
  auto state = make_producer<Dp>(producer_trees<Dp>(c.producer_trees, c.producer_extent_km),
                                 uniform_level.value_or(c.producer_base_level), cells, c.ranks, config_pulse(c),
                                 c.dt_p, t0);
  if (!uniform_level && c.adapt) adapt_producer(state, config_params(c).producer_adapt);
  return state;
}

/// Consumer over the configured dipole box; `multiplier` splits the
/// lambda axis (q for a 2D consumer) into that many times more trees.
template <int Dc>
ConsumerState<Dc> build_consumer(const RunConfig& c, int multiplier = 1) {
  const auto origin = config_origin(c);
  const auto box = dipole_bounds(origin, c.consumer_alt_min_km, c.consumer_alt_max_km, c.consumer_half_width_km);
  if constexpr (Dc == 3) {
    return make_consumer<3>(
        consumer_trees<3>(box, {c.consumer_trees_q, c.consumer_trees_p, c.consumer_trees_lambda * multiplier}),
        c.consumer_base_level, {c.consumer_cells_q, c.consumer_cells_p, 1}, c.ranks, origin, {}, c.dt_c,
        c.coupling_gain);
  } else {
    const ExtrusionLayers layers{c.extrusion_layers, box.lo[2], box.hi[2]};
    return make_consumer<2>(consumer_trees<2>(box, {c.consumer_trees_q * multiplier, c.consumer_trees_p}),
                            c.consumer_base_level, {c.consumer_cells_q, c.consumer_cells_p}, c.ranks, origin,
                            layers, c.dt_c, c.coupling_gain);
  }
}

struct RunOutput {
  std::vector<RunRow> rows;
  std::string producer_json;
  std::string consumer_json;
  double consumer_rho_sum = 0.0;     // sum of received rho_pert over all consumer cells
  double producer_rate_sum = 0.0;    // sum of received energy_rate over all producer cells
  std::size_t dropped_queries = 0;
};

RunOutput run_scenario(const RunConfig& c);

/// Received-field error of one consumer-side exchange against the analytic
/// pulse, for a uniform producer at `level` frozen at time t.
struct SnapshotError {
  double max_abs = 0.0;
  double rms = 0.0;
  std::size_t found = 0;
};

SnapshotError snapshot_error(const RunConfig& c, int level, double t);

}  // namespace meshswap
