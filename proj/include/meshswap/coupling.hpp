#pragma once

// Desk-scale producer (tangent-plane ENU forest driven by an analytic pulse)
// and consumer (dipole-coordinate forest) with the time-threshold sync loop.

#include "meshswap/exchange.hpp"
#include "meshswap/pulse.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace meshswap {

inline const std::vector<std::string>& perturbation_fields() {
  static const std::vector<std::string> names{"rho_pert", "mom_e", "mom_n", "mom_u", "energy_pert"};
  return names;
}

inline const std::vector<std::string>& rate_fields() {
  static const std::vector<std::string> names{"energy_rate", "mom_rate_e", "mom_rate_n", "mom_rate_u"};
  return names;
}

/// Producer coordinates as an ENU point. 2D producers are axisymmetric
/// (horizontal distance, up) and placed in the east-up plane.
template <int Dp>
Vector3<double> producer_point_enu(const Vec<Dp>& x) {
  if constexpr (Dp == 3) {
    return x;
  } else {
    return Vector3<double>(x[0], 0.0, x[1]);
  }
}

/// Brick of n^Dp trees over 400 km per axis by default: 2D covers radius
/// and altitude from 0, 3D is centered horizontally on the ENU origin.
template <int Dp>
std::vector<Tree<Dp>> producer_trees(int per_axis, double extent_km) {
  std::array<int, Dp> counts{};
  counts.fill(per_axis);
  Vec<Dp> origin = Vec<Dp>::Zero();
  if constexpr (Dp == 3) origin = Vec<3>(-0.5 * extent_km, -0.5 * extent_km, 0.0);
  return brick_trees<Dp>(counts, origin, Vec<Dp>::Constant(extent_km / per_axis));
}

struct DipoleBox {
  Vector3<double> lo;
  Vector3<double> hi;
};

/// Bounds in (q, p, lambda) of the ENU block |e|, |n| <= half_width,
/// alt_lo <= u <= alt_hi, sampled on a regular grid.
inline DipoleBox dipole_bounds(const EnuOrigin<double>& o, double alt_lo, double alt_hi, double half_width,
                               int samples = 9) {
  DipoleBox b{Vector3<double>::Constant(1e300), Vector3<double>::Constant(-1e300)};
  for (int i = 0; i < samples; ++i) {
    for (int j = 0; j < samples; ++j) {
      for (int k = 0; k < samples; ++k) {
        const double s = static_cast<double>(samples - 1);
        const Vector3<double> e(-half_width + 2 * half_width * i / s, -half_width + 2 * half_width * j / s,
                                alt_lo + (alt_hi - alt_lo) * k / s);
        const auto d = enu_to_dipole<double>({e}, o);
        const Vector3<double> v(d.q, d.p, d.lambda);
        b.lo = b.lo.cwiseMin(v);
        b.hi = b.hi.cwiseMax(v);
      }
    }
  }
  return b;
}

/// Consumer trees tiling the dipole box: (q, p, lambda) in 3D, (q, p) in 2D.
template <int Dc>
std::vector<Tree<Dc>> consumer_trees(const DipoleBox& box, const std::array<int, Dc>& counts) {
  const Vec<Dc> lo = box.lo.head<Dc>();
  Vec<Dc> ext;
  for (int a = 0; a < Dc; ++a) ext[a] = (box.hi[a] - box.lo[a]) / counts[a];
  return brick_trees<Dc>(counts, lo, ext);
}

template <int Dp>
struct ProducerState {
  Forest<Dp> forest;
  PulseParams pulse;
  double t0 = 0.0;
  double dt = 1.0;
  long steps = 0;
  int base_level = 0;  // adaptation restarts from this uniform level

  double time() const { return t0 + static_cast<double>(steps) * dt; }
};

template <int Dc>
struct ConsumerState {
  Forest<Dc> forest;
  EnuOrigin<double> origin{};
  ExtrusionLayers layers{};
  double t0 = 0.0;
  double dt = 1.0;
  long steps = 0;
  double gain = 1e-3;  // source rate per unit received perturbation

  double time() const { return t0 + static_cast<double>(steps) * dt; }
};

template <int Dp>
void sample_pulse(Patch<Dp>& patch, const Tree<Dp>& tree, double t, const PulseParams& pulse) {
  const auto centres = cell_centers(patch, tree);
  const std::size_t n = centres.size();
  std::vector<double> rho(n), me(n), mn(n), mu(n), en(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = pulse_field(producer_point_enu<Dp>(centres[i]), t, pulse);
    rho[i] = v.rho;
    me[i] = v.mom.x();
    mn[i] = v.mom.y();
    mu[i] = v.mom.z();
    en[i] = v.energy;
  }
  patch.set_field("rho_pert", std::move(rho));
  patch.set_field("mom_e", std::move(me));
  patch.set_field("mom_n", std::move(mn));
  patch.set_field("mom_u", std::move(mu));
  patch.set_field("energy_pert", std::move(en));
}

template <int Dim>
void zero_fields(Patch<Dim>& patch, const std::vector<std::string>& names) {
  for (const auto& n : names) {
    if (!patch.has_field(n)) patch.set_field(n, std::vector<double>(patch.cell_count(), 0.0));
  }
}

template <int Dp>
void resample(ProducerState<Dp>& s) {
  const double t = s.time();
  for (auto& p : s.forest.patches_mut()) sample_pulse(p, s.forest.tree(p.tree_id), t, s.pulse);
}

template <int Dp>
ProducerState<Dp> make_producer(std::vector<Tree<Dp>> trees, int level, const std::array<int, Dp>& cells,
                                int ranks, const PulseParams& pulse, double dt, double t0 = 0.0) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  auto sampler = [&](Patch<Dp>& p, const Tree<Dp>& t) {
    sample_pulse(p, t, t0, pulse);
    zero_fields(p, rate_fields());
  };
  return {build_uniform_forest<Dp>(std::move(trees), level, cells, ranks, sampler), pulse, t0, dt, 0, level};
}

template <int Dc>
ConsumerState<Dc> make_consumer(std::vector<Tree<Dc>> trees, int level, const std::array<int, Dc>& cells,
                                int ranks, const EnuOrigin<double>& origin, ExtrusionLayers layers, double dt,
                                double gain = 1e-3, double t0 = 0.0) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  auto sampler = [](Patch<Dc>& p, const Tree<Dc>&) {
    zero_fields(p, perturbation_fields());
    zero_fields(p, rate_fields());
  };
  return {build_uniform_forest<Dc>(std::move(trees), level, cells, ranks, sampler), origin, layers, t0, dt, 0,
          gain};
}

/// Advances the producer by n steps and resamples the analytic fields.
template <int Dp>
void step(ProducerState<Dp>& s, long n) {
  if (n < 1) throw std::invalid_argument("step count must be positive");
  s.steps += n;
  resample(s);
}

/// Advances the consumer by n steps; source rates follow the last
/// received perturbations.
template <int Dc>
void step(ConsumerState<Dc>& s, long n) {
  if (n < 1) throw std::invalid_argument("step count must be positive");
  s.steps += n;
  const auto& rates = rate_fields();
  for (auto& p : s.forest.patches_mut()) {
    const std::string from[] = {"energy_pert", "mom_e", "mom_n", "mom_u"};
    for (std::size_t k = 0; k < rates.size(); ++k) {
      auto v = p.field(from[k]);
      for (auto& x : v) x *= s.gain;
      p.set_field(rates[k], std::move(v));
    }
  }
}

struct AdaptLimits {
  int max_level = 6;
  double threshold = 0.0;
  std::size_t max_leaves = 20000;
};

template <int Dp>
double max_pulse_gradient(const Patch<Dp>& p, const Tree<Dp>& tree, double t, const PulseParams& pulse) {
  double g = 0.0;
  for (const auto& c : cell_centers(p, tree)) g = std::max(g, pulse_gradient_norm(producer_point_enu<Dp>(c), t, pulse));
  return g;
}

/// Copies `names` from the old mesh onto the cells of the new one: every
/// new cell center takes the value of the old cell containing it.
template <int Dim>
void transfer_fields(const Forest<Dim>& from, Forest<Dim>& to, const std::vector<std::string>& names) {
  std::vector<Vec<Dim>> pts;
  std::vector<std::pair<std::size_t, std::size_t>> slot;
  auto patches = to.patches_mut();
  for (std::size_t li = 0; li < patches.size(); ++li) {
    const auto c = cell_centers(patches[li], to.tree(patches[li].tree_id));
    for (std::size_t k = 0; k < c.size(); ++k) {
      pts.push_back(c[k]);
      slot.emplace_back(li, k);
    }
    for (const auto& n : names) patches[li].set_field(n, std::vector<double>(patches[li].cell_count(), 0.0));
  }
  const auto old = from.leaves();
  const auto cb = default_point_intersect<Dim, Vec<Dim>>(from.trees());
  search_local<Dim, Vec<Dim>>(old, pts, cb, [&](std::size_t qi, std::size_t oi) {
    const auto& src = old[oi];
    const auto box = key_to_box(src.key);
    const Vec<Dim> ref = physical_to_reference<Dim>(pts[qi], from.tree(src.tree_id));
    std::array<int, Dim> idx{};
    for (int a = 0; a < Dim; ++a) {
      const double rel = (ref[a] - box.lo[a]) / (box.hi[a] - box.lo[a]);
      idx[a] = std::clamp(static_cast<int>(std::floor(rel * src.cells[a])), 0, src.cells[a] - 1);
    }
    const auto [li, k] = slot[qi];
    for (const auto& n : names) patches[li].fields[n][k] = src.field(n)[src.cell_index(idx)];
  });
}

/// Rebuilds the mesh from the base level, refining pass by pass where the
/// cell-center envelope gradient exceeds the threshold, up to max_level and
/// the leaf cap. Leaves behind the shell therefore coarsen again. Pulse
/// fields are resampled, received rates carried over, and the result is
/// rebalanced by cell count. Returns the number of refined leaves.
template <int Dp>
std::size_t adapt_producer(ProducerState<Dp>& s, const AdaptLimits& lim) {
  if (!(lim.threshold > 0.0)) throw std::invalid_argument("refinement tolerance must be positive");
  const auto& old = s.forest;
  auto forest = build_uniform_forest<Dp>(old.trees(), s.base_level, old.leaves()[0].cells, old.rank_count());
  std::size_t total = 0;
  const double t = s.time();
  for (int pass = 0; pass <= max_level<Dp>; ++pass) {
    const std::size_t n = forest.leaf_count();
    if (n >= lim.max_leaves) break;
    std::size_t budget = (lim.max_leaves - n) / ((1u << Dp) - 1);
    if (budget == 0) break;
    auto pred = [&](const Patch<Dp>& p) {
      if (budget == 0 || p.key.level >= lim.max_level) return false;
      if (max_pulse_gradient(p, forest.tree(p.tree_id), t, s.pulse) <= lim.threshold) return false;
      --budget;
      return true;
    };
    auto res = refine<Dp>(forest, pred);
    if (res.refined == 0) break;
    total += res.refined;
    forest = std::move(res.forest);
  }
  transfer_fields<Dp>(old, forest, rate_fields());
  s.forest = partition_weighted<Dp>(forest, [](const Patch<Dp>& p) { return static_cast<double>(p.cell_count()); });
  resample(s);
  return total;
}

/// One refinement pass over leaves whose received |rho_pert| exceeds the
/// threshold. Children inherit the received values by injection.
template <int Dc>
std::size_t adapt_consumer(ConsumerState<Dc>& s, const AdaptLimits& lim) {
  const std::size_t n = s.forest.leaf_count();
  if (n >= lim.max_leaves) return 0;
  std::size_t budget = (lim.max_leaves - n) / ((1u << Dc) - 1);
  auto pred = [&](const Patch<Dc>& p) {
    if (budget == 0 || p.key.level >= lim.max_level) return false;
    double m = 0.0;
    for (double v : p.field("rho_pert")) m = std::max(m, std::abs(v));
    if (m <= lim.threshold) return false;
    --budget;
    return true;
  };
  auto res = refine<Dc>(s.forest, pred);
  if (res.refined > 0) s.forest = std::move(res.forest);
  return res.refined;
}

/// Producer cell center in consumer coordinates, or nullopt where the
/// dipole map is undefined or the point lies outside the extruded range.
template <int Dp, int Dc>
std::optional<Vec<Dc>> producer_to_consumer(const Vec<Dp>& x, const EnuOrigin<double>& origin,
                                            const ExtrusionLayers& layers) {
  DipolePoint<double> d;
  try {
    d = enu_to_dipole<double>({producer_point_enu<Dp>(x)}, origin);
  } catch (const std::domain_error&) {
    return std::nullopt;
  }
  if constexpr (Dc == 3) {
    return Vec<3>(d.q, d.p, d.lambda);
  } else {
    if (d.lambda < layers.lambda_lo || d.lambda > layers.lambda_hi) return std::nullopt;
    return Vec<2>(d.q, d.p);
  }
}

struct CouplingOptions {
  ExchangeOptions exchange{};
  BoundaryStencil stencil = BoundaryStencil::extrapolate;
  std::optional<std::uint64_t> shuffle_seed{};
  bool reverse = true;  // also send rates from consumer to producer
};

struct CouplingReport {
  TwoWayReport exchange;
  std::size_t dropped_forward = 0;
  std::size_t dropped_reverse = 0;

  double wall_seconds() const { return exchange.a_to_b.wall_time_seconds + exchange.b_to_a.wall_time_seconds; }
  std::size_t queries() const { return exchange.a_to_b.queries_sent + exchange.b_to_a.queries_sent; }
  std::size_t found() const { return exchange.a_to_b.queries_found + exchange.b_to_a.queries_found; }
  std::size_t unmatched() const { return exchange.a_to_b.queries_unmatched + exchange.b_to_a.queries_unmatched; }
  std::size_t batches() const { return exchange.a_to_b.batches_posted + exchange.b_to_a.batches_posted; }
};

/// Writes found consumer queries back by payload slot, averaging over
/// extrusion layers. Cells without any found layer keep their values.
template <int Dc, int Dp>
void apply_to_consumer(ConsumerState<Dc>& c, const QueryLists<Dp>& lists) {
  const auto& names = perturbation_fields();
  auto patches = c.forest.patches_mut();
  std::vector<std::vector<double>> sum(patches.size());
  std::vector<std::vector<int>> count(patches.size());
  for (const auto& l : lists) {
    for (const auto& q : l) {
      if (!q.found) continue;
      const auto s = decode_cell_slot(q.payload);
      auto& acc = sum[s.leaf];
      if (acc.empty()) {
        acc.assign(patches[s.leaf].cell_count() * names.size(), 0.0);
        count[s.leaf].assign(patches[s.leaf].cell_count(), 0);
      }
      for (std::size_t k = 0; k < names.size(); ++k) acc[s.cell * names.size() + k] += q.values[k];
      ++count[s.leaf][s.cell];
    }
  }
  for (std::size_t li = 0; li < patches.size(); ++li) {
    if (sum[li].empty()) continue;
    auto& p = patches[li];
    for (std::size_t k = 0; k < names.size(); ++k) {
      auto v = p.field(names[k]);
      for (std::size_t cell = 0; cell < v.size(); ++cell) {
        if (count[li][cell] > 0) v[cell] = sum[li][cell * names.size() + k] / count[li][cell];
      }
      p.set_field(names[k], std::move(v));
    }
  }
}

template <int Dp, int Dc>
void apply_to_producer(ProducerState<Dp>& s, const QueryLists<Dc>& lists) {
  const auto& names = rate_fields();
  auto patches = s.forest.patches_mut();
  for (const auto& l : lists) {
    for (const auto& q : l) {
      if (!q.found) continue;
      const auto slot = decode_cell_slot(q.payload);
      auto& p = patches[slot.leaf];
      for (std::size_t k = 0; k < names.size(); ++k) {
        auto it = p.fields.find(names[k]);
        if (it == p.fields.end()) throw std::out_of_range("missing field '" + names[k] + "'");
        it->second[slot.cell] = q.values[k];
      }
    }
  }
}

/// Consumer cell centers searched in the producer, then (optionally)
/// producer cell centers searched in the consumer.
template <int Dp, int Dc>
CouplingReport couple(ProducerState<Dp>& p, ConsumerState<Dc>& c, const CouplingOptions& opts,
                      std::uint64_t round = 0) {
  const int ranks = p.forest.rank_count();
  if (c.forest.rank_count() != ranks) throw std::invalid_argument("producer and consumer rank counts differ");
  CouplingReport out;
  QueryLists<Dp> consumer_queries;
  out.dropped_forward = make_consumer_queries<Dc, Dp>(c.forest, c.origin, consumer_queries, c.layers).dropped;
  QueryLists<Dc> producer_queries(ranks);
  if (opts.reverse) {
    const auto origin = c.origin;
    const auto layers = c.layers;
    out.dropped_reverse =
        make_cell_queries<Dp, Dc>(
            p.forest, 1,
            [&](const Vec<Dp>& x, int) { return producer_to_consumer<Dp, Dc>(x, origin, layers); },
            producer_queries)
            .dropped;
  }
  const ExchangeDirection<Dp> forward{&p.forest, &consumer_queries,
                                      default_point_intersect<Dp, Query<Dp>>(p.forest.trees()),
                                      multilinear_interpolator<Dp>(perturbation_fields(), opts.stencil)};
  const ExchangeDirection<Dc> backward{&c.forest, &producer_queries,
                                       default_point_intersect<Dc, Query<Dc>>(c.forest.trees()),
                                       multilinear_interpolator<Dc>(rate_fields(), opts.stencil)};
  std::optional<std::uint64_t> seed_a, seed_b;
  if (opts.shuffle_seed) {
    seed_a = *opts.shuffle_seed + 4 * round;
    seed_b = *opts.shuffle_seed + 4 * round + 2;
  }
  Transport<Dp> ta(ranks, seed_a);
  Transport<Dc> tb(ranks, seed_b);
  out.exchange = exchange_two_way<Dp, Dc>(forward, backward, ta, tb, opts.exchange);
  apply_to_consumer(c, consumer_queries);
  apply_to_producer(p, producer_queries);
  return out;
}

/// Sync times are integer multiples of the period.
struct SyncPolicy {
  double period = 1.0;
  int completed = 0;

  double next() const { return (completed + 1) * period; }
  void advance() { ++completed; }
};

struct RunParams {
  double t_sync = 10.0;
  double t_end = 100.0;
  CouplingOptions coupling{};
  AdaptLimits producer_adapt{6, 5e-3, 20000};
  AdaptLimits consumer_adapt{3, 0.05, 20000};
  bool adapt = true;
};

struct SyncRecord {
  int sync_index = 0;
  double t_sync = 0.0;
  long steps_p = 0;
  long steps_c = 0;
  std::size_t producer_patches = 0;
  std::size_t consumer_patches = 0;
  CouplingReport coupling;
  double step_wall_p = 0.0;
  double step_wall_c = 0.0;
};

/// Steps needed to reach `target`, allowing a relative slack of 1e-9 dt.
inline long steps_to_reach(double t0, long steps, double dt, double target) {
  long n = 0;
  while (t0 + static_cast<double>(steps + n) * dt < target - 1e-9 * dt) ++n;
  return n;
}

inline int sync_count(double t_end, double t_sync) { return static_cast<int>(std::floor(t_end / t_sync + 1e-9)); }

template <int Dp, int Dc>
using SyncObserver = std::function<void(const SyncRecord&, const ProducerState<Dp>&, const ConsumerState<Dc>&)>;

/// Both solvers step until they pass the next sync time, then one two-way
/// exchange runs and both meshes adapt.
template <int Dp, int Dc>
std::vector<SyncRecord> run_coupled(ProducerState<Dp>& p, ConsumerState<Dc>& c, const RunParams& rp,
                                    const SyncObserver<Dp, Dc>& observer = {}) {
  if (!(rp.t_end > 0.0)) throw std::invalid_argument("t_end must be positive");
  if (!(rp.t_sync > 0.0)) throw std::invalid_argument("t_sync must be positive");
  using clock = std::chrono::steady_clock;
  SyncPolicy sync{rp.t_sync};
  const int total = sync_count(rp.t_end, rp.t_sync);
  std::vector<SyncRecord> out;
  out.reserve(total);
  for (int k = 1; k <= total; ++k) {
    SyncRecord rec;
    rec.sync_index = k;
    rec.t_sync = sync.next();

    auto t0 = clock::now();
    rec.steps_p = steps_to_reach(p.t0, p.steps, p.dt, rec.t_sync);
    if (rec.steps_p > 0) step(p, rec.steps_p);
    rec.step_wall_p = std::chrono::duration<double>(clock::now() - t0).count();

    t0 = clock::now();
    rec.steps_c = steps_to_reach(c.t0, c.steps, c.dt, rec.t_sync);
    if (rec.steps_c > 0) step(c, rec.steps_c);
    rec.step_wall_c = std::chrono::duration<double>(clock::now() - t0).count();

    rec.producer_patches = p.forest.leaf_count();
    rec.consumer_patches = c.forest.leaf_count();
    rec.coupling = couple(p, c, rp.coupling, static_cast<std::uint64_t>(k));
    if (rp.adapt) {
      adapt_producer(p, rp.producer_adapt);
      adapt_consumer(c, rp.consumer_adapt);
    }
    sync.advance();
    if (observer) observer(rec, p, c);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace meshswap
