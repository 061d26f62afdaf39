#pragma once

#include "meshswap/coord_transforms.hpp"
#include "meshswap/forest.hpp"
#include "meshswap/partition_search.hpp"
#include "meshswap/patch_interp.hpp"
#include "meshswap/transport.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <exception>
#include <functional>
#include <optional>
#include <stdexcept>
#include <thread>
#include <unordered_map>
#include <vector>

namespace meshswap {

/// Opaque point record issued by the consumer. `coords` are already in the
/// producer's physical frame; `payload` is consumer bookkeeping that
/// travels with the query untouched.
template <int Dim>
struct Query {
  std::uint64_t id = 0;
  int origin_rank = 0;
  Vec<Dim> coords = Vec<Dim>::Zero();
  std::vector<std::uint8_t> payload;
  bool found = false;
  std::vector<double> values;
};

template <int Dim>
const Vec<Dim>& point_of(const Query<Dim>& q) {
  return q.coords;
}

template <int Dim>
using QueryLists = std::vector<std::vector<Query<Dim>>>;

inline std::vector<std::uint8_t> encode_payload(std::initializer_list<std::uint64_t> words) {
  std::vector<std::uint8_t> bytes(words.size() * sizeof(std::uint64_t));
  std::size_t off = 0;
  for (auto w : words) {
    std::memcpy(bytes.data() + off, &w, sizeof w);
    off += sizeof w;
  }
  return bytes;
}

inline std::vector<std::uint64_t> decode_payload(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() % sizeof(std::uint64_t) != 0) throw std::invalid_argument("malformed payload");
  std::vector<std::uint64_t> words(bytes.size() / sizeof(std::uint64_t));
  std::memcpy(words.data(), bytes.data(), bytes.size());
  return words;
}

template <int Dim>
struct QueryBatch {
  int origin = 0;
  int dest = 0;
  std::vector<Query<Dim>> entries;
};

struct ReplyRecord {
  std::uint64_t id = 0;
  bool found = false;
  std::vector<double> values;
};

struct ReplyBatch {
  int origin = 0;  // producer rank that answered
  int dest = 0;    // rank the queries came from
  std::vector<ReplyRecord> entries;
};

template <int Dim>
struct Transport {
  Mailbox<QueryBatch<Dim>> queries;
  Mailbox<ReplyBatch> replies;

  explicit Transport(int ranks, std::optional<std::uint64_t> shuffle_seed = std::nullopt)
      : queries(ranks, shuffle_seed),
        replies(ranks, shuffle_seed ? std::optional<std::uint64_t>(*shuffle_seed + 1) : std::nullopt) {}
};

struct RankStats {
  std::size_t originated = 0;
  std::size_t found = 0;
  std::size_t unmatched = 0;
  std::size_t received = 0;  // queries searched on this rank as producer
  std::size_t matched = 0;
  std::size_t batches_out = 0;
};

struct ExchangeReport {
  std::size_t queries_sent = 0;
  std::size_t queries_found = 0;
  std::size_t queries_unmatched = 0;
  std::size_t routed_missed = 0;
  std::size_t batches_posted = 0;
  double wall_time_seconds = 0.0;
  std::vector<RankStats> per_rank;
};

/// Supplies data for a query found in a leaf patch.
template <int Dim>
using InterpolateCallback =
    std::function<std::vector<double>(const Query<Dim>&, const Patch<Dim>&, const Tree<Dim>&)>;

struct ExchangeOptions {
  int threads = 1;
  /// Queries routed to a rank but not found there indicate inconsistent
  /// markers or a non-monotone callback; treated as an error by default.
  bool allow_routed_misses = false;
};

namespace detail {

inline void for_each_rank(int ranks, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || ranks <= 1) {
    for (int r = 0; r < ranks; ++r) fn(r);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(ranks);
  std::vector<std::thread> pool;
  const int n = std::min(threads, ranks);
  for (int w = 0; w < n; ++w) {
    pool.emplace_back([&] {
      for (int r = next++; r < ranks; r = next++) {
        try {
          fn(r);
        } catch (...) {
          errors[r] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace detail

/// One-way exchange: partition search on every origin rank, batched query
/// routing, local search and interpolation on the owner, batched replies
/// written back into the origin queries. Producer and consumer share the
/// same R logical ranks.
template <int Dim>
ExchangeReport exchange_one_way(const Forest<Dim>& producer, QueryLists<Dim>& queries,
                                const IntersectCallback<Dim, Query<Dim>>& cb,
                                const InterpolateCallback<Dim>& interp, Transport<Dim>& transport,
                                const ExchangeOptions& opts = {}) {
  const int ranks = producer.rank_count();
  if (static_cast<int>(queries.size()) != ranks || transport.queries.rank_count() != ranks) {
    throw std::invalid_argument("producer, queries and transport must span the same ranks");
  }
  const auto start = std::chrono::steady_clock::now();
  ExchangeReport report;
  report.per_rank.resize(ranks);
  const std::span<const Tree<Dim>> trees(producer.trees());
  const auto& markers = producer.markers();

  for (auto& list : queries) {
    for (auto& q : list) {
      q.found = false;
      q.values.clear();
    }
  }

  // Origin side: route by markers only and post one batch per destination.
  detail::for_each_rank(ranks, opts.threads, [&](int r) {
    auto& local = queries[r];
    auto& stats = report.per_rank[r];
    stats.originated = local.size();
    const auto assignment = search_partition<Dim, Query<Dim>>(markers, trees, local, cb);
    stats.unmatched = assignment.unmatched.size();
    for (int dest = 0; dest < ranks; ++dest) {
      const auto& ids = assignment.per_rank[dest];
      if (ids.empty()) continue;
      QueryBatch<Dim> batch{r, dest, {}};
      batch.entries.reserve(ids.size());
      for (auto i : ids) {
        Query<Dim> q;
        q.id = local[i].id;
        q.origin_rank = r;
        q.coords = local[i].coords;
        q.payload = local[i].payload;
        batch.entries.push_back(std::move(q));
      }
      transport.queries.post(dest, std::move(batch));
      ++stats.batches_out;
    }
  });

  // Owner side: local search, interpolation, one reply batch per sender.
  detail::for_each_rank(ranks, opts.threads, [&](int d) {
    auto& stats = report.per_rank[d];
    const auto local_leaves = producer.rank_leaves(d);
    for (auto& batch : transport.queries.drain(d)) {
      stats.received += batch.entries.size();
      ReplyBatch reply{d, batch.origin, {}};
      std::vector<std::vector<ReplyRecord>> found(batch.entries.size());
      const std::span<const Query<Dim>> entries(batch.entries);
      auto on_leaf = [&](std::size_t qi, std::size_t li) {
        const auto& leaf = local_leaves[li];
        found[qi].push_back({entries[qi].id, true, interp(entries[qi], leaf, producer.tree(leaf.tree_id))});
      };
      const auto res = search_local<Dim, Query<Dim>>(local_leaves, entries, cb, on_leaf);
      stats.matched += res.matches;
      reply.entries.reserve(entries.size());
      for (std::size_t i = 0; i < entries.size(); ++i) {
        if (found[i].empty()) {
          reply.entries.push_back({entries[i].id, false, {}});
        } else {
          for (auto& rec : found[i]) reply.entries.push_back(std::move(rec));
        }
      }
      transport.replies.post(batch.origin, std::move(reply));
      ++stats.batches_out;
    }
  });

  // Origin side: write results by id.
  std::vector<std::size_t> missed(ranks, 0);
  detail::for_each_rank(ranks, opts.threads, [&](int r) {
    auto& local = queries[r];
    std::unordered_map<std::uint64_t, std::size_t> slot;
    slot.reserve(local.size());
    for (std::size_t i = 0; i < local.size(); ++i) {
      if (!slot.emplace(local[i].id, i).second) throw std::invalid_argument("duplicate query id");
    }
    for (auto& batch : transport.replies.drain(r)) {
      for (auto& rec : batch.entries) {
        auto it = slot.find(rec.id);
        if (it == slot.end()) throw std::runtime_error("reply for unknown query id");
        auto& q = local[it->second];
        if (!rec.found) {
          ++missed[r];
          continue;
        }
        if (q.found) throw std::runtime_error("ambiguous ownership");
        q.found = true;
        q.values = std::move(rec.values);
        ++report.per_rank[r].found;
      }
    }
  });

  transport.queries.check_quiescent();
  transport.replies.check_quiescent();

  for (int r = 0; r < ranks; ++r) {
    const auto& s = report.per_rank[r];
    report.queries_sent += s.originated;
    report.queries_found += s.found;
    report.queries_unmatched += s.unmatched;
    report.routed_missed += missed[r];
    report.batches_posted += s.batches_out;
  }
  if (report.queries_sent != report.queries_found + report.queries_unmatched + report.routed_missed) {
    throw std::logic_error("exchange accounting mismatch");
  }
  if (report.routed_missed != 0 && !opts.allow_routed_misses) {
    throw std::logic_error("routed query not found on owner rank");
  }
  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

/// Inputs of one exchange direction.
template <int Dim>
struct ExchangeDirection {
  const Forest<Dim>* producer = nullptr;
  QueryLists<Dim>* queries = nullptr;
  IntersectCallback<Dim, Query<Dim>> intersect;
  InterpolateCallback<Dim> interpolate;
};

struct TwoWayReport {
  ExchangeReport a_to_b;
  ExchangeReport b_to_a;
};

/// Exchange from A into B's queries, then the same routine with the roles
/// swapped. `reverse_order` runs the B to A direction first.
template <int DimA, int DimB>
TwoWayReport exchange_two_way(const ExchangeDirection<DimA>& a_to_b, const ExchangeDirection<DimB>& b_to_a,
                              Transport<DimA>& transport_a, Transport<DimB>& transport_b,
                              const ExchangeOptions& opts = {}, bool reverse_order = false) {
  TwoWayReport out;
  auto forward = [&] {
    out.a_to_b = exchange_one_way<DimA>(*a_to_b.producer, *a_to_b.queries, a_to_b.intersect,
                                        a_to_b.interpolate, transport_a, opts);
  };
  auto backward = [&] {
    out.b_to_a = exchange_one_way<DimB>(*b_to_a.producer, *b_to_a.queries, b_to_a.intersect,
                                        b_to_a.interpolate, transport_b, opts);
  };
  if (reverse_order) {
    backward();
    forward();
  } else {
    forward();
    backward();
  }
  return out;
}

/// Default leaf interpolation: map the query into the leaf's reference
/// box, locate it in cell-center index space, interpolate `fields`.
template <int Dim>
InterpolateCallback<Dim> multilinear_interpolator(std::vector<std::string> fields,
                                                  BoundaryStencil stencil = BoundaryStencil::clamp) {
  return [fields = std::move(fields), stencil](const Query<Dim>& q, const Patch<Dim>& patch,
                                               const Tree<Dim>& tree) {
    const auto ref = physical_to_reference<Dim>(q.coords, tree);
    return interpolate_multilinear<Dim>(patch, locate_in_patch<Dim>(ref, patch, stencil), fields);
  };
}

/// Decoded consumer payload of a cell-center query.
struct CellSlot {
  std::uint64_t leaf = 0;
  std::uint64_t cell = 0;
  std::uint64_t layer = 0;
};

inline CellSlot decode_cell_slot(const std::vector<std::uint8_t>& payload) {
  const auto w = decode_payload(payload);
  if (w.size() != 3) throw std::invalid_argument("malformed payload");
  return {w[0], w[1], w[2]};
}

struct CellQueries {
  std::size_t created = 0;
  std::size_t dropped = 0;
};

/// One query per (cell, layer) of every leaf, issued by the leaf's owner
/// rank. `map` turns a physical cell center plus layer index into producer
/// coordinates, or nullopt when the conversion is undefined (dropped and
/// counted). Query ids are (global leaf, cell, layer) linearized.
template <int SrcDim, int DstDim>
CellQueries make_cell_queries(
    const Forest<SrcDim>& source, int layers,
    const std::function<std::optional<Vec<DstDim>>(const Vec<SrcDim>&, int layer)>& map,
    QueryLists<DstDim>& out) {
  CellQueries stats;
  out.assign(source.rank_count(), {});
  const auto leaves = source.leaves();
  std::uint64_t next_base = 0;
  std::vector<std::uint64_t> base(leaves.size());
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    base[i] = next_base;
    next_base += leaves[i].cell_count() * static_cast<std::uint64_t>(layers);
  }
  for (int r = 0; r < source.rank_count(); ++r) {
    auto& list = out[r];
    for (std::size_t li = source.rank_begin(r); li < source.rank_end(r); ++li) {
      const auto& patch = leaves[li];
      const auto centres = cell_centers(patch, source.tree(patch.tree_id));
      for (std::size_t c = 0; c < centres.size(); ++c) {
        for (int k = 0; k < layers; ++k) {
          auto coords = map(centres[c], k);
          if (!coords) {
            ++stats.dropped;
            continue;
          }
          Query<DstDim> q;
          q.id = base[li] + c * layers + k;
          q.origin_rank = r;
          q.coords = *coords;
          q.payload = encode_payload({li, c, static_cast<std::uint64_t>(k)});
          list.push_back(std::move(q));
          ++stats.created;
        }
      }
    }
  }
  return stats;
}

/// Consumer meshes live in dipole coordinates: (q, p, lambda) in 3D, or
/// (q, p) in 2D with lambda supplied per extrusion layer.
template <int ConsumerDim>
DipolePoint<double> consumer_to_dipole(const Vec<ConsumerDim>& x, double layer_lambda) {
  if constexpr (ConsumerDim == 3) {
    return {x[0], x[1], x[2]};
  } else {
    return {x[0], x[1], layer_lambda};
  }
}

/// Producer frames: 2D is (horizontal distance, up) about the tangent-plane
/// origin, 3D is plain (east, north, up).
template <int ProducerDim>
Vec<ProducerDim> enu_to_producer(const EnuPoint<double>& e) {
  if constexpr (ProducerDim == 3) {
    return e.enu;
  } else {
    return Vec<2>(std::hypot(e.enu.x(), e.enu.y()), e.enu.z());
  }
}

struct ExtrusionLayers {
  int count = 1;
  double lambda_lo = 0.0;
  double lambda_hi = 0.0;

  double lambda(int k) const { return lambda_lo + (k + 0.5) / count * (lambda_hi - lambda_lo); }
};

/// Cell-center queries of a dipole-coordinate consumer converted through
/// dipole -> spherical ECEF -> Cartesian ECEF -> ENU into the producer frame.
template <int ConsumerDim, int ProducerDim>
CellQueries make_consumer_queries(const Forest<ConsumerDim>& consumer, const EnuOrigin<double>& origin,
                                  QueryLists<ProducerDim>& out, ExtrusionLayers layers = {}) {
  const int count = ConsumerDim == 3 ? 1 : layers.count;
  return make_cell_queries<ConsumerDim, ProducerDim>(
      consumer, count,
      [&](const Vec<ConsumerDim>& x, int k) -> std::optional<Vec<ProducerDim>> {
        try {
          const auto enu = dipole_to_enu(consumer_to_dipole<ConsumerDim>(x, layers.lambda(k)), origin);
          return enu_to_producer<ProducerDim>(enu);
        } catch (const std::domain_error&) {
          return std::nullopt;
        }
      },
      out);
}

}  // namespace meshswap
