#pragma once

#include "meshswap/coord_transforms.hpp"
#include "meshswap/forest.hpp"

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace meshswap {

/// Decides whether a query may intersect a box of tree `tree`. `is_leaf` is
/// true only when the box belongs to an actual local leaf. Must be monotone:
/// rejecting a box implies rejecting all of its sub-boxes.
template <int Dim, typename Q>
using IntersectCallback = std::function<bool(const Q&, int tree, const Box<Dim>& box, bool is_leaf)>;

struct SearchOptions {
  /// Filter queries with the callback at every visited key. Without
  /// pruning all queries descend until a key is covered by a single rank.
  bool prune = true;
};

/// Query indices routed to each rank; queries rejected everywhere are
/// listed as unmatched.
struct RankAssignment {
  std::vector<std::vector<std::size_t>> per_rank;
  std::vector<std::size_t> unmatched;
  std::size_t visits = 0;
};

struct LocalSearchResult {
  std::size_t matches = 0;
  std::vector<std::size_t> unmatched;
  std::size_t visits = 0;
};

namespace detail {

// Rank owning the largest marker not above pos; empty ranks are skipped
// because their marker equals that of the next rank.
inline int floor_rank(const PartitionMarkers& m, const ForestPosition& pos) {
  auto end = m.first.end() - 1;
  auto it = std::upper_bound(m.first.begin(), end, pos);
  return static_cast<int>(it - m.first.begin()) - 1;
}

template <int Dim, typename Q>
struct PartitionTraversal {
  const PartitionMarkers& markers;
  std::span<const Q> queries;
  const IntersectCallback<Dim, Q>& cb;
  SearchOptions opts;
  RankAssignment& out;
  std::vector<int>& last_rank;

  void assign(std::size_t q, int rank) {
    if (last_rank[q] == rank) return;
    last_rank[q] = rank;
    out.per_rank[rank].push_back(q);
  }

  void visit(int tree, const MortonKey<Dim>& key, int rlo, int rhi,
             const std::vector<std::size_t>& idx) {
    ++out.visits;
    const auto box = key_to_box(key);
    std::vector<std::size_t> sub;
    const bool filter_here = opts.prune || rlo == rhi;
    if (filter_here) {
      sub.reserve(idx.size());
      for (auto i : idx) {
        if (cb(queries[i], tree, box, false)) sub.push_back(i);
      }
      if (sub.empty()) return;
    }
    const auto& active = filter_here ? sub : idx;
    if (rlo == rhi) {
      for (auto i : active) assign(i, rlo);
      return;
    }
    for (int c = 0; c < (1 << Dim); ++c) {
      const auto kid = child(key, c);
      const int lo = floor_rank(markers, {tree, first_descendant_index(kid)});
      const int hi = floor_rank(markers, {tree, last_descendant_index(kid)});
      visit(tree, kid, lo, hi, active);
    }
  }
};

}  // namespace detail

/// Routes queries to owner ranks using only the partition markers: a
/// top-down walk over virtual keys that stops as soon as one rank covers a
/// key's whole descendant range. No leaf data is consulted.
template <int Dim, typename Q>
RankAssignment search_partition(const PartitionMarkers& markers, std::span<const Tree<Dim>> trees,
                                std::span<const Q> queries, const IntersectCallback<Dim, Q>& cb,
                                SearchOptions opts = {}) {
  RankAssignment out;
  out.per_rank.resize(markers.rank_count());
  std::vector<int> last_rank(queries.size(), -1);
  std::vector<std::size_t> all(queries.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  detail::PartitionTraversal<Dim, Q> walk{markers, queries, cb, opts, out, last_rank};
  const MortonKey<Dim> root{};
  for (const auto& t : trees) {
    const int lo = detail::floor_rank(markers, {t.id, first_descendant_index(root)});
    const int hi = detail::floor_rank(markers, {t.id, last_descendant_index(root)});
    walk.visit(t.id, root, lo, hi, all);
  }
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (last_rank[i] < 0) out.unmatched.push_back(i);
  }
  return out;
}

namespace detail {

template <int Dim, typename Q, typename OnLeaf>
struct LocalTraversal {
  std::span<const Patch<Dim>> leaves;
  const std::vector<std::uint64_t>& first_index;
  std::span<const Q> queries;
  const IntersectCallback<Dim, Q>& cb;
  OnLeaf& on_leaf;
  SearchOptions opts;
  std::vector<std::size_t>& hits;
  std::size_t visits = 0;
  std::size_t matches = 0;

  void visit(int tree, const MortonKey<Dim>& key, std::size_t b, std::size_t e,
             const std::vector<std::size_t>& idx) {
    ++visits;
    if (e - b == 1) {
      const auto& leaf = leaves[b];
      const auto box = key_to_box(leaf.key);
      for (auto i : idx) {
        if (cb(queries[i], tree, box, true)) {
          on_leaf(i, b);
          ++hits[i];
          ++matches;
        }
      }
      return;
    }
    std::vector<std::size_t> sub;
    if (opts.prune) {
      const auto box = key_to_box(key);
      sub.reserve(idx.size());
      for (auto i : idx) {
        if (cb(queries[i], tree, box, false)) sub.push_back(i);
      }
      if (sub.empty()) return;
    }
    const auto& active = opts.prune ? sub : idx;
    const auto begin = first_index.begin();
    for (int c = 0; c < (1 << Dim); ++c) {
      const auto kid = child(key, c);
      const auto cb_ = std::lower_bound(begin + b, begin + e, first_descendant_index(kid));
      const auto ce_ = std::upper_bound(cb_, begin + e, last_descendant_index(kid));
      if (cb_ != ce_) {
        visit(tree, kid, static_cast<std::size_t>(cb_ - begin), static_cast<std::size_t>(ce_ - begin),
              active);
      }
    }
  }
};

}  // namespace detail

/// Top-down search of queries in a rank's leaves. on_leaf(query_index,
/// leaf_index_in_span) fires once per intersecting (query, leaf) pair.
template <int Dim, typename Q, typename OnLeaf>
LocalSearchResult search_local(std::span<const Patch<Dim>> local_leaves, std::span<const Q> queries,
                               const IntersectCallback<Dim, Q>& cb, OnLeaf&& on_leaf,
                               SearchOptions opts = {}) {
  LocalSearchResult res;
  std::vector<std::size_t> hits(queries.size(), 0);
  if (!local_leaves.empty() && !queries.empty()) {
    std::vector<std::uint64_t> first_index(local_leaves.size());
    for (std::size_t i = 0; i < local_leaves.size(); ++i) {
      first_index[i] = first_descendant_index(local_leaves[i].key);
    }
    std::vector<std::size_t> all(queries.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    detail::LocalTraversal<Dim, Q, std::remove_reference_t<OnLeaf>> walk{
        local_leaves, first_index, queries, cb, on_leaf, opts, hits};
    std::size_t b = 0;
    while (b < local_leaves.size()) {
      std::size_t e = b;
      const int tree = local_leaves[b].tree_id;
      while (e < local_leaves.size() && local_leaves[e].tree_id == tree) ++e;
      walk.visit(tree, MortonKey<Dim>{}, b, e, all);
      b = e;
    }
    res.matches = walk.matches;
    res.visits = walk.visits;
  }
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (hits[i] == 0) res.unmatched.push_back(i);
  }
  return res;
}

/// Per tree and axis: whether the tree's upper face lies on the domain
/// boundary (no other tree starts there). Such faces are closed so points
/// on the outer boundary still find an owner.
template <int Dim>
std::vector<std::array<bool, Dim>> closed_upper_faces(std::span<const Tree<Dim>> trees) {
  std::vector<std::array<bool, Dim>> closed(trees.size());
  for (std::size_t t = 0; t < trees.size(); ++t) {
    for (int a = 0; a < Dim; ++a) {
      const double face = trees[t].origin[a] + trees[t].extent[a];
      bool neighbour = false;
      for (std::size_t u = 0; u < trees.size() && !neighbour; ++u) {
        if (u == t) continue;
        if (std::abs(trees[u].origin[a] - face) > 1e-12 * trees[t].extent[a]) continue;
        bool overlap = true;
        for (int b = 0; b < Dim; ++b) {
          if (b == a) continue;
          overlap = overlap && trees[u].origin[b] < trees[t].origin[b] + trees[t].extent[b] &&
                    trees[t].origin[b] < trees[u].origin[b] + trees[u].extent[b];
        }
        neighbour = overlap;
      }
      closed[t][a] = !neighbour;
    }
  }
  return closed;
}

/// Half-open membership of a reference point, closing faces at hi == 1
/// where the tree touches the domain boundary.
template <int Dim>
bool box_contains(const Box<Dim>& box, const Vec<Dim>& ref, const std::array<bool, Dim>& closed_upper) {
  for (int a = 0; a < Dim; ++a) {
    if (!(ref[a] >= box.lo[a])) return false;
    if (ref[a] < box.hi[a]) continue;
    if (!(closed_upper[a] && box.hi[a] == 1.0 && ref[a] == 1.0)) return false;
  }
  return true;
}

inline const Vec<2>& point_of(const Vec<2>& p) { return p; }
inline const Vec<3>& point_of(const Vec<3>& p) { return p; }

/// Point-query intersection: maps the query's physical producer-frame
/// coordinates into the tree's reference cube, then tests box membership.
template <int Dim, typename Q>
IntersectCallback<Dim, Q> default_point_intersect(std::span<const Tree<Dim>> trees) {
  std::vector<Tree<Dim>> tree_copy(trees.begin(), trees.end());
  auto closed = closed_upper_faces<Dim>(trees);
  return [tree_copy = std::move(tree_copy), closed = std::move(closed)](
             const Q& q, int tree, const Box<Dim>& box, bool) {
    const Vec<Dim> ref = physical_to_reference<Dim>(point_of(q), tree_copy[tree]);
    return box_contains<Dim>(box, ref, closed[tree]);
  };
}

}  // namespace meshswap
