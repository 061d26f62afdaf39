#pragma once

#include "meshswap/morton_key.hpp"

#include <algorithm>
#include <compare>
#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace meshswap {

/// Affine placement of one tree's unit reference cube in physical space.
template <int Dim>
struct Tree {
  int id = 0;
  Vec<Dim> origin = Vec<Dim>::Zero();
  Vec<Dim> extent = Vec<Dim>::Ones();
};

using FieldMap = std::map<std::string, std::vector<double>>;

/// One forest leaf: a uniform grid of cells with named field arrays.
/// Cell (i0, i1, ...) is stored at i0 + cells[0] * (i1 + cells[1] * i2).
template <int Dim>
struct Patch {
  int tree_id = 0;
  MortonKey<Dim> key;
  std::array<int, Dim> cells{};
  FieldMap fields;

  std::size_t cell_count() const {
    std::size_t n = 1;
    for (int c : cells) n *= static_cast<std::size_t>(c);
    return n;
  }

  std::size_t cell_index(const std::array<int, Dim>& idx) const {
    std::size_t lin = 0;
    for (int a = Dim - 1; a >= 0; --a) lin = lin * cells[a] + idx[a];
    return lin;
  }

  std::array<int, Dim> cell_multi_index(std::size_t lin) const {
    std::array<int, Dim> idx{};
    for (int a = 0; a < Dim; ++a) {
      idx[a] = static_cast<int>(lin % cells[a]);
      lin /= cells[a];
    }
    return idx;
  }

  bool has_field(const std::string& name) const { return fields.count(name) != 0; }

  const std::vector<double>& field(const std::string& name) const {
    auto it = fields.find(name);
    if (it == fields.end()) throw std::out_of_range("missing field '" + name + "'");
    return it->second;
  }

  std::vector<double>& field(const std::string& name) {
    auto it = fields.find(name);
    if (it == fields.end()) throw std::out_of_range("missing field '" + name + "'");
    return it->second;
  }

  void set_field(const std::string& name, std::vector<double> values) {
    if (values.size() != cell_count()) {
      throw std::invalid_argument("field '" + name + "' has wrong length");
    }
    fields[name] = std::move(values);
  }
};

/// Global position on the forest's space-filling curve.
struct ForestPosition {
  int tree = 0;
  std::uint64_t index = 0;

  friend auto operator<=>(const ForestPosition&, const ForestPosition&) = default;
};

template <int Dim>
ForestPosition position_of(const Patch<Dim>& p) {
  return {p.tree_id, first_descendant_index(p.key)};
}

/// First curve position owned by each rank, followed by a sentinel
/// (tree count, 0). Rank r owns [first[r], first[r+1]); equal neighbouring
/// entries denote an empty rank.
struct PartitionMarkers {
  std::vector<ForestPosition> first;

  int rank_count() const { return static_cast<int>(first.size()) - 1; }

  /// Owner of a curve position, or -1 past the sentinel.
  int owner_of(const ForestPosition& pos) const {
    if (pos >= first.back()) return -1;
    auto end = first.end() - 1;
    auto it = std::upper_bound(first.begin(), end, pos);
    return static_cast<int>(it - first.begin()) - 1;
  }
};

/// Even split of n leaves into r contiguous ranges: rank i starts at floor(i*n/r).
inline std::vector<std::size_t> count_partition(std::size_t n, int ranks) {
  std::vector<std::size_t> offsets(ranks + 1);
  for (int r = 0; r <= ranks; ++r) {
    offsets[r] = static_cast<std::size_t>((static_cast<unsigned __int128>(n) * r) / ranks);
  }
  return offsets;
}

/// Linear, complete forest of quadtrees/octrees with leaf patches sorted by
/// (tree, curve order) and partitioned into contiguous rank ranges.
template <int Dim>
class Forest {
 public:
  static constexpr int dim = Dim;

  Forest(std::vector<Tree<Dim>> trees, std::vector<Patch<Dim>> leaves, int rank_count)
      : trees_(std::move(trees)), leaves_(std::move(leaves)) {
    if (rank_count < 1) throw std::invalid_argument("rank count must be positive");
    if (static_cast<std::size_t>(rank_count) > leaves_.size()) {
      throw std::invalid_argument("more ranks than leaves");
    }
    validate_structure();
    set_offsets(count_partition(leaves_.size(), rank_count));
  }

  Forest(std::vector<Tree<Dim>> trees, std::vector<Patch<Dim>> leaves,
         std::vector<std::size_t> rank_offsets)
      : trees_(std::move(trees)), leaves_(std::move(leaves)) {
    validate_structure();
    set_offsets(std::move(rank_offsets));
  }

  const std::vector<Tree<Dim>>& trees() const { return trees_; }
  const Tree<Dim>& tree(int id) const { return trees_.at(id); }
  std::span<const Patch<Dim>> leaves() const { return leaves_; }
  std::size_t leaf_count() const { return leaves_.size(); }

  /// Field access only; keys and cell layouts must stay untouched.
  std::span<Patch<Dim>> patches_mut() { return leaves_; }

  int rank_count() const { return static_cast<int>(offsets_.size()) - 1; }
  const std::vector<std::size_t>& rank_offsets() const { return offsets_; }
  std::size_t rank_begin(int r) const { return offsets_.at(r); }
  std::size_t rank_end(int r) const { return offsets_.at(r + 1); }

  std::span<const Patch<Dim>> rank_leaves(int r) const {
    return std::span<const Patch<Dim>>(leaves_).subspan(rank_begin(r), rank_end(r) - rank_begin(r));
  }

  const PartitionMarkers& markers() const { return markers_; }

  int owner_of_leaf(std::size_t i) const {
    auto it = std::upper_bound(offsets_.begin(), offsets_.end(), i);
    return static_cast<int>(it - offsets_.begin()) - 1;
  }

  Forest with_partition(std::vector<std::size_t> offsets) const {
    Forest f = *this;
    f.set_offsets(std::move(offsets));
    return f;
  }

  Forest with_rank_count(int ranks) const {
    if (ranks < 1 || static_cast<std::size_t>(ranks) > leaves_.size()) {
      throw std::invalid_argument("more ranks than leaves");
    }
    return with_partition(count_partition(leaves_.size(), ranks));
  }

 private:
  void validate_structure() const {
    if (trees_.empty()) throw std::invalid_argument("forest needs at least one tree");
    for (std::size_t t = 0; t < trees_.size(); ++t) {
      if (trees_[t].id != static_cast<int>(t)) throw std::invalid_argument("tree ids must be 0..T-1");
      if ((trees_[t].extent.array() <= 0.0).any()) {
        throw std::invalid_argument("tree extent must be positive");
      }
    }
    constexpr std::uint64_t full = std::uint64_t{1} << (Dim * max_level<Dim>);
    std::vector<std::uint64_t> covered(trees_.size(), 0);
    for (std::size_t i = 0; i < leaves_.size(); ++i) {
      const auto& p = leaves_[i];
      if (p.tree_id < 0 || p.tree_id >= static_cast<int>(trees_.size())) {
        throw std::invalid_argument("leaf refers to unknown tree");
      }
      if (!is_valid(p.key)) throw std::invalid_argument("invalid key");
      for (int c : p.cells) {
        if (c < 1) throw std::invalid_argument("patch needs at least one cell per axis");
      }
      for (const auto& [name, values] : p.fields) {
        if (values.size() != p.cell_count()) {
          throw std::invalid_argument("field '" + name + "' has wrong length");
        }
      }
      if (i > 0) {
        const auto& q = leaves_[i - 1];
        const bool ordered = q.tree_id < p.tree_id ||
                             (q.tree_id == p.tree_id &&
                              last_descendant_index(q.key) < first_descendant_index(p.key));
        if (!ordered) throw std::invalid_argument("leaves unsorted or overlapping");
      }
      covered[p.tree_id] += descendant_count(p.key);
    }
    for (auto c : covered) {
      if (c != full) throw std::invalid_argument("leaves do not tile every tree");
    }
  }

  void set_offsets(std::vector<std::size_t> offsets) {
    if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != leaves_.size() ||
        !std::is_sorted(offsets.begin(), offsets.end())) {
      throw std::invalid_argument("invalid rank offsets");
    }
    offsets_ = std::move(offsets);
    markers_.first.clear();
    markers_.first.reserve(offsets_.size());
    const ForestPosition sentinel{static_cast<int>(trees_.size()), 0};
    for (std::size_t r = 0; r + 1 < offsets_.size(); ++r) {
      const std::size_t o = offsets_[r];
      markers_.first.push_back(o < leaves_.size() ? position_of(leaves_[o]) : sentinel);
    }
    markers_.first.push_back(sentinel);
  }

  std::vector<Tree<Dim>> trees_;
  std::vector<Patch<Dim>> leaves_;
  std::vector<std::size_t> offsets_;
  PartitionMarkers markers_;
};

template <int Dim>
using PatchSampler = std::function<void(Patch<Dim>&, const Tree<Dim>&)>;

/// Brick of trees: counts[a] unit-extent trees along axis a, scaled by
/// extent and shifted by origin; tree ids run x-fastest.
template <int Dim>
std::vector<Tree<Dim>> brick_trees(const std::array<int, Dim>& counts, const Vec<Dim>& origin,
                                   const Vec<Dim>& tree_extent) {
  std::vector<Tree<Dim>> trees;
  int total = 1;
  for (int c : counts) {
    if (c < 1) throw std::invalid_argument("brick needs at least one tree per axis");
    total *= c;
  }
  for (int id = 0; id < total; ++id) {
    Tree<Dim> t;
    t.id = id;
    int rest = id;
    for (int a = 0; a < Dim; ++a) {
      t.origin[a] = origin[a] + (rest % counts[a]) * tree_extent[a];
      rest /= counts[a];
    }
    t.extent = tree_extent;
    trees.push_back(t);
  }
  return trees;
}

template <int Dim>
Forest<Dim> build_uniform_forest(std::vector<Tree<Dim>> trees, int level,
                                 const std::array<int, Dim>& cells, int ranks,
                                 const PatchSampler<Dim>& sampler = {}) {
  if (level < 0 || level > max_level<Dim>) throw std::invalid_argument("invalid key");
  if (ranks < 1) throw std::invalid_argument("rank count must be positive");
  const std::uint64_t per_tree = std::uint64_t{1} << (Dim * level);
  if (static_cast<double>(per_tree) * static_cast<double>(trees.size()) > 5e8) {
    throw std::invalid_argument("uniform forest too large");
  }
  if (static_cast<std::uint64_t>(ranks) > per_tree * trees.size()) {
    throw std::invalid_argument("more ranks than leaves");
  }
  std::vector<Patch<Dim>> leaves;
  leaves.reserve(per_tree * trees.size());
  for (const auto& t : trees) {
    for (std::uint64_t m = 0; m < per_tree; ++m) {
      Patch<Dim> p;
      p.tree_id = t.id;
      p.key = MortonKey<Dim>{level, deinterleave<Dim>(m)};
      p.cells = cells;
      if (sampler) sampler(p, t);
      leaves.push_back(std::move(p));
    }
  }
  return Forest<Dim>(std::move(trees), std::move(leaves), ranks);
}

namespace detail {

// Piecewise-constant injection of the parent's fields into child `which`.
template <int Dim>
void inject_fields(const Patch<Dim>& parent, Patch<Dim>& kid, int which) {
  for (const auto& [name, values] : parent.fields) {
    std::vector<double> out(kid.cell_count());
    for (std::size_t lin = 0; lin < out.size(); ++lin) {
      auto idx = kid.cell_multi_index(lin);
      std::array<int, Dim> pidx{};
      for (int a = 0; a < Dim; ++a) {
        const double bit = (which >> a) & 1;
        const double centre = 0.5 * (bit + (idx[a] + 0.5) / kid.cells[a]);
        pidx[a] = std::min(parent.cells[a] - 1, static_cast<int>(centre * parent.cells[a]));
      }
      out[lin] = values[parent.cell_index(pidx)];
    }
    kid.fields[name] = std::move(out);
  }
}

}  // namespace detail

template <int Dim>
struct RefineResult {
  Forest<Dim> forest;
  std::size_t refined = 0;
  std::size_t ignored_at_max_level = 0;
};

/// Replaces every flagged leaf by its 2^Dim children. Children get fields from
/// `sampler` when given, otherwise by injection from the parent. The result
/// is count-partitioned over the same number of ranks.
template <int Dim>
RefineResult<Dim> refine(const Forest<Dim>& forest,
                         const std::function<bool(const Patch<Dim>&)>& predicate,
                         const PatchSampler<Dim>& sampler = {}) {
  std::vector<Patch<Dim>> out;
  out.reserve(forest.leaf_count());
  std::size_t refined = 0;
  std::size_t ignored = 0;
  for (const auto& p : forest.leaves()) {
    if (!predicate(p)) {
      out.push_back(p);
      continue;
    }
    if (p.key.level >= max_level<Dim>) {
      ++ignored;
      out.push_back(p);
      continue;
    }
    ++refined;
    for (int i = 0; i < (1 << Dim); ++i) {
      Patch<Dim> kid;
      kid.tree_id = p.tree_id;
      kid.key = child(p.key, i);
      kid.cells = p.cells;
      if (sampler) {
        sampler(kid, forest.tree(p.tree_id));
      } else {
        detail::inject_fields(p, kid, i);
      }
      out.push_back(std::move(kid));
    }
  }
  const auto ranks = forest.rank_count();
  return {Forest<Dim>(forest.trees(), std::move(out), ranks), refined, ignored};
}

/// Greedy prefix split: rank r starts at the first leaf whose weight prefix
/// sum reaches r * total / R. Falls back to the count split when all
/// weights vanish.
template <int Dim>
Forest<Dim> partition_weighted(const Forest<Dim>& forest,
                               const std::function<double(const Patch<Dim>&)>& weight) {
  const auto leaves = forest.leaves();
  const int ranks = forest.rank_count();
  std::vector<double> prefix(leaves.size() + 1, 0.0);
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    const double w = weight(leaves[i]);
    if (!(w >= 0.0)) throw std::invalid_argument("weights must be non-negative");
    prefix[i + 1] = prefix[i] + w;
  }
  const double total = prefix.back();
  if (total <= 0.0) return forest.with_partition(count_partition(leaves.size(), ranks));

  std::vector<std::size_t> offsets(ranks + 1, 0);
  offsets[ranks] = leaves.size();
  for (int r = 1; r < ranks; ++r) {
    const double target = total * r / ranks;
    auto it = std::lower_bound(prefix.begin(), prefix.end(), target);
    offsets[r] = std::min<std::size_t>(static_cast<std::size_t>(it - prefix.begin()), leaves.size());
    offsets[r] = std::max(offsets[r], offsets[r - 1]);
  }
  return forest.with_partition(std::move(offsets));
}

}  // namespace meshswap
