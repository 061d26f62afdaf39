#pragma once

#include "meshswap/forest.hpp"

#include <json.hpp>

namespace meshswap {

/// Structural snapshot: trees, leaves as (tree, level, coords, cells), rank
/// offsets and markers. Field data is not part of the snapshot.
template <int Dim>
nlohmann::json forest_to_json(const Forest<Dim>& forest) {
  using nlohmann::json;
  json j;
  j["dimension"] = Dim;
  j["rank_count"] = forest.rank_count();
  json trees = json::array();
  for (const auto& t : forest.trees()) {
    trees.push_back({{"id", t.id},
                     {"origin", std::vector<double>(t.origin.data(), t.origin.data() + Dim)},
                     {"extent", std::vector<double>(t.extent.data(), t.extent.data() + Dim)}});
  }
  j["trees"] = std::move(trees);
  json leaves = json::array();
  for (const auto& p : forest.leaves()) {
    leaves.push_back({{"tree", p.tree_id},
                      {"level", p.key.level},
                      {"coords", p.key.coords},
                      {"cells", p.cells}});
  }
  j["leaves"] = std::move(leaves);
  j["rank_offsets"] = forest.rank_offsets();
  json markers = json::array();
  for (const auto& m : forest.markers().first) {
    markers.push_back({{"tree", m.tree}, {"index", m.index}});
  }
  j["markers"] = std::move(markers);
  return j;
}

template <int Dim>
Forest<Dim> forest_from_json(const nlohmann::json& j) {
  if (j.at("dimension").get<int>() != Dim) throw std::invalid_argument("snapshot dimension mismatch");
  std::vector<Tree<Dim>> trees;
  for (const auto& jt : j.at("trees")) {
    Tree<Dim> t;
    t.id = jt.at("id").get<int>();
    const auto origin = jt.at("origin").get<std::vector<double>>();
    const auto extent = jt.at("extent").get<std::vector<double>>();
    if (origin.size() != Dim || extent.size() != Dim) throw std::invalid_argument("tree vector size");
    for (int a = 0; a < Dim; ++a) {
      t.origin[a] = origin[a];
      t.extent[a] = extent[a];
    }
    trees.push_back(t);
  }
  std::vector<Patch<Dim>> leaves;
  for (const auto& jl : j.at("leaves")) {
    Patch<Dim> p;
    p.tree_id = jl.at("tree").get<int>();
    p.key = encode_key<Dim>(jl.at("level").get<int>(),
                            jl.at("coords").get<std::array<std::uint32_t, Dim>>());
    p.cells = jl.at("cells").get<std::array<int, Dim>>();
    leaves.push_back(std::move(p));
  }
  Forest<Dim> f(std::move(trees), std::move(leaves),
                j.at("rank_offsets").get<std::vector<std::size_t>>());
  if (j.contains("markers")) {
    const auto& jm = j.at("markers");
    const auto& mk = f.markers().first;
    if (jm.size() != mk.size()) throw std::invalid_argument("snapshot markers inconsistent");
    for (std::size_t r = 0; r < mk.size(); ++r) {
      if (jm[r].at("tree").get<int>() != mk[r].tree ||
          jm[r].at("index").get<std::uint64_t>() != mk[r].index) {
        throw std::invalid_argument("snapshot markers inconsistent");
      }
    }
  }
  return f;
}

}  // namespace meshswap
