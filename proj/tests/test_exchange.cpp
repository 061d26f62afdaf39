#include "meshswap/exchange.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <map>
#include <numbers>
#include <random>
#include <set>

using namespace meshswap;

namespace {

template <int Dim>
double smooth(const Vec<Dim>& x) {
  double s = 0.3;
  for (int a = 0; a < Dim; ++a) s += std::sin(0.7 * x[a] + a) * (1.0 + 0.1 * a);
  return s;
}

template <int Dim>
Forest<Dim> with_fields(Forest<Dim> f) {
  for (auto& p : f.patches_mut()) {
    const auto c = cell_centers(p, f.tree(p.tree_id));
    std::vector<double> a(c.size()), b(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
      a[i] = smooth<Dim>(c[i]);
      b[i] = c[i].sum();
    }
    p.set_field("a", std::move(a));
    p.set_field("b", std::move(b));
  }
  return f;
}

// Queries spread round-robin over the ranks; ids are the point index.
template <int Dim>
QueryLists<Dim> distribute(const std::vector<Vec<Dim>>& pts, int ranks) {
  QueryLists<Dim> out(ranks);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    Query<Dim> q;
    q.id = i;
    q.origin_rank = static_cast<int>(i % ranks);
    q.coords = pts[i];
    q.payload = encode_payload({i * 7 + 1});
    out[q.origin_rank].push_back(std::move(q));
  }
  return out;
}

using Result = std::pair<bool, std::vector<double>>;

template <int Dim>
std::map<std::uint64_t, Result> collect(const QueryLists<Dim>& lists) {
  std::map<std::uint64_t, Result> out;
  for (const auto& l : lists) {
    for (const auto& q : l) {
      REQUIRE(out.emplace(q.id, Result{q.found, q.values}).second);
      REQUIRE(decode_payload(q.payload) == std::vector<std::uint64_t>{q.id * 7 + 1});
    }
  }
  return out;
}

template <int Dim>
std::map<std::uint64_t, Result> run(const Forest<Dim>& f, const std::vector<Vec<Dim>>& pts,
                                    std::optional<std::uint64_t> seed = std::nullopt, int threads = 1,
                                    ExchangeReport* report = nullptr) {
  auto lists = distribute(pts, f.rank_count());
  Transport<Dim> t(f.rank_count(), seed);
  const auto rep = exchange_one_way<Dim>(f, lists, default_point_intersect<Dim, Query<Dim>>(f.trees()),
                                         multilinear_interpolator<Dim>({"a", "b"}), t, {threads, false});
  if (report) *report = rep;
  return collect(lists);
}

// Serial reference: brute-force locate, then the same interpolation call.
template <int Dim>
std::map<std::uint64_t, Result> serial_reference(const Forest<Dim>& f, const std::vector<Vec<Dim>>& pts) {
  const testing::LeafTable<Dim> table(f);
  const auto interp = multilinear_interpolator<Dim>({"a", "b"});
  std::map<std::uint64_t, Result> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto hits = table.scan(pts[i]);
    REQUIRE(hits.size() <= 1);
    if (hits.empty()) {
      out[i] = {false, {}};
      continue;
    }
    const auto& leaf = f.leaves()[hits[0]];
    Query<Dim> q;
    q.coords = pts[i];
    out[i] = {true, interp(q, leaf, f.tree(leaf.tree_id))};
  }
  return out;
}

template <int Dim>
std::map<std::uint64_t, std::vector<double>> collect_values(const QueryLists<Dim>& lists) {
  std::map<std::uint64_t, std::vector<double>> out;
  for (const auto& l : lists) {
    for (const auto& q : l) out[q.id] = q.values;
  }
  return out;
}

}  // namespace

TEST_CASE("single rank, single leaf") {
  const auto f = with_fields(build_uniform_forest<2>({Tree<2>{0, Vec<2>(0, 0), Vec<2>(4, 4)}}, 0, {4, 4}, 1));
  const std::vector<Vec<2>> pts{Vec<2>(1.3, 2.2), Vec<2>(5.0, 1.0)};
  ExchangeReport rep;
  const auto res = run(f, pts, std::nullopt, 1, &rep);
  CHECK(res.at(0).first);
  Query<2> q;
  q.coords = pts[0];
  CHECK(res.at(0).second == multilinear_interpolator<2>({"a", "b"})(q, f.leaves()[0], f.tree(0)));
  CHECK_FALSE(res.at(1).first);
  CHECK(res.at(1).second.empty());
  CHECK(rep.queries_sent == 2);
  CHECK(rep.queries_found == 1);
  CHECK(rep.queries_unmatched == 1);
  CHECK(rep.routed_missed == 0);
  CHECK(rep.batches_posted == 2);
}

TEST_CASE("random 2D forest with 16 ranks matches the serial reference") {
  std::mt19937_64 rng(11);
  auto f = testing::random_forest<2>(rng, 2500, 16, true, {3, 2});
  f = with_fields(f.with_rank_count(16));
  const auto pts = testing::random_points<2>(rng, f, 10000, 0.02);
  ExchangeReport rep;
  const auto res = run(f, pts, std::nullopt, 1, &rep);
  CHECK(res == serial_reference(f, pts));
  CHECK(rep.queries_sent == 10000);
  CHECK(rep.queries_found + rep.queries_unmatched == 10000);
  CHECK(rep.batches_posted <= 2u * 16u * 16u);
  std::size_t received = 0;
  for (const auto& s : rep.per_rank) received += s.received;
  // Point queries go to exactly one producer rank.
  CHECK(received == rep.queries_found);
}

TEST_CASE_TEMPLATE("results do not depend on rank count, delivery order or threads", T,
                   std::integral_constant<int, 2>, std::integral_constant<int, 3>) {
  constexpr int D = T::value;
  std::mt19937_64 rng(20 + D);
  const auto base = with_fields(testing::random_forest<D>(rng, 1500, 1, false));
  const auto pts = testing::random_points<D>(rng, base, 4000, 0.05);
  const auto reference = run(base, pts);
  for (int ranks : {1, 2, 7, 16}) {
    const auto f = base.with_rank_count(ranks);
    CHECK(run(f, pts) == reference);
    CHECK(run(f, pts, 1234u + ranks) == reference);
    CHECK(run(f, pts, 99u, 4) == reference);
  }
}

TEST_CASE("ambiguous ownership and routed misses are reported") {
  const auto f = with_fields(build_uniform_forest<2>({Tree<2>{}}, 2, {2, 2}, 3));
  QueryLists<2> lists(3);
  lists[0].push_back({0, 0, Vec<2>(0.5, 0.5), {}, false, {}});
  const auto interp = multilinear_interpolator<2>({"a"});

  // Closed boxes break the half-open rule: the point sits on four leaves.
  const IntersectCallback<2, Query<2>> closed = [](const Query<2>& q, int, const Box<2>& b, bool) {
    return (q.coords.array() >= b.lo.array()).all() && (q.coords.array() <= b.hi.array()).all();
  };
  Transport<2> t1(3);
  CHECK_THROWS_WITH(exchange_one_way<2>(f, lists, closed, interp, t1), "ambiguous ownership");

  // Rejecting at leaf level only: routed, then never found.
  const auto point = default_point_intersect<2, Query<2>>(f.trees());
  const IntersectCallback<2, Query<2>> no_leaf = [&](const Query<2>& q, int tree, const Box<2>& b,
                                                     bool is_leaf) { return !is_leaf && point(q, tree, b, false); };
  Transport<2> t2(3);
  CHECK_THROWS_WITH(exchange_one_way<2>(f, lists, no_leaf, interp, t2), "routed query not found on owner rank");
  Transport<2> t3(3);
  const auto rep = exchange_one_way<2>(f, lists, no_leaf, interp, t3, {1, true});
  CHECK(rep.routed_missed == 1);
  CHECK_FALSE(lists[0][0].found);

  lists[1].push_back({0, 1, Vec<2>(0.1, 0.1), {}, false, {}});
  lists[1].push_back({0, 1, Vec<2>(0.2, 0.1), {}, false, {}});
  Transport<2> t4(3);
  CHECK_THROWS_WITH(exchange_one_way<2>(f, lists, point, interp, t4), "duplicate query id");
}

TEST_CASE("mailbox delivers every batch exactly once") {
  Mailbox<int> box(4, 5u);
  for (int i = 0; i < 100; ++i) box.post(i % 4, i);
  std::vector<int> got;
  for (int r = 0; r < 4; ++r) {
    for (int v : box.drain(r)) got.push_back(v);
  }
  std::sort(got.begin(), got.end());
  std::vector<int> want(100);
  std::iota(want.begin(), want.end(), 0);
  CHECK(got == want);
  CHECK(box.posted() == 100);
  CHECK(box.delivered() == 100);
  CHECK_NOTHROW(box.check_quiescent());
  box.post(2, 7);
  CHECK_THROWS_WITH(box.check_quiescent(), "transport lost or undelivered batches");
}

TEST_CASE("two-way self-coupling returns each mesh's own values") {
  std::mt19937_64 rng(31);
  const auto a = with_fields(testing::random_forest<3>(rng, 400, 5, true, {3, 2, 2}));
  const auto b = a;
  const auto identity = [](const Vec<3>& x, int) -> std::optional<Vec<3>> { return x; };
  QueryLists<3> qa, qb;
  CHECK(make_cell_queries<3, 3>(a, 1, identity, qa).created == a.leaf_count() * 12);
  make_cell_queries<3, 3>(b, 1, identity, qb);
  const ExchangeDirection<3> ab{&a, &qb, default_point_intersect<3, Query<3>>(a.trees()),
                                multilinear_interpolator<3>({"a", "b"}, BoundaryStencil::extrapolate)};
  const ExchangeDirection<3> ba{&b, &qa, default_point_intersect<3, Query<3>>(b.trees()),
                                multilinear_interpolator<3>({"a", "b"}, BoundaryStencil::extrapolate)};

  auto check_own = [](const Forest<3>& mesh, const QueryLists<3>& lists) {
    double worst = 0.0;
    std::size_t n = 0;
    for (const auto& l : lists) {
      for (const auto& q : l) {
        REQUIRE(q.found);
        const auto slot = decode_cell_slot(q.payload);
        const auto& p = mesh.leaves()[slot.leaf];
        for (int k = 0; k < 2; ++k) {
          const double own = p.field(k == 0 ? "a" : "b")[slot.cell];
          worst = std::max(worst, std::abs(q.values[k] - own) / std::max(1.0, std::abs(own)));
        }
        ++n;
      }
    }
    CHECK(n == mesh.leaf_count() * 12);
    CHECK(worst < 1e-12);
  };

  Transport<3> ta(a.rank_count()), tb(b.rank_count());
  const auto rep = exchange_two_way<3, 3>(ab, ba, ta, tb);
  CHECK(rep.a_to_b.queries_found == rep.a_to_b.queries_sent);
  CHECK(rep.b_to_a.queries_found == rep.b_to_a.queries_sent);
  check_own(b, qb);
  check_own(a, qa);
  const auto first_a = collect_values(qa);
  const auto first_b = collect_values(qb);

  Transport<3> ta2(a.rank_count(), 3u), tb2(b.rank_count(), 4u);
  exchange_two_way<3, 3>(ab, ba, ta2, tb2, {}, true);
  CHECK(collect_values(qa) == first_a);
  CHECK(collect_values(qb) == first_b);

  // An empty second direction leaves a plain one-way exchange.
  QueryLists<3> none(a.rank_count());
  const ExchangeDirection<3> ba_empty{&b, &none, ba.intersect, ba.interpolate};
  Transport<3> ta3(a.rank_count()), tb3(b.rank_count());
  const auto rep3 = exchange_two_way<3, 3>(ab, ba_empty, ta3, tb3);
  CHECK(rep3.b_to_a.queries_sent == 0);
  CHECK(rep3.b_to_a.batches_posted == 0);
  CHECK(collect_values(qb) == first_b);
}

TEST_CASE("consumer cell queries") {
  // One dipole patch with 8 x 16 x 1 cells above an equatorial ENU origin.
  const EnuOrigin<double> o{0.0, 0.0, earth_radius_km};
  const auto lo = spherical_to_dipole<double>({earth_radius_km + 500, std::numbers::pi / 2 - 0.01, -0.01});
  const auto hi = spherical_to_dipole<double>({earth_radius_km + 200, std::numbers::pi / 2 + 0.01, 0.01});
  const Tree<3> t{0, Vec<3>(std::min(lo.q, hi.q), std::min(lo.p, hi.p), lo.lambda),
                  Vec<3>(std::abs(hi.q - lo.q), std::abs(hi.p - lo.p), hi.lambda - lo.lambda)};
  const auto consumer = build_uniform_forest<3>({t}, 0, {8, 16, 1}, 1);
  QueryLists<3> lists;
  const auto stats = make_consumer_queries<3, 3>(consumer, o, lists);
  CHECK(stats.created == 128);
  CHECK(stats.dropped == 0);
  REQUIRE(lists[0].size() == 128);
  const auto centres = cell_centers(consumer.leaves()[0], t);
  for (const auto& q : lists[0]) {
    const auto slot = decode_cell_slot(q.payload);
    CHECK(slot.leaf == 0);
    CHECK(slot.layer == 0);
    CHECK(q.id == slot.cell);
    const auto& c = centres[slot.cell];
    CHECK(q.coords == dipole_to_enu<double>({c[0], c[1], c[2]}, o).enu);
  }

  // 2D consumer, extruded in lambda: payload carries the layer.
  const Tree<2> t2{0, t.origin.head<2>(), t.extent.head<2>()};
  const auto flat = build_uniform_forest<2>({t2}, 1, {8, 16}, 2);
  QueryLists<3> l2;
  const ExtrusionLayers layers{3, -0.01, 0.01};
  CHECK(make_consumer_queries<2, 3>(flat, o, l2, layers).created == 4 * 128 * 3);
  std::set<std::uint64_t> ids;
  for (const auto& l : l2) {
    for (const auto& q : l) {
      const auto s = decode_cell_slot(q.payload);
      CHECK(q.id == (s.leaf * 128 + s.cell) * 3 + s.layer);
      ids.insert(q.id);
    }
  }
  CHECK(ids.size() == 4 * 128 * 3);

  // Producer frame in 2D is (horizontal distance, up).
  QueryLists<2> l3;
  make_consumer_queries<3, 2>(consumer, o, l3);
  for (std::size_t i = 0; i < l3[0].size(); ++i) {
    CHECK(l3[0][i].coords[0] == std::hypot(lists[0][i].coords[0], lists[0][i].coords[1]));
    CHECK(l3[0][i].coords[1] == lists[0][i].coords[2]);
  }

  // Points on the dipole axis cannot be converted and are dropped.
  const Tree<3> bad{0, Vec<3>(0.2, -1.0, 0.0), Vec<3>(0.1, 0.5, 0.1)};
  QueryLists<3> l4;
  const auto s4 = make_consumer_queries<3, 3>(build_uniform_forest<3>({bad}, 0, {2, 2, 1}, 1), o, l4);
  CHECK(s4.created == 0);
  CHECK(s4.dropped == 4);
}

TEST_CASE("filled results land in their payload slot under shuffled delivery") {
  std::mt19937_64 rng(41);
  auto producer = with_fields(testing::random_forest<3>(rng, 800, 1, false, {2, 2, 2}).with_rank_count(6));
  auto consumer = testing::random_forest<3>(rng, 300, 1, false, {4, 4, 2}).with_rank_count(6);
  // Query the consumer's cell centers in the producer's frame.
  QueryLists<3> q1, q2;
  const auto identity = [](const Vec<3>& x, int) -> std::optional<Vec<3>> { return x; };
  make_cell_queries<3, 3>(consumer, 1, identity, q1);
  q2 = q1;
  for (auto& l : q2) std::shuffle(l.begin(), l.end(), rng);
  const auto cb = default_point_intersect<3, Query<3>>(producer.trees());
  const auto interp = multilinear_interpolator<3>({"a", "b"});
  Transport<3> t1(6), t2(6, 77u);
  exchange_one_way<3>(producer, q1, cb, interp, t1);
  exchange_one_way<3>(producer, q2, cb, interp, t2);

  auto by_slot = [&](const QueryLists<3>& lists) {
    std::map<std::pair<std::uint64_t, std::uint64_t>, std::vector<double>> out;
    for (const auto& l : lists) {
      for (const auto& q : l) {
        const auto s = decode_cell_slot(q.payload);
        const auto centre = cell_centers(consumer.leaves()[s.leaf], consumer.tree(consumer.leaves()[s.leaf].tree_id))[s.cell];
        CHECK(q.coords == centre);
        out[{s.leaf, s.cell}] = q.values;
      }
    }
    return out;
  };
  CHECK(by_slot(q1) == by_slot(q2));
}
