#include "meshswap/patch_interp.hpp"

#include <doctest.h>

#include <random>

using namespace meshswap;

namespace {

template <int Dim>
Patch<Dim> make_patch(MortonKey<Dim> key, std::array<int, Dim> cells) {
  Patch<Dim> p;
  p.key = key;
  p.cells = cells;
  return p;
}

template <int Dim, typename F>
void sample(Patch<Dim>& p, const Tree<Dim>& t, const std::string& name, F f) {
  const auto centres = cell_centers(p, t);
  std::vector<double> v(centres.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(centres[i]);
  p.set_field(name, std::move(v));
}

}  // namespace

TEST_CASE("cell_centers") {
  const Tree<2> unit{};
  auto one = make_patch<2>({}, {1, 1});
  const auto c1 = cell_centers(one, unit);
  REQUIRE(c1.size() == 1);
  CHECK(c1[0] == Vec<2>(0.5, 0.5));

  auto four = make_patch<2>({}, {2, 2});
  const auto c4 = cell_centers(four, unit);
  REQUIRE(c4.size() == 4);
  CHECK(c4[0] == Vec<2>(0.25, 0.25));
  CHECK(c4[1] == Vec<2>(0.75, 0.25));
  CHECK(c4[2] == Vec<2>(0.25, 0.75));
  CHECK(c4[3] == Vec<2>(0.75, 0.75));

  auto consumer = make_patch<3>(encode_key<3>(2, {1, 2, 3}), {8, 16, 1});
  CHECK(cell_centers(consumer, Tree<3>{}).size() == 128);

  const Tree<2> shifted{0, Vec<2>(100, -50), Vec<2>(400, 200)};
  const auto cs = cell_centers(make_patch<2>(encode_key<2>(1, {1, 0}), {2, 1}), shifted);
  CHECK(cs[0] == Vec<2>(100 + 400 * 0.625, -50 + 200 * 0.25));
}

TEST_CASE("locate_in_patch") {
  auto p = make_patch<2>(encode_key<2>(1, {1, 1}), {4, 3});
  const auto centre = locate_in_patch<2>(Vec<2>(0.75, 0.75), p);
  CHECK(centre.frac[0] == doctest::Approx(1.5));
  CHECK(centre.frac[1] == doctest::Approx(1.0));
  const auto corner = locate_in_patch<2>(Vec<2>(0.5, 0.5), p);
  CHECK(corner.frac[0] == 0.0);
  CHECK(corner.frac[1] == 0.0);
  // Midway between the first two cell centers along x: 0.5 + (0.5 + 1.5)/2 * h_cell.
  const auto mid = locate_in_patch<2>(Vec<2>(0.5 + 1.0 * 0.125, 0.7), p);
  CHECK(mid.frac[0] == doctest::Approx(0.5));
  CHECK_THROWS_WITH_AS(locate_in_patch<2>(Vec<2>(0.2, 0.7), p), "not owning patch", std::out_of_range);

  const auto ext = locate_in_patch<2>(Vec<2>(0.5, 1.0), p, BoundaryStencil::extrapolate);
  CHECK(ext.frac[0] == doctest::Approx(-0.5));
  CHECK(ext.frac[1] == doctest::Approx(2.5));
}

TEST_CASE("multilinear interpolation") {
  const Tree<2> t{0, Vec<2>(-3, 2), Vec<2>(5, 7)};
  auto p = make_patch<2>(encode_key<2>(2, {1, 2}), {5, 4});
  sample<2>(p, t, "c", [](const Vec<2>&) { return 2.7182818; });
  sample<2>(p, t, "lin", [](const Vec<2>& x) { return x[0] + x[1]; });
  const std::vector<std::string> both{"c", "lin"};

  const auto centres = cell_centers(p, t);
  for (std::size_t i = 0; i < centres.size(); ++i) {
    const auto loc = locate_in_patch<2>(physical_to_reference<2>(centres[i], t), p);
    const auto v = interpolate_multilinear<2>(p, loc, both);
    CHECK(v[0] == 2.7182818);
    CHECK(v[1] == p.field("lin")[i]);
  }

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto box = key_to_box(p.key);
  for (int i = 0; i < 1000; ++i) {
    // Interior: inside the hull of cell centers.
    Vec<2> ref;
    for (int a = 0; a < 2; ++a) {
      const double h = (box.hi[a] - box.lo[a]) / p.cells[a];
      ref[a] = box.lo[a] + 0.5 * h + u(rng) * (p.cells[a] - 1) * h;
    }
    const auto x = reference_to_physical<2>(ref, t);
    const auto v = interpolate_multilinear<2>(p, locate_in_patch<2>(ref, p), both);
    CHECK(v[0] == 2.7182818);
    CHECK(v[1] == doctest::Approx(x[0] + x[1]).epsilon(1e-13));
  }

  CHECK_THROWS_WITH_AS(interpolate_multilinear<2>(p, locate_in_patch<2>(box.lo, p), std::vector<std::string>{"rho"}),
                       "missing field 'rho'", std::out_of_range);
}

TEST_CASE("trilinear exactness, boundedness and extrapolation") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0), c(-2.0, 2.0);
  const Tree<3> t{0, Vec<3>(0, 0, 0), Vec<3>(400, 400, 400)};
  double worst_rel = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    auto p = make_patch<3>(encode_key<3>(3, {static_cast<std::uint32_t>(rng() % 8), 3, 5}),
                           {2 + static_cast<int>(rng() % 5), 2 + static_cast<int>(rng() % 5), 2});
    double k[8];
    for (auto& x : k) x = c(rng);
    auto f = [&](const Vec<3>& x) {
      return k[0] + k[1] * x[0] + k[2] * x[1] + k[3] * x[2] + k[4] * x[0] * x[1] + k[5] * x[1] * x[2] +
             k[6] * x[0] * x[2] + k[7] * x[0] * x[1] * x[2] * 1e-4;
    };
    sample<3>(p, t, "f", f);
    sample<3>(p, t, "noise", [&](const Vec<3>&) { return c(rng); });
    const auto box = key_to_box(p.key);
    for (int i = 0; i < 200; ++i) {
      Vec<3> ref_interior, ref_any;
      for (int a = 0; a < 3; ++a) {
        const double h = (box.hi[a] - box.lo[a]) / p.cells[a];
        ref_interior[a] = box.lo[a] + 0.5 * h + u(rng) * (p.cells[a] - 1) * h;
        ref_any[a] = box.lo[a] + u(rng) * (box.hi[a] - box.lo[a]);
      }
      const Vec<3> x = reference_to_physical<3>(ref_interior, t);
      const double got = interpolate_multilinear<3>(p.field("f"), p, locate_in_patch<3>(ref_interior, p));
      worst_rel = std::max(worst_rel, std::abs(got - f(x)) / std::max(1.0, std::abs(f(x))));

      // Linear extrapolation keeps multilinear fields exact up to the box faces.
      const Vec<3> xa = reference_to_physical<3>(ref_any, t);
      const double ext =
          interpolate_multilinear<3>(p.field("f"), p, locate_in_patch<3>(ref_any, p, BoundaryStencil::extrapolate));
      CHECK(ext == doctest::Approx(f(xa)).epsilon(1e-10));

      // Clamped stencils stay inside the participating values.
      const auto loc = locate_in_patch<3>(ref_any, p);
      const double v = interpolate_multilinear<3>(p.field("noise"), p, loc);
      double lo = 1e300, hi = -1e300;
      for (int m = 0; m < 8; ++m) {
        std::array<int, 3> idx{};
        for (int a = 0; a < 3; ++a) {
          const int b = std::clamp(static_cast<int>(std::floor(loc.frac[a])), 0, p.cells[a] - 2);
          idx[a] = b + ((m >> a) & 1);
        }
        const double cv = p.field("noise")[p.cell_index(idx)];
        lo = std::min(lo, cv);
        hi = std::max(hi, cv);
      }
      CHECK(v >= lo);
      CHECK(v <= hi);
    }
  }
  CHECK(worst_rel < 1e-12);
}

TEST_CASE("single-cell axes interpolate as constants along that axis") {
  const Tree<3> t{};
  auto p = make_patch<3>({}, {2, 2, 1});
  sample<3>(p, t, "f", [](const Vec<3>& x) { return 3 * x[0] - x[1]; });
  const auto v = interpolate_multilinear<3>(p.field("f"), p, locate_in_patch<3>(Vec<3>(0.5, 0.5, 0.9), p));
  CHECK(v == doctest::Approx(1.0));
}
