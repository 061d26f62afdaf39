#include "meshswap/coord_transforms.hpp"

#include <Eigen/LU>
#include <doctest.h>

#include <numbers>
#include <random>

using namespace meshswap;
using std::numbers::pi;

namespace {

constexpr double R = earth_radius_km;

double rel(const Vector3<double>& a, const Vector3<double>& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST_CASE("spherical and Cartesian ECEF") {
  const auto pole = spherical_to_ecef<double>({R, 0.0, 1.234});
  CHECK(pole.xyz.x() == doctest::Approx(0.0));
  CHECK(pole.xyz.y() == doctest::Approx(0.0));
  CHECK(pole.xyz.z() == R);
  const auto eq = spherical_to_ecef<double>({R, pi / 2, 0.0});
  CHECK(eq.xyz.x() == R);
  CHECK(std::abs(eq.xyz.z()) < 1e-9);

  const auto s = ecef_to_spherical<double>({Vector3<double>(0, 0, R)});
  CHECK(s.r == R);
  CHECK(s.theta == 0.0);
  CHECK(s.lambda == 0.0);
  const auto t = ecef_to_spherical<double>({Vector3<double>(R, 0, 0)});
  CHECK(t.theta == doctest::Approx(pi / 2));
  CHECK(t.lambda == 0.0);
  CHECK_THROWS_WITH_AS(ecef_to_spherical<double>({Vector3<double>::Zero()}), "undefined direction",
                       std::domain_error);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Vector3<double> p(u(rng) * 8000, u(rng) * 8000, u(rng) * 8000);
    const auto back = spherical_to_ecef(ecef_to_spherical<double>({p}));
    worst = std::max(worst, rel(back.xyz, p));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("ENU frame") {
  const EnuOrigin<double> o{0.45, -1.3, R};
  const auto rot = enu_rotation(o);
  CHECK((rot.transpose() * rot - Matrix3<double>::Identity()).norm() < 1e-14);
  CHECK(rot.determinant() == doctest::Approx(1.0));

  const auto zero = ecef_to_enu<double>({enu_origin_ecef(o)}, o);
  CHECK(zero.enu.norm() < 1e-9);

  const Vector3<double> up_dir = enu_origin_ecef(o).normalized();
  const auto above = ecef_to_enu<double>({(R + 1.0) * up_dir}, o);
  CHECK(above.enu.x() == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(std::abs(above.enu.y()) < 1e-9);
  CHECK(above.enu.z() == doctest::Approx(1.0).epsilon(1e-9));

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const EnuOrigin<double> oi{u(rng) * pi / 2, u(rng) * pi, R};
    const Vector3<double> p(u(rng) * 7000, u(rng) * 7000, u(rng) * 7000);
    const auto back = enu_to_ecef(ecef_to_enu<double>({p}, oi), oi);
    worst = std::max(worst, rel(back.xyz, p));
    const Vector3<double> e(u(rng) * 500, u(rng) * 500, u(rng) * 500);
    const auto eback = ecef_to_enu(enu_to_ecef<double>({e}, oi), oi);
    CHECK((eback.enu - e).norm() < 1e-12 * enu_origin_ecef(oi).norm());
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("dipole coordinates") {
  const auto s = dipole_to_spherical<double>({0.0, 1.0, 0.0});
  CHECK(s.r == doctest::Approx(R).epsilon(1e-14));
  CHECK(s.theta == doctest::Approx(pi / 2).epsilon(1e-14));
  CHECK(s.lambda == 0.0);

  const auto d = spherical_to_dipole<double>({R, pi / 2, 0.0});
  CHECK(std::abs(d.q) < 1e-16);
  CHECK(d.p == doctest::Approx(1.0));
  const auto d2 = spherical_to_dipole<double>({2 * R, pi / 2, 0.7});
  CHECK(d2.p == doctest::Approx(2.0));
  CHECK(d2.lambda == 0.7);

  CHECK_THROWS_WITH_AS(spherical_to_dipole<double>({R, 0.0, 0.0}), "on dipole axis", std::domain_error);
  CHECK_THROWS_WITH_AS(spherical_to_dipole<double>({R, pi, 0.0}), "on dipole axis", std::domain_error);
  CHECK_THROWS_WITH_AS(dipole_to_spherical<double>({0.3, 0.0, 0.0}), "outside dipole domain",
                       DipoleInversionError);
  CHECK_THROWS_WITH_AS(dipole_to_spherical<double>({0.3, -2.0, 0.0}), "outside dipole domain",
                       DipoleInversionError);
  CHECK_THROWS_AS(dipole_to_spherical<double>({0.3, std::numeric_limits<double>::infinity(), 0.0}),
                  DipoleInversionError);
  // Near the axis p grows without bound; a huge finite p is still invertible.
  const auto near_axis = dipole_to_spherical<double>({0.999, 1e8, 0.0});
  CHECK(near_axis.theta < 1e-3);
  CHECK(near_axis.theta > 0.0);
}

TEST_CASE("dipole round trip and root residual") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> rr(1.0, 1.2), th(0.2, pi - 0.2), la(-pi, pi);
  double worst = 0.0;
  double worst_residual = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const SphericalEcef<double> s{rr(rng) * R, th(rng), la(rng)};
    const auto d = spherical_to_dipole(s);
    const auto back = dipole_to_spherical(d);
    worst = std::max({worst, std::abs(back.r - s.r) / s.r, std::abs(back.theta - s.theta) / s.theta,
                      std::abs(back.lambda - s.lambda)});
    const double rh = back.r / R;
    worst_residual = std::max(worst_residual, std::abs(d.q * d.q * rh * rh * rh * rh + rh / d.p - 1.0));
    const auto again = spherical_to_dipole(back);
    CHECK(std::abs(again.q - d.q) <= 1e-9 * std::max(1.0, std::abs(d.q)));
    CHECK(std::abs(again.p - d.p) <= 1e-9 * d.p);
  }
  CHECK(worst < 1e-9);
  CHECK(worst_residual < 1e-12);
}

TEST_CASE("dipole to ENU composition") {
  const EnuOrigin<double> o{0.5, 0.2, R};
  const SphericalEcef<double> origin_sph{R, pi / 2 - o.lat0, o.lon0};
  const auto at_origin = dipole_to_enu(spherical_to_dipole(origin_sph), o);
  CHECK(at_origin.enu.norm() < 1e-9);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> qd(-0.5, 0.5), pd(1.0, 3.0), ld(-0.5, 0.5);
  for (int i = 0; i < 1000; ++i) {
    const DipolePoint<double> d{qd(rng), pd(rng), ld(rng)};
    const auto s = dipole_to_spherical(d);
    const auto c = spherical_to_ecef(s);
    const auto e = ecef_to_enu(c, o);
    const auto composed = dipole_to_enu(d, o);
    CHECK(composed.enu == e.enu);
  }

  // Great-circle oracle: 10 km east along the surface from an equatorial origin.
  const EnuOrigin<double> eq{0.0, 0.0, R};
  const double phi = 10.0 / R;
  const auto east = dipole_to_enu(spherical_to_dipole<double>({R, pi / 2, phi}), eq);
  CHECK(east.enu.x() == doctest::Approx(R * std::sin(phi)).epsilon(1e-9));
  CHECK(east.enu.x() == doctest::Approx(10.0).epsilon(1e-5));
  CHECK(std::abs(east.enu.y()) < 1e-9);
  CHECK(east.enu.z() == doctest::Approx(R * (std::cos(phi) - 1.0)).epsilon(1e-6));
  CHECK(std::abs(east.enu.z()) < 0.01);

  const auto round = enu_to_dipole(east, eq);
  CHECK(round.p == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("physical and reference coordinates") {
  const Tree<3> t{0, Vec<3>(-200, -200, 0), Vec<3>(400, 400, 400)};
  CHECK(physical_to_reference<3>(t.origin, t) == Vec<3>::Zero());
  CHECK(physical_to_reference<3>(t.origin + t.extent, t) == Vec<3>::Ones());
  const Vec<3> outside = physical_to_reference<3>(Vec<3>(-300, 0, 500), t);
  CHECK(outside[0] < 0.0);
  CHECK(outside[2] > 1.0);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1000, 1000);
  for (int i = 0; i < 10000; ++i) {
    const Vec<3> p(u(rng), u(rng), u(rng));
    const Vec<3> back = reference_to_physical<3>(physical_to_reference<3>(p, t), t);
    CHECK((back - p).norm() <= 1e-14 * std::max(1.0, p.norm()) * 10);
  }
}
