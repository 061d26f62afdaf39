#pragma once

#include "meshswap/forest.hpp"

#include <Eigen/Core>

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace meshswap {

/// Spherical Earth radius in km.
inline constexpr double earth_radius_km = 6371.0;

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;

/// Radius r (km), colatitude theta in [0, pi], longitude lambda in (-pi, pi].
template <typename Scalar = double>
struct SphericalEcef {
  Scalar r;
  Scalar theta;
  Scalar lambda;
};

template <typename Scalar = double>
struct CartesianEcef {
  Vector3<Scalar> xyz;
};

template <typename Scalar = double>
struct EnuPoint {
  Vector3<Scalar> enu;
};

/// Centered-dipole coordinates: q = cos(theta)/r^2, p = r/sin^2(theta) with
/// r in Earth radii. The magnetic frame coincides with the geographic one.
template <typename Scalar = double>
struct DipolePoint {
  Scalar q;
  Scalar p;
  Scalar lambda;
};

/// Tangent-plane anchor: geographic latitude and longitude (rad) and the
/// radial distance of the plane origin (km).
template <typename Scalar = double>
struct EnuOrigin {
  Scalar lat0;
  Scalar lon0;
  Scalar r0 = Scalar(earth_radius_km);
};

class DipoleInversionError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

template <typename Scalar>
CartesianEcef<Scalar> spherical_to_ecef(const SphericalEcef<Scalar>& s) {
  using std::cos;
  using std::sin;
  const Scalar st = sin(s.theta);
  return {Vector3<Scalar>(s.r * st * cos(s.lambda), s.r * st * sin(s.lambda), s.r * cos(s.theta))};
}

template <typename Scalar>
SphericalEcef<Scalar> ecef_to_spherical(const CartesianEcef<Scalar>& c) {
  using std::atan2;
  using std::hypot;
  const Scalar r = c.xyz.norm();
  if (!(r > Scalar(0))) throw std::domain_error("undefined direction");
  const Scalar rho = hypot(c.xyz.x(), c.xyz.y());
  return {r, atan2(rho, c.xyz.z()), atan2(c.xyz.y(), c.xyz.x())};
}

/// Rows are the east, north and up unit vectors expressed in ECEF.
template <typename Scalar>
Matrix3<Scalar> enu_rotation(const EnuOrigin<Scalar>& o) {
  using std::cos;
  using std::sin;
  const Scalar sl = sin(o.lat0), cl = cos(o.lat0);
  const Scalar so = sin(o.lon0), co = cos(o.lon0);
  Matrix3<Scalar> rot;
  rot << -so, co, Scalar(0),
         -sl * co, -sl * so, cl,
          cl * co, cl * so, sl;
  return rot;
}

template <typename Scalar>
Vector3<Scalar> enu_origin_ecef(const EnuOrigin<Scalar>& o) {
  using std::cos;
  using std::sin;
  return o.r0 * Vector3<Scalar>(cos(o.lat0) * cos(o.lon0), cos(o.lat0) * sin(o.lon0), sin(o.lat0));
}

template <typename Scalar>
EnuPoint<Scalar> ecef_to_enu(const CartesianEcef<Scalar>& c, const EnuOrigin<Scalar>& o) {
  return {enu_rotation(o) * (c.xyz - enu_origin_ecef(o))};
}

template <typename Scalar>
CartesianEcef<Scalar> enu_to_ecef(const EnuPoint<Scalar>& e, const EnuOrigin<Scalar>& o) {
  return {enu_rotation(o).transpose() * e.enu + enu_origin_ecef(o)};
}

template <typename Scalar>
DipolePoint<Scalar> spherical_to_dipole(const SphericalEcef<Scalar>& s,
                                        Scalar radius = Scalar(earth_radius_km)) {
  using std::cos;
  using std::sin;
  const Scalar st = sin(s.theta);
  if (st == Scalar(0) || s.theta <= Scalar(0) || s.theta >= Scalar(std::numbers::pi)) {
    throw std::domain_error("on dipole axis");
  }
  const Scalar rh = s.r / radius;
  return {cos(s.theta) / (rh * rh), rh / (st * st), s.lambda};
}

/// Smallest normalized radius accepted from the dipole inversion.
inline constexpr double dipole_min_radius = 1e-6;

/// Root of q^2 r^4 + r/p - 1 = 0 on (0, p]. The residual is increasing and
/// convex there, so Newton from min(p, 1) is kept inside a shrinking bracket
/// and falls back to bisection when a step leaves it.
template <typename Scalar>
Scalar dipole_radius(Scalar q, Scalar p, Scalar tol = Scalar(1e-13), int max_iter = 100) {
  using std::abs;
  using std::isfinite;
  if (!(p > Scalar(0)) || !isfinite(p) || !isfinite(q)) {
    throw DipoleInversionError("outside dipole domain");
  }
  const Scalar q2 = q * q;
  auto residual = [&](Scalar r) { return q2 * r * r * r * r + r / p - Scalar(1); };
  Scalar lo = Scalar(0), hi = p;
  Scalar r = p < Scalar(1) ? p : Scalar(1);
  for (int it = 0; it < max_iter; ++it) {
    const Scalar f = residual(r);
    if (abs(f) <= tol) {
      if (r < Scalar(dipole_min_radius)) throw DipoleInversionError("outside dipole domain");
      return r;
    }
    if (f > Scalar(0)) {
      hi = r;
    } else {
      lo = r;
    }
    const Scalar df = Scalar(4) * q2 * r * r * r + Scalar(1) / p;
    Scalar next = r - f / df;
    if (!(next > lo && next < hi)) next = Scalar(0.5) * (lo + hi);
    if (next == r) break;
    r = next;
  }
  throw DipoleInversionError("inversion failed");
}

template <typename Scalar>
SphericalEcef<Scalar> dipole_to_spherical(const DipolePoint<Scalar>& d,
                                          Scalar radius = Scalar(earth_radius_km)) {
  using std::atan2;
  using std::sqrt;
  const Scalar rh = dipole_radius(d.q, d.p);
  const Scalar sin_theta = sqrt(rh / d.p);
  const Scalar cos_theta = d.q * rh * rh;
  return {rh * radius, atan2(sin_theta, cos_theta), d.lambda};
}

template <typename Scalar>
EnuPoint<Scalar> dipole_to_enu(const DipolePoint<Scalar>& d, const EnuOrigin<Scalar>& o,
                               Scalar radius = Scalar(earth_radius_km)) {
  return ecef_to_enu(spherical_to_ecef(dipole_to_spherical(d, radius)), o);
}

template <typename Scalar>
DipolePoint<Scalar> enu_to_dipole(const EnuPoint<Scalar>& e, const EnuOrigin<Scalar>& o,
                                  Scalar radius = Scalar(earth_radius_km)) {
  return spherical_to_dipole(ecef_to_spherical(enu_to_ecef(e, o)), radius);
}

/// Scale-and-shift into the tree's unit reference cube. Results outside
/// [0, 1]^Dim mean the point lies outside this tree.
template <int Dim>
Vec<Dim> physical_to_reference(const Vec<Dim>& phys, const Tree<Dim>& t) {
  return (phys - t.origin).cwiseQuotient(t.extent);
}

template <int Dim>
Vec<Dim> reference_to_physical(const Vec<Dim>& ref, const Tree<Dim>& t) {
  return t.origin + ref.cwiseProduct(t.extent);
}

}  // namespace meshswap
