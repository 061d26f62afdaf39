#pragma once

#include "meshswap/coord_transforms.hpp"

#include <cmath>
#include <stdexcept>

namespace meshswap {

/// Axisymmetric Gaussian shell expanding from `origin` (ENU, km).
struct PulseParams {
  Vector3<double> origin = Vector3<double>::Zero();
  double speed = 1.0;  // km/s
  double width = 15.0;  // km
  double amplitude = 1.0;
};

struct PulseValues {
  double rho = 0.0;
  Vector3<double> mom = Vector3<double>::Zero();
  double energy = 0.0;
};

inline double pulse_envelope(double distance, double t, const PulseParams& p) {
  const double s = (distance - p.speed * t) / p.width;
  return p.amplitude * std::exp(-0.5 * s * s);
}

inline double pulse_envelope(const Vector3<double>& enu, double t, const PulseParams& p) {
  return pulse_envelope((enu - p.origin).norm(), t, p);
}

/// |grad envelope| in 1/km.
inline double pulse_gradient_norm(const Vector3<double>& enu, double t, const PulseParams& p) {
  const double d = (enu - p.origin).norm();
  return pulse_envelope(d, t, p) * std::abs(d - p.speed * t) / (p.width * p.width);
}

inline PulseValues pulse_field(const Vector3<double>& enu, double t, const PulseParams& p) {
  if (t < 0.0) throw std::invalid_argument("pulse time must be non-negative");
  PulseValues v;
  const Vector3<double> r = enu - p.origin;
  const double d = r.norm();
  v.rho = pulse_envelope(d, t, p);
  if (d > 0.0) v.mom = v.rho * (r / d);
  v.energy = 1.5 * v.rho;
  return v;
}

}  // namespace meshswap
