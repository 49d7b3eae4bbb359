#pragma once

#include <cmath>
#include <numbers>

namespace coloc {

inline constexpr double kPi = std::numbers::pi;

// Wraps to the half-open interval (-pi, pi]. Idempotent.
inline double wrap_angle(double a) {
  double r = std::remainder(a, 2.0 * kPi);  // [-pi, pi]
  if (r <= -kPi) {
    r += 2.0 * kPi;
  }
  return r;
}

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

}  // namespace coloc
