#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "coloc/types.hpp"

namespace coloc {

/// Linear / angular velocity over one step of length dt.
struct UnicycleInput {
  double v = 0.0;      // m/s
  double omega = 0.0;  // rad/s
  double dt = 0.0;     // s, must be > 0

  UnicycleInput() = default;
  UnicycleInput(double v_, double omega_, double dt_) : v(v_), omega(omega_), dt(dt_) {
    if (!(dt > 0.0)) {
      throw std::invalid_argument("UnicycleInput: dt must be positive");
    }
  }
};

/// Velocity-proportional input noise with absolute floors for slow segments.
struct NoiseModel {
  double v_frac = 0.0;
  double omega_frac = 0.0;
  double floor_v = 0.0;      // m/s
  double floor_omega = 0.0;  // rad/s
};

inline double linear_noise_std(const UnicycleInput& u, const NoiseModel& nm) {
  return std::max(nm.v_frac * std::abs(u.v), nm.floor_v);
}

inline double angular_noise_std(const UnicycleInput& u, const NoiseModel& nm) {
  return std::max(nm.omega_frac * std::abs(u.omega), nm.floor_omega);
}

/// Euler step with the pre-update heading.
inline Pose2D propagate_state(const Pose2D& x, const UnicycleInput& u) {
  return {x.x + u.dt * u.v * std::cos(x.phi),
          x.y + u.dt * u.v * std::sin(x.phi),
          wrap_angle(x.phi + u.dt * u.omega)};
}

/// State and input Jacobians of propagate_state.
inline std::pair<Eigen::Matrix3d, Eigen::Matrix<double, 3, 2>>
propagation_jacobians(const Pose2D& x, const UnicycleInput& u) {
  const double c = std::cos(x.phi);
  const double s = std::sin(x.phi);
  Eigen::Matrix3d F_x = Eigen::Matrix3d::Identity();
  F_x(0, 2) = -u.dt * u.v * s;
  F_x(1, 2) = u.dt * u.v * c;
  Eigen::Matrix<double, 3, 2> F_u;
  F_u << u.dt * c, 0.0,
         u.dt * s, 0.0,
         0.0, u.dt;
  return {F_x, F_u};
}

/// Perturbs v and omega with zero-mean Gaussian noise from `nm`.
inline UnicycleInput sample_noisy_input(const UnicycleInput& u, const NoiseModel& nm,
                                        std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double sv = linear_noise_std(u, nm);
  const double sw = angular_noise_std(u, nm);
  UnicycleInput out = u;
  out.v += sv * gauss(rng);
  out.omega += sw * gauss(rng);
  return out;
}

}  // namespace coloc
