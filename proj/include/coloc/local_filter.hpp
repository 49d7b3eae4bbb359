#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "coloc/motion.hpp"
#include "coloc/types.hpp"

namespace coloc {

/// Additive process noise per propagation step.
struct ProcessNoise {
  Eigen::Matrix3d Q = Eigen::Matrix3d::Zero();

  ProcessNoise() = default;
  explicit ProcessNoise(const Eigen::Ref<const Eigen::Matrix3d>& q) : Q(make_spd(q)) {}
  static ProcessNoise isotropic(double std_per_axis) {
    ProcessNoise p;
    p.Q = std_per_axis * std_per_axis * Eigen::Matrix3d::Identity();
    return p;
  }
};

struct Landmark {
  int id = 0;
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
};

/// EKF propagation: mean through the motion model, covariance through the
/// linearization plus mapped input noise and additive process noise.
inline Belief predict_belief(const Belief& bel, const UnicycleInput& u,
                             const NoiseModel& nm, const ProcessNoise& q) {
  if (bel.mean.size() != 3) {
    throw DegenerateBeliefError("predict_belief: state dimension must be 3");
  }
  const Pose2D x = Pose2D::from_vec(bel.mean);
  const auto [F_x, F_u] = propagation_jacobians(x, u);
  const double sv = linear_noise_std(u, nm);
  const double sw = angular_noise_std(u, nm);
  Eigen::Matrix2d sigma_u = Eigen::Matrix2d::Zero();
  sigma_u(0, 0) = sv * sv;
  sigma_u(1, 1) = sw * sw;
  Eigen::Matrix3d P = F_x * bel.cov.mat() * F_x.transpose() +
                      F_u * sigma_u * F_u.transpose() + q.Q;
  return {propagate_state(x, u).vec(), Covariance(P), bel.agent_id, bel.stamp + 1};
}

/// Range to a known landmark and its Jacobian row.
inline std::pair<double, Eigen::RowVector3d>
range_measurement_model(const Pose2D& x, const Landmark& lm) {
  const double dx = x.x - lm.position.x();
  const double dy = x.y - lm.position.y();
  const double h = std::hypot(dx, dy);
  if (h < 1e-6) {
    throw DegenerateGeometryError("range_measurement_model: agent at landmark");
  }
  Eigen::RowVector3d H(dx / h, dy / h, 0.0);
  return {h, H};
}

/// Scalar EKF range update in Joseph form.
inline Belief abs_correct_belief(const Belief& bel, double z, const Landmark& lm,
                                 double r_std) {
  if (!(r_std > 0.0)) {
    throw std::invalid_argument("abs_correct_belief: r_std must be positive");
  }
  const auto [h, H] = range_measurement_model(Pose2D::from_vec(bel.mean), lm);
  const Eigen::Matrix3d P = bel.cov.mat();
  const double r = r_std * r_std;
  const double s = (H * P * H.transpose())(0) + r;
  const Eigen::Vector3d K = P * H.transpose() / s;
  const Eigen::Vector3d mean = bel.mean + K * (z - h);
  const Eigen::Matrix3d A = Eigen::Matrix3d::Identity() - K * H;
  const Eigen::Matrix3d P_new = A * P * A.transpose() + K * r * K.transpose();
  Eigen::Vector3d wrapped = mean;
  wrapped[2] = wrap_angle(wrapped[2]);
  return {wrapped, Covariance(P_new), bel.agent_id, bel.stamp};
}

}  // namespace coloc
