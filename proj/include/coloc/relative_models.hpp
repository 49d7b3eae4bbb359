#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "coloc/types.hpp"

namespace coloc {

/// Predicted relative measurement and its Jacobian blocks.
struct RelativePrediction {
  Eigen::VectorXd z_hat;
  JacobianPair jac;
};

/// Target pose expressed in the observer frame: rotated position offset plus
/// wrapped heading difference.
inline RelativePrediction relative_pose_model(const Pose2D& xi, const Pose2D& xj) {
  const double dx = xj.x - xi.x;
  const double dy = xj.y - xi.y;
  const double c = std::cos(xi.phi);
  const double s = std::sin(xi.phi);
  Eigen::VectorXd z(3);
  z << c * dx + s * dy,
      -s * dx + c * dy,
      wrap_angle(xj.phi - xi.phi);
  Eigen::MatrixXd H_obs(3, 3);
  H_obs << -c, -s, z[1],
            s, -c, -z[0],
            0.0, 0.0, -1.0;
  Eigen::MatrixXd H_tgt(3, 3);
  H_tgt << c, s, 0.0,
          -s, c, 0.0,
           0.0, 0.0, 1.0;
  return {z, {H_obs, H_tgt}};
}

inline RelativePrediction relative_range_model(const Pose2D& xi, const Pose2D& xj) {
  const double dx = xj.x - xi.x;
  const double dy = xj.y - xi.y;
  const double r = std::hypot(dx, dy);
  if (r < 1e-6) {
    throw DegenerateGeometryError("relative_range_model: coincident agents");
  }
  Eigen::VectorXd z(1);
  z << r;
  Eigen::MatrixXd H_obs(1, 3);
  H_obs << -dx / r, -dy / r, 0.0;
  Eigen::MatrixXd H_tgt(1, 3);
  H_tgt << dx / r, dy / r, 0.0;
  return {z, {H_obs, H_tgt}};
}

inline RelativePrediction relative_bearing_model(const Pose2D& xi, const Pose2D& xj) {
  const double dx = xj.x - xi.x;
  const double dy = xj.y - xi.y;
  const double r2 = dx * dx + dy * dy;
  if (r2 < 1e-12) {
    throw DegenerateGeometryError("relative_bearing_model: coincident agents");
  }
  Eigen::VectorXd z(1);
  z << wrap_angle(std::atan2(dy, dx) - xi.phi);
  Eigen::MatrixXd H_obs(1, 3);
  H_obs << dy / r2, -dx / r2, -1.0;
  Eigen::MatrixXd H_tgt(1, 3);
  H_tgt << -dy / r2, dx / r2, 0.0;
  return {z, {H_obs, H_tgt}};
}

inline RelativePrediction evaluate_relative_model(MeasurementKind kind,
                                                  const Pose2D& xi, const Pose2D& xj) {
  switch (kind) {
    case MeasurementKind::RelativePose: return relative_pose_model(xi, xj);
    case MeasurementKind::RelativeRange: return relative_range_model(xi, xj);
    case MeasurementKind::RelativeBearing: return relative_bearing_model(xi, xj);
  }
  throw UnknownModelKindError("evaluate_relative_model: unknown kind");
}

inline bool is_angle_component(MeasurementKind kind, Eigen::Index idx) {
  return (kind == MeasurementKind::RelativePose && idx == 2) ||
         (kind == MeasurementKind::RelativeBearing && idx == 0);
}

/// Componentwise z - z_hat with angle components wrapped to (-pi, pi].
inline Eigen::VectorXd innovation(const Eigen::Ref<const Eigen::VectorXd>& z,
                                  const Eigen::Ref<const Eigen::VectorXd>& z_hat,
                                  MeasurementKind kind) {
  if (z.size() != z_hat.size()) {
    throw UnknownModelKindError("innovation: dimension mismatch");
  }
  Eigen::VectorXd nu = z - z_hat;
  for (Eigen::Index k = 0; k < nu.size(); ++k) {
    if (is_angle_component(kind, k)) {
      nu[k] = wrap_angle(nu[k]);
    }
  }
  return nu;
}

}  // namespace coloc
