#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <utility>

#include "coloc/angles.hpp"
#include "coloc/errors.hpp"

namespace coloc {

using AgentId = int;

/// Planar pose. Heading is kept in (-pi, pi] after every construction.
struct Pose2D {
  double x = 0.0;
  double y = 0.0;
  double phi = 0.0;

  Pose2D() = default;
  Pose2D(double x_, double y_, double phi_) : x(x_), y(y_), phi(wrap_angle(phi_)) {}

  Eigen::Vector3d vec() const { return {x, y, phi}; }
  static Pose2D from_vec(const Eigen::Ref<const Eigen::Vector3d>& v) {
    return {v[0], v[1], v[2]};
  }
};

/// Symmetrizes `m` and verifies positive semidefiniteness.
/// Tolerance is relative: the most negative eigenvalue may not fall below
/// -1e-9 * max(trace, 0).
inline Eigen::MatrixXd make_spd(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  if (m.rows() != m.cols()) {
    throw NotPsdError("make_spd: matrix is not square");
  }
  Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  if (sym.size() == 0) {
    return sym;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  const double min_eig = es.eigenvalues().minCoeff();
  const double tol = 1e-9 * std::max(sym.trace(), 0.0);
  if (min_eig < -tol) {
    throw NotPsdError("make_spd: most negative eigenvalue " +
                      std::to_string(min_eig) + " below tolerance " +
                      std::to_string(-tol));
  }
  return sym;
}

/// Validated covariance: symmetrized on construction, PSD within tolerance.
class Covariance {
 public:
  Covariance() = default;
  explicit Covariance(const Eigen::Ref<const Eigen::MatrixXd>& m) : m_(make_spd(m)) {}

  const Eigen::MatrixXd& mat() const { return m_; }
  Eigen::Index dim() const { return m_.rows(); }

 private:
  Eigen::MatrixXd m_;
};

/// An agent's state estimate and its error covariance.
struct Belief {
  Eigen::VectorXd mean;
  Covariance cov;
  AgentId agent_id = 0;
  int stamp = 0;

  Belief() = default;
  Belief(Eigen::VectorXd mean_, Covariance cov_, AgentId id, int stamp_)
      : mean(std::move(mean_)), cov(std::move(cov_)), agent_id(id), stamp(stamp_) {
    if (cov.dim() != mean.size()) {
      throw DegenerateBeliefError("Belief: covariance dimension does not match mean");
    }
  }
};

/// Pairwise stacked belief. The cross block is std::nullopt when the agents
/// do not maintain their correlation.
struct JointBelief {
  Eigen::VectorXd mean_i;
  Eigen::VectorXd mean_j;
  Covariance P_i;
  Covariance P_j;
  std::optional<Eigen::MatrixXd> P_ij;

  bool has_cross() const { return P_ij.has_value(); }

  Eigen::MatrixXd joint_matrix() const {
    const Eigen::Index ni = P_i.dim();
    const Eigen::Index nj = P_j.dim();
    Eigen::MatrixXd J(ni + nj, ni + nj);
    J.topLeftCorner(ni, ni) = P_i.mat();
    J.bottomRightCorner(nj, nj) = P_j.mat();
    if (P_ij) {
      J.topRightCorner(ni, nj) = *P_ij;
      J.bottomLeftCorner(nj, ni) = P_ij->transpose();
    } else {
      J.topRightCorner(ni, nj).setZero();
      J.bottomLeftCorner(nj, ni).setZero();
    }
    return J;
  }

  /// Checks the stacked matrix is PSD; only meaningful with a cross block.
  void validate() const { make_spd(joint_matrix()); }
};

enum class MeasurementKind { RelativePose, RelativeRange, RelativeBearing };

inline Eigen::Index measurement_dim(MeasurementKind kind) {
  return kind == MeasurementKind::RelativePose ? 3 : 1;
}

/// Inter-agent measurement taken by `observer` of `target`.
struct RelativeMeasurement {
  AgentId observer = 0;
  AgentId target = 0;
  MeasurementKind kind = MeasurementKind::RelativePose;
  Eigen::VectorXd z;
  Covariance R;  // strictly positive definite
  int stamp = 0;

  RelativeMeasurement() = default;
  RelativeMeasurement(AgentId obs, AgentId tgt, MeasurementKind kind_,
                      Eigen::VectorXd z_, const Eigen::Ref<const Eigen::MatrixXd>& R_,
                      int stamp_)
      : observer(obs), target(tgt), kind(kind_), z(std::move(z_)), R(R_), stamp(stamp_) {
    if (z.size() != measurement_dim(kind)) {
      throw UnknownModelKindError("RelativeMeasurement: z dimension does not match kind");
    }
    if (R.dim() != z.size()) {
      throw NotPsdError("RelativeMeasurement: R dimension does not match z");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(R.mat());
    if (llt.info() != Eigen::Success) {
      throw NotPsdError("RelativeMeasurement: R must be strictly positive definite");
    }
  }
};

/// Jacobian blocks of a relative measurement model, with respect to the
/// observer's and the target's state.
struct JacobianPair {
  Eigen::MatrixXd H_obs;
  Eigen::MatrixXd H_tgt;
};

enum class FusionMethod { Naive, Emv, Dmv, Ecmv, Pecmv };

inline std::string to_string(FusionMethod m) {
  switch (m) {
    case FusionMethod::Naive: return "naive";
    case FusionMethod::Emv: return "emv";
    case FusionMethod::Dmv: return "dmv";
    case FusionMethod::Ecmv: return "ecmv";
    case FusionMethod::Pecmv: return "pecmv";
  }
  return "?";
}

/// Updated belief plus solver diagnostics from one relative-measurement fusion.
struct FusionResult {
  Belief belief;
  Eigen::MatrixXd gain;
  FusionMethod method = FusionMethod::Naive;
  std::optional<double> omega_star;          // DMV only
  std::optional<Eigen::MatrixXd> X_star;     // ECMV / PECMV only
  double objective = 0.0;
  int solver_iters = 0;
};

}  // namespace coloc
