#pragma once

#include <Eigen/Dense>
#include <vector>

#include "coloc/relative_models.hpp"
#include "coloc/solvers.hpp"
#include "coloc/types.hpp"

namespace coloc {

/// Scaling applied to the measurement-noise term of the discorrelated bound.
enum class GammaMode { One, OneMinusOmega };

enum class OmegaObjective { LogDet, Trace };

struct FusionConfig {
  GammaMode gamma_mode = GammaMode::One;
  OmegaObjective omega_objective = OmegaObjective::LogDet;
  double omega_eps = 1e-6;    // interior clamp for the raw gain formula
  double psd_margin = 1e-6;   // strictness margin on the cross-term constraint
  double omega_tol = 1e-6;
  int omega_max_iters = 100;
  double saddle_gap_rtol = 1e-6;  // gap tolerance relative to Tr(P_self)
  AscentConfig ascent;
};

void validate(const FusionConfig& cfg);

/// Which side of the measurement the updated agent is on.
enum class PairRole { Observer, Target };

/// First-order covariance of the updated agent after a gain-K correction,
/// with the updated agent's blocks arranged first.
Eigen::MatrixXd first_order_updated_cov(const Eigen::Ref<const Eigen::MatrixXd>& P_l,
                                        const Eigen::Ref<const Eigen::MatrixXd>& P_k,
                                        const Eigen::Ref<const Eigen::MatrixXd>& P_lk,
                                        const Eigen::Ref<const Eigen::MatrixXd>& H_l,
                                        const Eigen::Ref<const Eigen::MatrixXd>& H_k,
                                        const Eigen::Ref<const Eigen::MatrixXd>& R,
                                        const Eigen::Ref<const Eigen::MatrixXd>& K);

/// Stacked 2x2-block covariance.
Eigen::MatrixXd stack_joint(const Eigen::Ref<const Eigen::MatrixXd>& P_l,
                            const Eigen::Ref<const Eigen::MatrixXd>& P_k,
                            const Eigen::Ref<const Eigen::MatrixXd>& P_lk);

/// Minimum-variance gain for the first block of a stacked pair with a known
/// cross term. Throws SingularInnovationError when the innovation covariance
/// condition number exceeds 1e12.
Eigen::MatrixXd emv_gain_blocks(const Eigen::Ref<const Eigen::MatrixXd>& P_l,
                                const Eigen::Ref<const Eigen::MatrixXd>& P_k,
                                const Eigen::Ref<const Eigen::MatrixXd>& P_lk,
                                const Eigen::Ref<const Eigen::MatrixXd>& H_l,
                                const Eigen::Ref<const Eigen::MatrixXd>& H_k,
                                const Eigen::Ref<const Eigen::MatrixXd>& R);

/// Gain for one agent of a joint belief with a known cross-covariance.
Eigen::MatrixXd emv_gain(const JointBelief& joint, const JacobianPair& jac,
                         const Eigen::Ref<const Eigen::MatrixXd>& R, PairRole for_agent);

/// Update with a known cross-covariance between self and partner
/// (cross is ordered self-then-partner).
FusionResult emv_update(const Belief& self, const Belief& partner,
                        const Eigen::Ref<const Eigen::MatrixXd>& cross,
                        const RelativeMeasurement& meas, PairRole self_role);

/// Known-cross update with the cross block forced to zero; reports the
/// (generally inconsistent) covariance.
FusionResult naive_update(const Belief& self, const Belief& partner,
                          const RelativeMeasurement& meas, PairRole self_role);

/// Full stacked-pair EKF update, cross block maintained exactly.
/// The joint belief is ordered (observer, target).
JointBelief joint_oracle_update(const JointBelief& joint, const RelativeMeasurement& meas);

/// Stacked-pair update from raw Jacobian blocks and a precomputed innovation;
/// works for any state dimensions. `information_form` switches between the
/// gain (Joseph) route and the inverse-covariance route.
JointBelief joint_oracle_update_blocks(const JointBelief& joint,
                                       const Eigen::Ref<const Eigen::MatrixXd>& H_i,
                                       const Eigen::Ref<const Eigen::MatrixXd>& H_j,
                                       const Eigen::Ref<const Eigen::MatrixXd>& R,
                                       const Eigen::Ref<const Eigen::VectorXd>& nu,
                                       bool information_form);

/// Same update through the information form; equal to joint_oracle_update up
/// to numerical precision.
JointBelief joint_oracle_update_information(const JointBelief& joint,
                                            const RelativeMeasurement& meas);

/// Evaluation of the discorrelated-bound machinery at a fixed omega.
struct DmvEvaluation {
  bool bounded = false;  // false when the bound is infinite in some direction
  double log_det = 0.0;
  double trace = 0.0;
  Eigen::MatrixXd cov;
  Eigen::MatrixXd gain;
};

DmvEvaluation dmv_eval(const Eigen::Ref<const Eigen::MatrixXd>& P_l,
                       const Eigen::Ref<const Eigen::MatrixXd>& P_k,
                       const Eigen::Ref<const Eigen::MatrixXd>& H_l,
                       const Eigen::Ref<const Eigen::MatrixXd>& H_k,
                       const Eigen::Ref<const Eigen::MatrixXd>& R, double omega,
                       GammaMode gamma, bool want_gain);

/// Bound-minimizing gain at a fixed omega; boundary values use the analytic
/// limits (zero gain at omega = 1).
Eigen::MatrixXd dmv_gain(const Eigen::Ref<const Eigen::MatrixXd>& P_l,
                         const Eigen::Ref<const Eigen::MatrixXd>& P_k,
                         const Eigen::Ref<const Eigen::MatrixXd>& H_l,
                         const Eigen::Ref<const Eigen::MatrixXd>& H_k,
                         const Eigen::Ref<const Eigen::MatrixXd>& R, double omega,
                         GammaMode gamma);

/// Discorrelated bound covariance at an arbitrary gain (direct block form).
Eigen::MatrixXd discorrelated_bound_cov(const Eigen::Ref<const Eigen::MatrixXd>& P_l,
                                        const Eigen::Ref<const Eigen::MatrixXd>& P_k,
                                        const Eigen::Ref<const Eigen::MatrixXd>& H_l,
                                        const Eigen::Ref<const Eigen::MatrixXd>& H_k,
                                        const Eigen::Ref<const Eigen::MatrixXd>& R,
                                        const Eigen::Ref<const Eigen::MatrixXd>& K,
                                        double omega, GammaMode gamma);

/// Discorrelated minimum-variance update: optimizes omega over [0,1] and
/// applies the bound-minimizing gain. Never fails; omega = 1 reproduces the
/// prior belief.
FusionResult dmv_update(const Belief& self, const Belief& partner,
                        const RelativeMeasurement& meas, PairRole self_role,
                        const FusionConfig& cfg = {});

/// Estimated-cross-covariance minimum-variance update: min-max of the updated
/// trace over (gain, cross term). Throws SaddleNotConvergedError when the
/// saddle gap stays above tolerance.
FusionResult ecmv_update(const Belief& self, const Belief& partner,
                         const RelativeMeasurement& meas, PairRole self_role,
                         const FusionConfig& cfg = {});

/// Practical variant: picks the cross term by maximizing the determinant of
/// the information-form marginal update, then applies the known-cross gain.
/// Requires strictly positive definite priors.
FusionResult pecmv_update(const Belief& self, const Belief& partner,
                          const RelativeMeasurement& meas, PairRole self_role,
                          const FusionConfig& cfg = {});

FusionResult dispatch_update(const Belief& self, const Belief& partner,
                             const RelativeMeasurement& meas, FusionMethod method,
                             PairRole self_role, const FusionConfig& cfg = {});

struct PartnerMeasurement {
  Belief partner;
  RelativeMeasurement meas;
};

/// Folds concurrent same-stamp measurements one after the other, each step
/// starting from the previously updated belief. The role per item follows
/// from the measurement's observer/target ids.
FusionResult sequential_update(const Belief& self,
                               const std::vector<PartnerMeasurement>& items,
                               FusionMethod method, const FusionConfig& cfg = {});

}  // namespace coloc
