#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "coloc/errors.hpp"

namespace coloc {

/// Scalar minimization problem on [0, 1].
struct ScalarSearchSpec {
  std::function<double(double)> objective;
  double tol = 1e-6;
  int max_iters = 100;
};

struct ScalarSearchResult {
  double omega_star = 1.0;
  double value = 0.0;
  int evaluations = 0;
};

/// Global minimizer on [0, 1]: 9-point uniform seeding (endpoints included),
/// quadratic-fit refinement in every local basin. Among values tying within
/// tol, the largest omega wins. Never throws; the best sampled point is the
/// fallback.
ScalarSearchResult omega_search(const ScalarSearchSpec& spec);

/// Matrix with operator norm at most 1 - delta.
struct ContractionPoint {
  Eigen::MatrixXd C;
};

/// SVD clamp of singular values to 1 - delta. Idempotent.
ContractionPoint project_contraction(const Eigen::Ref<const Eigen::MatrixXd>& C,
                                     double delta);

/// Factors A A^T = P_i and B B^T = P_j. X = A C B^T sweeps the feasible
/// cross-covariance set (joint block matrix PSD) as ||C||_2 ranges over [0,1].
/// Factors come from the eigendecomposition so rank-deficient PSD blocks are
/// handled.
struct CrossParameterization {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
};

CrossParameterization cross_parameterization(const Eigen::Ref<const Eigen::MatrixXd>& P_i,
                                             const Eigen::Ref<const Eigen::MatrixXd>& P_j);

struct AscentConfig {
  double delta = 1e-6;       // strict-contraction margin on the feasible set
  double stall_rtol = 1e-9;  // relative improvement counted as a stall
  int stall_runs = 3;        // consecutive stalls that end the ascent
  int max_iters = 500;
  double fd_step = 1e-6;     // central-difference step scale
  bool analytic_gradient = false;
  double init_step = 1.0;
};

struct AscentResult {
  Eigen::MatrixXd X_star;
  Eigen::MatrixXd C_star;
  double value = 0.0;
  int iters = 0;
  bool converged = false;
  std::vector<double> accepted_values;
};

/// Projected gradient ascent of `objective` over X = A C B^T with
/// ||C||_2 <= 1 - delta. Gradients default to central finite differences in C;
/// an analytic gradient (in X) can be supplied and enabled through the config.
/// Deterministic: starts from C = 0 plus fixed perturbation seeds.
AscentResult maximize_over_cross(
    const std::function<double(const Eigen::MatrixXd&)>& objective,
    const CrossParameterization& par, const AscentConfig& cfg,
    const std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>* gradient_in_x = nullptr);

/// Determinant-type objective maximization over the feasible cross set.
/// `converged == false` means the iteration cap was reached while still
/// improving; the best iterate is returned either way.
AscentResult logdet_max(const std::function<double(const Eigen::MatrixXd&)>& objective,
                        const Eigen::Ref<const Eigen::MatrixXd>& P_i,
                        const Eigen::Ref<const Eigen::MatrixXd>& P_j,
                        const AscentConfig& cfg);

/// Callbacks describing a min-max trace problem over (gain, cross term).
struct SaddleCallbacks {
  // Objective after the inner gain minimization, as a function of X.
  std::function<double(const Eigen::MatrixXd&)> reduced_objective;
  // Gradient of the reduced objective in X (the full objective is affine in X,
  // so this is its coefficient evaluated at the minimizing gain).
  std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)> reduced_gradient;
  // Closed-form minimizing gain at a given X.
  std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)> best_response_gain;
  // Exact maximum of the full objective over feasible X at a fixed gain.
  std::function<double(const Eigen::MatrixXd&)> max_at_gain;
};

struct SaddleResult {
  Eigen::MatrixXd K_star;
  Eigen::MatrixXd X_star;
  double value = 0.0;  // reduced objective at X_star
  double gap = 0.0;    // max_at_gain(K_star) - value, nonnegative at optimum
  int iters = 0;
  bool converged = false;
};

/// Alternating best-response scheme with averaging: each iteration recovers
/// the minimizing gain in closed form, takes the worst-case feasible X for
/// that gain (an SVD closed form, since the objective is affine in X), and
/// averages toward it with a line search. The linearization gap certifies
/// convergence; success means gap <= gap_tol.
SaddleResult saddle_solve(const SaddleCallbacks& cb, const CrossParameterization& par,
                          const AscentConfig& cfg, double gap_tol);

}  // namespace coloc
