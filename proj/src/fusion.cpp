#include "coloc/fusion.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace coloc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

double symmetric_condition(const Eigen::MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (lo <= 0.0) return kInf;
  return hi / lo;
}

Eigen::VectorXd wrap_pose_mean(Eigen::VectorXd m) {
  if (m.size() == 3) m[2] = wrap_angle(m[2]);
  return m;
}

struct PairBlocks {
  Eigen::VectorXd x_l, x_k;
  Eigen::MatrixXd P_l, P_k;
  Eigen::MatrixXd H_l, H_k;
  Eigen::MatrixXd R;
  Eigen::VectorXd nu;
};

PairBlocks arrange(const Belief& self, const Belief& partner,
                   const RelativeMeasurement& meas, PairRole role) {
  if (self.mean.size() != 3 || partner.mean.size() != 3) {
    throw DegenerateBeliefError("relative update: pose states of dimension 3 required");
  }
  const Pose2D xi = Pose2D::from_vec(role == PairRole::Observer ? self.mean : partner.mean);
  const Pose2D xj = Pose2D::from_vec(role == PairRole::Observer ? partner.mean : self.mean);
  const RelativePrediction pred = evaluate_relative_model(meas.kind, xi, xj);
  PairBlocks b;
  b.nu = innovation(meas.z, pred.z_hat, meas.kind);
  b.R = meas.R.mat();
  b.x_l = self.mean;
  b.P_l = self.cov.mat();
  b.x_k = partner.mean;
  b.P_k = partner.cov.mat();
  b.H_l = (role == PairRole::Observer) ? pred.jac.H_obs : pred.jac.H_tgt;
  b.H_k = (role == PairRole::Observer) ? pred.jac.H_tgt : pred.jac.H_obs;
  return b;
}

Eigen::MatrixXd stacked_jacobian(const Eigen::MatrixXd& H_l, const Eigen::MatrixXd& H_k) {
  Eigen::MatrixXd H(H_l.rows(), H_l.cols() + H_k.cols());
  H << H_l, H_k;
  return H;
}

void require_pd(const Eigen::MatrixXd& P, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(P);
  if (llt.info() != Eigen::Success) {
    throw DegenerateBeliefError(std::string(what) + ": matrix is not positive definite");
  }
}

}  // namespace

void validate(const FusionConfig& cfg) {
  if (!(cfg.omega_eps > 0.0 && cfg.omega_eps < 0.5)) {
    throw std::invalid_argument("FusionConfig: omega_eps must lie in (0, 0.5)");
  }
  if (!(cfg.psd_margin > 0.0 && cfg.psd_margin < 1.0)) {
    throw std::invalid_argument("FusionConfig: psd_margin must lie in (0, 1)");
  }
  if (!(cfg.omega_tol > 0.0)) {
    throw std::invalid_argument("FusionConfig: omega_tol must be positive");
  }
}

Eigen::MatrixXd stack_joint(const Eigen::Ref<const Eigen::MatrixXd>& P_l,
                            const Eigen::Ref<const Eigen::MatrixXd>& P_k,
                            const Eigen::Ref<const Eigen::MatrixXd>& P_lk) {
  const Eigen::Index nl = P_l.rows();
  const Eigen::Index nk = P_k.rows();
  Eigen::MatrixXd J(nl + nk, nl + nk);
  J.topLeftCorner(nl, nl) = P_l;
  J.topRightCorner(nl, nk) = P_lk;
  J.bottomLeftCorner(nk, nl) = P_lk.transpose();
  J.bottomRightCorner(nk, nk) = P_k;
  return J;
}

Eigen::MatrixXd first_order_updated_cov(const Eigen::Ref<const Eigen::MatrixXd>& P_l,
                                        const Eigen::Ref<const Eigen::MatrixXd>& P_k,
                                        const Eigen::Ref<const Eigen::MatrixXd>& P_lk,
                                        const Eigen::Ref<const Eigen::MatrixXd>& H_l,
                                        const Eigen::Ref<const Eigen::MatrixXd>& H_k,
                                        const Eigen::Ref<const Eigen::MatrixXd>& R,
                                        const Eigen::Ref<const Eigen::MatrixXd>& K) {
  const Eigen::Index nl = P_l.rows();
  const Eigen::MatrixXd B1 = Eigen::MatrixXd::Identity(nl, nl) - K * H_l;
  const Eigen::MatrixXd B2 = -K * H_k;
  Eigen::MatrixXd P = B1 * P_l * B1.transpose() + B2 * P_k * B2.transpose() +
                      B1 * P_lk * B2.transpose() + B2 * P_lk.transpose() * B1.transpose() +
                      K * R * K.transpose();
  return symmetrized(P);
}

Eigen::MatrixXd emv_gain_blocks(const Eigen::Ref<const Eigen::MatrixXd>& P_l,
                                const Eigen::Ref<const Eigen::MatrixXd>& P_k,
                                const Eigen::Ref<const Eigen::MatrixXd>& P_lk,
                                const Eigen::Ref<const Eigen::MatrixXd>& H_l,
                                const Eigen::Ref<const Eigen::MatrixXd>& H_k,
                                const Eigen::Ref<const Eigen::MatrixXd>& R) {
  const Eigen::MatrixXd S = symmetrized(H_l * P_l * H_l.transpose() +
                                        H_l * P_lk * H_k.transpose() +
                                        H_k * P_lk.transpose() * H_l.transpose() +
                                        H_k * P_k * H_k.transpose() + R);
  if (symmetric_condition(S) > 1e12) {
    throw SingularInnovationError("innovation covariance is numerically singular");
  }
  const Eigen::MatrixXd top = P_l * H_l.transpose() + P_lk * H_k.transpose();
  return S.llt().solve(top.transpose()).transpose();
}

Eigen::MatrixXd emv_gain(const JointBelief& joint, const JacobianPair& jac,
                         const Eigen::Ref<const Eigen::MatrixXd>& R, PairRole for_agent) {
  const Eigen::MatrixXd cross =
      joint.P_ij ? *joint.P_ij
                 : Eigen::MatrixXd::Zero(joint.P_i.dim(), joint.P_j.dim());
  if (for_agent == PairRole::Observer) {
    return emv_gain_blocks(joint.P_i.mat(), joint.P_j.mat(), cross, jac.H_obs, jac.H_tgt, R);
  }
  return emv_gain_blocks(joint.P_j.mat(), joint.P_i.mat(), cross.transpose(), jac.H_tgt,
                         jac.H_obs, R);
}

namespace {

FusionResult known_cross_update(const Belief& self, const Belief& partner,
                                const Eigen::MatrixXd& cross,
                                const RelativeMeasurement& meas, PairRole role,
                                FusionMethod tag, bool validate_joint) {
  const PairBlocks b = arrange(self, partner, meas, role);
  if (validate_joint) {
    make_spd(stack_joint(b.P_l, b.P_k, cross));  // throws NotPsdError
  }
  const Eigen::MatrixXd K = emv_gain_blocks(b.P_l, b.P_k, cross, b.H_l, b.H_k, b.R);
  const Eigen::MatrixXd P = first_order_updated_cov(b.P_l, b.P_k, cross, b.H_l, b.H_k, b.R, K);
  FusionResult res;
  res.belief = Belief(wrap_pose_mean(b.x_l + K * b.nu), Covariance(P), self.agent_id,
                      self.stamp);
  res.gain = K;
  res.method = tag;
  return res;
}

}  // namespace

FusionResult emv_update(const Belief& self, const Belief& partner,
                        const Eigen::Ref<const Eigen::MatrixXd>& cross,
                        const RelativeMeasurement& meas, PairRole self_role) {
  return known_cross_update(self, partner, cross, meas, self_role, FusionMethod::Emv, true);
}

FusionResult naive_update(const Belief& self, const Belief& partner,
                          const RelativeMeasurement& meas, PairRole self_role) {
  const Eigen::MatrixXd zero =
      Eigen::MatrixXd::Zero(self.mean.size(), partner.mean.size());
  return known_cross_update(self, partner, zero, meas, self_role, FusionMethod::Naive,
                            false);
}

JointBelief joint_oracle_update_blocks(const JointBelief& joint,
                                       const Eigen::Ref<const Eigen::MatrixXd>& H_i,
                                       const Eigen::Ref<const Eigen::MatrixXd>& H_j,
                                       const Eigen::Ref<const Eigen::MatrixXd>& R,
                                       const Eigen::Ref<const Eigen::VectorXd>& nu,
                                       bool information_form) {
  const Eigen::Index ni = joint.P_i.dim();
  const Eigen::Index nj = joint.P_j.dim();
  const Eigen::MatrixXd cross =
      joint.P_ij ? *joint.P_ij : Eigen::MatrixXd::Zero(ni, nj);
  const Eigen::MatrixXd P_J = stack_joint(joint.P_i.mat(), joint.P_j.mat(), cross);
  const Eigen::MatrixXd H = stacked_jacobian(H_i, H_j);

  Eigen::MatrixXd K, P_new;
  if (information_form) {
    Eigen::LLT<Eigen::MatrixXd> lltP(P_J);
    if (lltP.info() != Eigen::Success) {
      throw DegenerateBeliefError("joint oracle: joint covariance not positive definite");
    }
    const Eigen::MatrixXd R_dense = R;
    Eigen::LLT<Eigen::MatrixXd> lltR(R_dense);
    const Eigen::MatrixXd R_inv =
        lltR.solve(Eigen::MatrixXd::Identity(R.rows(), R.cols()));
    const Eigen::MatrixXd info = symmetrized(
        lltP.solve(Eigen::MatrixXd::Identity(P_J.rows(), P_J.cols())) +
        H.transpose() * R_inv * H);
    P_new = symmetrized(
        info.llt().solve(Eigen::MatrixXd::Identity(info.rows(), info.cols())));
    K = P_new * H.transpose() * R_inv;
  } else {
    const Eigen::MatrixXd S = symmetrized(H * P_J * H.transpose() + R);
    if (symmetric_condition(S) > 1e12) {
      throw SingularInnovationError("joint oracle: innovation covariance singular");
    }
    K = S.llt().solve(H * P_J).transpose();
    const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(ni + nj, ni + nj) - K * H;
    P_new = symmetrized(A * P_J * A.transpose() + K * R * K.transpose());
  }

  Eigen::VectorXd x(ni + nj);
  x << joint.mean_i, joint.mean_j;
  x += K * nu;
  JointBelief out;
  out.mean_i = wrap_pose_mean(x.head(ni));
  out.mean_j = wrap_pose_mean(x.tail(nj));
  out.P_i = Covariance(P_new.topLeftCorner(ni, ni));
  out.P_j = Covariance(P_new.bottomRightCorner(nj, nj));
  out.P_ij = P_new.topRightCorner(ni, nj);
  return out;
}

namespace {

JointBelief joint_update_from_measurement(const JointBelief& joint,
                                          const RelativeMeasurement& meas,
                                          bool information_form) {
  if (joint.mean_i.size() != 3 || joint.mean_j.size() != 3) {
    throw DegenerateBeliefError("joint oracle: pose states of dimension 3 required");
  }
  const RelativePrediction pred = evaluate_relative_model(
      meas.kind, Pose2D::from_vec(joint.mean_i), Pose2D::from_vec(joint.mean_j));
  const Eigen::VectorXd nu = innovation(meas.z, pred.z_hat, meas.kind);
  return joint_oracle_update_blocks(joint, pred.jac.H_obs, pred.jac.H_tgt, meas.R.mat(),
                                    nu, information_form);
}

}  // namespace

JointBelief joint_oracle_update(const JointBelief& joint, const RelativeMeasurement& meas) {
  return joint_update_from_measurement(joint, meas, false);
}

JointBelief joint_oracle_update_information(const JointBelief& joint,
                                            const RelativeMeasurement& meas) {
  return joint_update_from_measurement(joint, meas, true);
}

DmvEvaluation dmv_eval(const Eigen::Ref<const Eigen::MatrixXd>& P_l,
                       const Eigen::Ref<const Eigen::MatrixXd>& P_k,
                       const Eigen::Ref<const Eigen::MatrixXd>& H_l,
                       const Eigen::Ref<const Eigen::MatrixXd>& H_k,
                       const Eigen::Ref<const Eigen::MatrixXd>& R, double omega,
                       GammaMode gamma, bool want_gain) {
  DmvEvaluation out;
  const Eigen::Index nl = P_l.rows();
  const Eigen::Index nz = R.rows();
  if (omega >= 1.0 - 1e-12) {
    // bound reduces to the prior: zero gain, prior covariance
    out.bounded = true;
    out.cov = P_l;
    out.trace = P_l.trace();
    Eigen::LLT<Eigen::MatrixXd> llt(out.cov);
    if (llt.info() == Eigen::Success) {
      out.log_det = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
    } else {
      out.log_det = -kInf;
    }
    if (want_gain) out.gain = Eigen::MatrixXd::Zero(nl, nz);
    return out;
  }

  // information form of the bound-minimizing update; finite for any
  // omega in [0, 1) whenever the inner matrix is invertible
  const double r_scale = (gamma == GammaMode::One) ? (1.0 - omega) : 1.0;
  const Eigen::MatrixXd M = symmetrized(H_k * P_k * H_k.transpose() + r_scale * R);
  Eigen::LLT<Eigen::MatrixXd> lltM(M);
  if (lltM.info() != Eigen::Success) {
    out.bounded = false;
    out.log_det = kInf;
    out.trace = kInf;
    return out;
  }
  const Eigen::MatrixXd P_l_dense = P_l;
  Eigen::LLT<Eigen::MatrixXd> lltP(P_l_dense);
  if (lltP.info() != Eigen::Success) {
    throw DegenerateBeliefError("dmv_eval: prior covariance not positive definite");
  }
  const Eigen::MatrixXd P_l_inv =
      lltP.solve(Eigen::MatrixXd::Identity(nl, nl));
  const Eigen::MatrixXd W = lltM.solve(Eigen::MatrixXd(H_l));  // M^{-1} H_l
  const Eigen::MatrixXd inner =
      symmetrized(omega * P_l_inv + (1.0 - omega) * H_l.transpose() * W);
  Eigen::LLT<Eigen::MatrixXd> lltI(inner);
  if (lltI.info() != Eigen::Success) {
    out.bounded = false;  // bound unbounded along some direction
    out.log_det = kInf;
    out.trace = kInf;
    return out;
  }
  out.bounded = true;
  out.cov = symmetrized(lltI.solve(Eigen::MatrixXd::Identity(nl, nl)));
  out.log_det = -2.0 * Eigen::MatrixXd(lltI.matrixL()).diagonal().array().log().sum();
  out.trace = out.cov.trace();
  if (want_gain) {
    out.gain = (1.0 - omega) * out.cov * W.transpose();
  }
  return out;
}

Eigen::MatrixXd dmv_gain(const Eigen::Ref<const Eigen::MatrixXd>& P_l,
                         const Eigen::Ref<const Eigen::MatrixXd>& P_k,
                         const Eigen::Ref<const Eigen::MatrixXd>& H_l,
                         const Eigen::Ref<const Eigen::MatrixXd>& H_k,
                         const Eigen::Ref<const Eigen::MatrixXd>& R, double omega,
                         GammaMode gamma) {
  DmvEvaluation e = dmv_eval(P_l, P_k, H_l, H_k, R, omega, gamma, true);
  if (!e.bounded) {
    throw DegenerateBeliefError("dmv_gain: bound covariance unbounded at this omega");
  }
  return e.gain;
}

Eigen::MatrixXd discorrelated_bound_cov(const Eigen::Ref<const Eigen::MatrixXd>& P_l,
                                        const Eigen::Ref<const Eigen::MatrixXd>& P_k,
                                        const Eigen::Ref<const Eigen::MatrixXd>& H_l,
                                        const Eigen::Ref<const Eigen::MatrixXd>& H_k,
                                        const Eigen::Ref<const Eigen::MatrixXd>& R,
                                        const Eigen::Ref<const Eigen::MatrixXd>& K,
                                        double omega, GammaMode gamma) {
  if (!(omega > 0.0 && omega < 1.0)) {
    throw std::invalid_argument("discorrelated_bound_cov: omega must be interior");
  }
  const double g = (gamma == GammaMode::One) ? 1.0 : (1.0 - omega);
  const Eigen::Index nl = P_l.rows();
  const Eigen::MatrixXd B1 = Eigen::MatrixXd::Identity(nl, nl) - K * H_l;
  const Eigen::MatrixXd B2 = -K * H_k;
  return symmetrized(B1 * (P_l / omega) * B1.transpose() +
                     B2 * (P_k / (1.0 - omega)) * B2.transpose() +
                     K * (R / g) * K.transpose());
}

FusionResult dmv_update(const Belief& self, const Belief& partner,
                        const RelativeMeasurement& meas, PairRole self_role,
                        const FusionConfig& cfg) {
  validate(cfg);
  const PairBlocks b = arrange(self, partner, meas, self_role);

  auto objective = [&](double w) {
    const DmvEvaluation e = dmv_eval(b.P_l, b.P_k, b.H_l, b.H_k, b.R, w, cfg.gamma_mode,
                                     false);
    if (!e.bounded) return kInf;
    return cfg.omega_objective == OmegaObjective::LogDet ? e.log_det : e.trace;
  };
  ScalarSearchSpec spec;
  spec.objective = objective;
  spec.tol = cfg.omega_tol;
  spec.max_iters = cfg.omega_max_iters;
  ScalarSearchResult found = omega_search(spec);

  // snap near-boundary optima onto the exact analytic endpoint when that
  // does not cost more than the search tolerance
  double w_star = found.omega_star;
  for (double boundary : {0.0, 1.0}) {
    if (w_star != boundary && std::abs(w_star - boundary) < cfg.omega_eps) {
      const double v = objective(boundary);
      if (v <= found.value + cfg.omega_tol) {
        w_star = boundary;
        found.value = std::min(found.value, v);
      }
    }
  }

  const DmvEvaluation e = dmv_eval(b.P_l, b.P_k, b.H_l, b.H_k, b.R, w_star,
                                   cfg.gamma_mode, true);
  FusionResult res;
  res.belief = Belief(wrap_pose_mean(b.x_l + e.gain * b.nu), Covariance(e.cov),
                      self.agent_id, self.stamp);
  res.gain = e.gain;
  res.method = FusionMethod::Dmv;
  res.omega_star = w_star;
  res.objective = cfg.omega_objective == OmegaObjective::LogDet ? e.log_det : e.trace;
  res.solver_iters = found.evaluations;
  return res;
}

FusionResult ecmv_update(const Belief& self, const Belief& partner,
                         const RelativeMeasurement& meas, PairRole self_role,
                         const FusionConfig& cfg) {
  validate(cfg);
  const PairBlocks b = arrange(self, partner, meas, self_role);
  const CrossParameterization par = cross_parameterization(b.P_l, b.P_k);
  const Eigen::Index nl = b.P_l.rows();

  SaddleCallbacks cb;
  cb.best_response_gain = [&](const Eigen::MatrixXd& X) {
    return emv_gain_blocks(b.P_l, b.P_k, X, b.H_l, b.H_k, b.R);
  };
  cb.reduced_objective = [&](const Eigen::MatrixXd& X) {
    const Eigen::MatrixXd K = cb.best_response_gain(X);
    return first_order_updated_cov(b.P_l, b.P_k, X, b.H_l, b.H_k, b.R, K).trace();
  };
  cb.reduced_gradient = [&](const Eigen::MatrixXd& X) {
    // the objective is affine in X at fixed gain; by the envelope argument the
    // reduced gradient is that coefficient at the minimizing gain
    const Eigen::MatrixXd K = cb.best_response_gain(X);
    const Eigen::MatrixXd B1 = Eigen::MatrixXd::Identity(nl, nl) - K * b.H_l;
    const Eigen::MatrixXd B2 = -K * b.H_k;
    return Eigen::MatrixXd(2.0 * B1.transpose() * B2);
  };
  const double cap = 1.0 - cfg.psd_margin;
  cb.max_at_gain = [&, cap](const Eigen::MatrixXd& K) {
    const Eigen::MatrixXd B1 = Eigen::MatrixXd::Identity(nl, nl) - K * b.H_l;
    const Eigen::MatrixXd B2 = -K * b.H_k;
    const double base = (B1 * b.P_l * B1.transpose()).trace() +
                        (B2 * b.P_k * B2.transpose()).trace() +
                        (K * b.R * K.transpose()).trace();
    const Eigen::MatrixXd G = par.A.transpose() * B1.transpose() * B2 * par.B;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(G);
    return base + 2.0 * cap * svd.singularValues().sum();
  };

  AscentConfig acfg = cfg.ascent;
  acfg.delta = cfg.psd_margin;
  const double gap_tol = cfg.saddle_gap_rtol * std::max(b.P_l.trace(), 1e-300);
  const SaddleResult s = saddle_solve(cb, par, acfg, gap_tol);
  if (!s.converged) {
    throw SaddleNotConvergedError("ecmv_update: saddle gap above tolerance", s.gap,
                                  s.iters);
  }
  const Eigen::MatrixXd P =
      first_order_updated_cov(b.P_l, b.P_k, s.X_star, b.H_l, b.H_k, b.R, s.K_star);
  FusionResult res;
  res.belief = Belief(wrap_pose_mean(b.x_l + s.K_star * b.nu), Covariance(P),
                      self.agent_id, self.stamp);
  res.gain = s.K_star;
  res.method = FusionMethod::Ecmv;
  res.X_star = s.X_star;
  res.objective = s.value;
  res.solver_iters = s.iters;
  return res;
}

FusionResult pecmv_update(const Belief& self, const Belief& partner,
                          const RelativeMeasurement& meas, PairRole self_role,
                          const FusionConfig& cfg) {
  validate(cfg);
  const PairBlocks b = arrange(self, partner, meas, self_role);
  require_pd(b.P_l, "pecmv_update: self prior");
  require_pd(b.P_k, "pecmv_update: partner prior");
  const Eigen::Index nl = b.P_l.rows();
  const Eigen::Index n = nl + b.P_k.rows();

  const Eigen::MatrixXd H = stacked_jacobian(b.H_l, b.H_k);
  const Eigen::MatrixXd R_inv =
      b.R.llt().solve(Eigen::MatrixXd::Identity(b.R.rows(), b.R.cols()));
  const Eigen::MatrixXd HtRinvH = symmetrized(H.transpose() * R_inv * H);

  // determinant of the marginal block of the information-form joint update
  auto objective = [&](const Eigen::MatrixXd& X) -> double {
    const Eigen::MatrixXd J = stack_joint(b.P_l, b.P_k, X);
    Eigen::LLT<Eigen::MatrixXd> lltJ(J);
    if (lltJ.info() != Eigen::Success) return -kInf;
    const Eigen::MatrixXd info =
        symmetrized(lltJ.solve(Eigen::MatrixXd::Identity(n, n)) + HtRinvH);
    Eigen::LLT<Eigen::MatrixXd> lltI(info);
    if (lltI.info() != Eigen::Success) return -kInf;
    const Eigen::MatrixXd cov_J = lltI.solve(Eigen::MatrixXd::Identity(n, n));
    return cov_J.topLeftCorner(nl, nl).determinant();
  };
  // closed-form gradient of the same determinant, for the fast path
  std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)> gradient =
      [&](const Eigen::MatrixXd& X) -> Eigen::MatrixXd {
    const Eigen::Index nk = b.P_k.rows();
    const Eigen::MatrixXd J = stack_joint(b.P_l, b.P_k, X);
    Eigen::LLT<Eigen::MatrixXd> lltJ(J);
    if (lltJ.info() != Eigen::Success) return Eigen::MatrixXd::Zero(nl, nk);
    const Eigen::MatrixXd J_inv = lltJ.solve(Eigen::MatrixXd::Identity(n, n));
    const Eigen::MatrixXd info = symmetrized(J_inv + HtRinvH);
    Eigen::LLT<Eigen::MatrixXd> lltI(info);
    if (lltI.info() != Eigen::Success) return Eigen::MatrixXd::Zero(nl, nk);
    const Eigen::MatrixXd M = lltI.solve(Eigen::MatrixXd::Identity(n, n));
    const Eigen::MatrixXd block = M.topLeftCorner(nl, nl);
    Eigen::LLT<Eigen::MatrixXd> lltB(block);
    if (lltB.info() != Eigen::Success) return Eigen::MatrixXd::Zero(nl, nk);
    const Eigen::MatrixXd block_inv =
        lltB.solve(Eigen::MatrixXd::Identity(nl, nl));
    const Eigen::MatrixXd JM = J_inv * M;  // d(marginal) pulled back through J
    const Eigen::MatrixXd W =
        JM.leftCols(nl) * block_inv * JM.transpose().topRows(nl);
    return 2.0 * block.determinant() * W.topRightCorner(nl, nk);
  };

  AscentConfig acfg = cfg.ascent;
  acfg.delta = cfg.psd_margin;
  const CrossParameterization par = cross_parameterization(b.P_l, b.P_k);
  auto solve_once = [&]() {
    return cfg.ascent.analytic_gradient
               ? maximize_over_cross(objective, par, acfg, &gradient)
               : maximize_over_cross(objective, par, acfg, nullptr);
  };
  AscentResult a = solve_once();
  if (!a.converged) {
    // deterministic ascent: a larger budget retraces and continues the path
    acfg.max_iters = 8 * cfg.ascent.max_iters;
    a = solve_once();
  }
  if (!a.converged) {
    throw SolverNotConvergedError("pecmv_update: objective still improving at cap",
                                  a.value, a.iters);
  }
  const Eigen::MatrixXd K = emv_gain_blocks(b.P_l, b.P_k, a.X_star, b.H_l, b.H_k, b.R);
  const Eigen::MatrixXd P =
      first_order_updated_cov(b.P_l, b.P_k, a.X_star, b.H_l, b.H_k, b.R, K);
  FusionResult res;
  res.belief = Belief(wrap_pose_mean(b.x_l + K * b.nu), Covariance(P), self.agent_id,
                      self.stamp);
  res.gain = K;
  res.method = FusionMethod::Pecmv;
  res.X_star = a.X_star;
  res.objective = a.value;
  res.solver_iters = a.iters;
  return res;
}

FusionResult dispatch_update(const Belief& self, const Belief& partner,
                             const RelativeMeasurement& meas, FusionMethod method,
                             PairRole self_role, const FusionConfig& cfg) {
  switch (method) {
    case FusionMethod::Naive: return naive_update(self, partner, meas, self_role);
    case FusionMethod::Dmv: return dmv_update(self, partner, meas, self_role, cfg);
    case FusionMethod::Ecmv: return ecmv_update(self, partner, meas, self_role, cfg);
    case FusionMethod::Pecmv: return pecmv_update(self, partner, meas, self_role, cfg);
    case FusionMethod::Emv:
      throw std::invalid_argument("dispatch_update: emv needs an explicit cross term");
  }
  throw std::invalid_argument("dispatch_update: unknown method");
}

FusionResult sequential_update(const Belief& self,
                               const std::vector<PartnerMeasurement>& items,
                               FusionMethod method, const FusionConfig& cfg) {
  FusionResult res;
  res.belief = self;
  res.method = method;
  res.gain = Eigen::MatrixXd::Zero(self.mean.size(), 0);
  if (items.empty()) return res;

  const int stamp = items.front().meas.stamp;
  for (const PartnerMeasurement& pm : items) {
    if (pm.meas.stamp != stamp) {
      throw std::invalid_argument("sequential_update: measurements span timesteps");
    }
    PairRole role;
    if (pm.meas.observer == self.agent_id && pm.meas.target == pm.partner.agent_id) {
      role = PairRole::Observer;
    } else if (pm.meas.target == self.agent_id &&
               pm.meas.observer == pm.partner.agent_id) {
      role = PairRole::Target;
    } else {
      throw std::invalid_argument("sequential_update: measurement does not pair self "
                                  "with the given partner");
    }
    FusionResult step = dispatch_update(res.belief, pm.partner, pm.meas, method, role, cfg);
    step.solver_iters += res.solver_iters;
    res = std::move(step);
  }
  return res;
}

}  // namespace coloc
