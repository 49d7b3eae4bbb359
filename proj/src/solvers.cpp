#include "coloc/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace coloc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Sample {
  double omega;
  double value;
};

// Successive parabolic interpolation inside a bracket with a bisection guard.
void refine_basin(const std::function<double(double)>& f, double a, double b, double c,
                  double fb, double tol, int max_iters, std::vector<Sample>& samples,
                  int& evals) {
  double fa = kInf, fc = kInf;
  for (const Sample& s : samples) {
    if (s.omega == a) fa = s.value;
    if (s.omega == c) fc = s.value;
  }
  for (int it = 0; it < max_iters && (c - a) > tol; ++it) {
    double u;
    const double denom = (b - a) * (fb - fc) - (b - c) * (fb - fa);
    if (std::isfinite(denom) && std::abs(denom) > 1e-300 && std::isfinite(fa) &&
        std::isfinite(fc)) {
      u = b - 0.5 * ((b - a) * (b - a) * (fb - fc) - (b - c) * (b - c) * (fb - fa)) / denom;
    } else {
      u = kInf;  // force bisection
    }
    const double spacing = 0.1 * (c - a);
    if (!std::isfinite(u) || u <= a + 1e-15 || u >= c - 1e-15 ||
        std::abs(u - b) < 1e-3 * tol) {
      u = (b - a > c - b) ? 0.5 * (a + b) : 0.5 * (b + c);
    }
    // keep probes off the current points
    if (std::abs(u - b) < spacing * 1e-9) {
      u = (b - a > c - b) ? b - 0.5 * spacing : b + 0.5 * spacing;
    }
    const double fu = f(u);
    ++evals;
    samples.push_back({u, fu});
    if (u < b) {
      if (fu <= fb) {
        c = b; fc = fb; b = u; fb = fu;
      } else {
        a = u; fa = fu;
      }
    } else {
      if (fu <= fb) {
        a = b; fa = fb; b = u; fb = fu;
      } else {
        c = u; fc = fu;
      }
    }
  }
}

}  // namespace

ScalarSearchResult omega_search(const ScalarSearchSpec& spec) {
  const int n_seed = 9;
  std::vector<Sample> samples;
  samples.reserve(64);
  int evals = 0;
  for (int k = 0; k < n_seed; ++k) {
    const double w = static_cast<double>(k) / (n_seed - 1);
    samples.push_back({w, spec.objective(w)});
    ++evals;
  }
  // refine every local basin of the seed grid
  for (int k = 0; k < n_seed; ++k) {
    const double fk = samples[k].value;
    if (!std::isfinite(fk)) continue;
    const double fl = (k > 0) ? samples[k - 1].value : kInf;
    const double fr = (k + 1 < n_seed) ? samples[k + 1].value : kInf;
    if (fk <= fl && fk <= fr) {
      const double a = (k > 0) ? samples[k - 1].omega : samples[k].omega;
      const double c = (k + 1 < n_seed) ? samples[k + 1].omega : samples[k].omega;
      if (c > a) {
        refine_basin(spec.objective, a, samples[k].omega, c, fk, spec.tol,
                     spec.max_iters, samples, evals);
      }
    }
  }
  double best = kInf;
  for (const Sample& s : samples) best = std::min(best, s.value);
  ScalarSearchResult res;
  res.evaluations = evals;
  if (!std::isfinite(best)) {  // objective infinite everywhere sampled
    res.omega_star = 1.0;
    res.value = samples.back().value;
    return res;
  }
  // numerical ties resolve to the largest omega (most weight on the prior)
  const double tie_tol = 1e-12 * (1.0 + std::abs(best));
  double w_star = 0.0;
  for (const Sample& s : samples) {
    if (s.value <= best + tie_tol && s.omega > w_star) w_star = s.omega;
  }
  double v_star = kInf;
  for (const Sample& s : samples) {
    if (s.omega == w_star) v_star = std::min(v_star, s.value);
  }
  res.omega_star = w_star;
  res.value = v_star;
  return res;
}

ContractionPoint project_contraction(const Eigen::Ref<const Eigen::MatrixXd>& C,
                                     double delta) {
  const double cap = 1.0 - delta;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(C, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.singularValues().size() == 0 || svd.singularValues().maxCoeff() <= cap) {
    return {C};
  }
  Eigen::VectorXd s = svd.singularValues();
  for (Eigen::Index i = 0; i < s.size(); ++i) s[i] = std::min(s[i], cap);
  return {svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose()};
}

CrossParameterization cross_parameterization(
    const Eigen::Ref<const Eigen::MatrixXd>& P_i,
    const Eigen::Ref<const Eigen::MatrixXd>& P_j) {
  auto factor = [](const Eigen::Ref<const Eigen::MatrixXd>& P) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P);
    if (es.info() != Eigen::Success) {
      throw DegenerateBeliefError("cross_parameterization: eigendecomposition failed");
    }
    Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0);
    return Eigen::MatrixXd(es.eigenvectors() * lam.cwiseSqrt().asDiagonal());
  };
  return {factor(P_i), factor(P_j)};
}

namespace {

Eigen::MatrixXd fd_gradient_in_c(const std::function<double(const Eigen::MatrixXd&)>& g,
                                 const Eigen::MatrixXd& C, double fd_scale) {
  const double h = fd_scale * (1.0 + C.norm());
  Eigen::MatrixXd grad(C.rows(), C.cols());
  Eigen::MatrixXd probe = C;
  for (Eigen::Index r = 0; r < C.rows(); ++r) {
    for (Eigen::Index c = 0; c < C.cols(); ++c) {
      probe(r, c) = C(r, c) + h;
      const double fp = g(probe);
      probe(r, c) = C(r, c) - h;
      const double fm = g(probe);
      probe(r, c) = C(r, c);
      grad(r, c) = (std::isfinite(fp) && std::isfinite(fm)) ? (fp - fm) / (2.0 * h) : 0.0;
    }
  }
  return grad;
}

}  // namespace

AscentResult maximize_over_cross(
    const std::function<double(const Eigen::MatrixXd&)>& objective,
    const CrossParameterization& par, const AscentConfig& cfg,
    const std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>* gradient_in_x) {
  const Eigen::Index ni = par.A.rows();
  const Eigen::Index nj = par.B.rows();
  // All probes go through the projection so the objective only ever sees
  // feasible cross terms.
  auto g = [&](const Eigen::MatrixXd& C) {
    const Eigen::MatrixXd Cp = project_contraction(C, cfg.delta).C;
    return objective(par.A * Cp * par.B.transpose());
  };

  // deterministic seeds: the uncorrelated guess plus fixed perturbations
  std::vector<Eigen::MatrixXd> seeds;
  seeds.push_back(Eigen::MatrixXd::Zero(ni, nj));
  Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(ni, nj);
  seeds.push_back(0.5 * eye);
  seeds.push_back(-0.5 * eye);

  Eigen::MatrixXd C = seeds[0];
  double val = g(C);
  for (std::size_t k = 1; k < seeds.size(); ++k) {
    const double v = g(seeds[k]);
    if (v > val) {
      val = v;
      C = seeds[k];
    }
  }

  AscentResult res;
  res.accepted_values.push_back(val);
  double step = cfg.init_step;
  int stalls = 0;
  int it = 0;
  for (; it < cfg.max_iters; ++it) {
    Eigen::MatrixXd grad;
    if (cfg.analytic_gradient && gradient_in_x != nullptr) {
      const Eigen::MatrixXd X = par.A * C * par.B.transpose();
      grad = par.A.transpose() * (*gradient_in_x)(X)*par.B;
    } else {
      grad = fd_gradient_in_c(g, C, cfg.fd_step);
    }
    const double gn = grad.norm();
    if (gn < 1e-14 * (1.0 + std::abs(val))) {
      res.converged = true;  // stationary (or flat) objective
      break;
    }
    // backtracking line search on the projected step
    double t = step;
    bool accepted = false;
    Eigen::MatrixXd C_next;
    double v_next = val;
    for (int ls = 0; ls < 40; ++ls) {
      const Eigen::MatrixXd cand = project_contraction(C + (t / gn) * grad, cfg.delta).C;
      const double v = g(cand);
      if (v > val) {
        C_next = cand;
        v_next = v;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      res.converged = true;  // no ascent direction left at this scale
      break;
    }
    const double improve = (v_next - val) / std::max(1.0, std::abs(val));
    C = C_next;
    val = v_next;
    res.accepted_values.push_back(val);
    step = std::min(cfg.init_step, 2.0 * t);
    if (improve < cfg.stall_rtol) {
      if (++stalls >= cfg.stall_runs) {
        res.converged = true;
        break;
      }
    } else {
      stalls = 0;
    }
  }
  res.C_star = project_contraction(C, cfg.delta).C;
  res.X_star = par.A * res.C_star * par.B.transpose();
  res.value = val;
  res.iters = it;
  return res;
}

AscentResult logdet_max(const std::function<double(const Eigen::MatrixXd&)>& objective,
                        const Eigen::Ref<const Eigen::MatrixXd>& P_i,
                        const Eigen::Ref<const Eigen::MatrixXd>& P_j,
                        const AscentConfig& cfg) {
  return maximize_over_cross(objective, cross_parameterization(P_i, P_j), cfg, nullptr);
}

SaddleResult saddle_solve(const SaddleCallbacks& cb, const CrossParameterization& par,
                          const AscentConfig& cfg, double gap_tol) {
  const Eigen::Index nr = par.A.rows();
  const Eigen::Index nc = par.B.rows();
  const Eigen::Index dim = nr * nc;
  const double cap = 1.0 - cfg.delta;

  // The reduced objective is concave and smooth inside the feasible set, so
  // the outer maximization runs down a log-det barrier central path with
  // damped Newton steps (Hessians by differencing the analytic gradient).
  // The linearization gap at the current iterate both certifies convergence
  // and decides when the path has gone far enough.
  auto to_mat = [&](const Eigen::VectorXd& v) {
    Eigen::MatrixXd M(nr, nc);
    for (Eigen::Index k = 0; k < dim; ++k) M(k % nr, k / nr) = v[k];
    return M;
  };
  auto slack_of = [&](const Eigen::MatrixXd& C) {
    return Eigen::MatrixXd(cap * cap * Eigen::MatrixXd::Identity(nc, nc) -
                           C.transpose() * C);
  };
  auto barrier_objective = [&](const Eigen::MatrixXd& C, double mu) -> double {
    Eigen::LLT<Eigen::MatrixXd> llt(slack_of(C));
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    const double logdet =
        2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
    return cb.reduced_objective(par.A * C * par.B.transpose()) + mu * logdet;
  };
  auto barrier_gradient = [&](const Eigen::MatrixXd& C, double mu) {
    const Eigen::MatrixXd D = cb.reduced_gradient(par.A * C * par.B.transpose());
    const Eigen::MatrixXd S = slack_of(C);
    const Eigen::MatrixXd S_inv =
        S.llt().solve(Eigen::MatrixXd::Identity(nc, nc));
    return Eigen::MatrixXd(par.A.transpose() * D * par.B - 2.0 * mu * C * S_inv);
  };
  auto linearization_gap = [&](const Eigen::MatrixXd& C) {
    const Eigen::MatrixXd X = par.A * C * par.B.transpose();
    const Eigen::MatrixXd D = cb.reduced_gradient(X);
    const Eigen::MatrixXd G = par.A.transpose() * D * par.B;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(G);
    return cap * svd.singularValues().sum() - D.cwiseProduct(X).sum();
  };

  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(nr, nc);
  const double scale =
      std::max(std::abs(cb.reduced_objective(par.A * C * par.B.transpose())), 1e-12);
  Eigen::MatrixXd best_C = C;
  double best_fw = linearization_gap(C);
  int newton_steps = 0;

  int sweep_steps = 0;
  auto newton_stage = [&](double mu) {
    for (int step = 0; step < 40 && sweep_steps < cfg.max_iters; ++step) {
      ++newton_steps;
      ++sweep_steps;
      const Eigen::MatrixXd G0 = barrier_gradient(C, mu);
      Eigen::VectorXd g(dim);
      for (Eigen::Index k = 0; k < dim; ++k) g[k] = G0(k % nr, k / nr);

      // difference step kept well inside the current slack
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> se(slack_of(C),
                                                        Eigen::EigenvaluesOnly);
      const double s_min = std::max(se.eigenvalues().minCoeff(), 1e-16);
      const double h = std::max(1e-9, std::min(1e-5, 0.01 * s_min));
      Eigen::MatrixXd Hm(dim, dim);
      for (Eigen::Index k = 0; k < dim; ++k) {
        Eigen::MatrixXd Cp = C, Cm = C;
        Cp(k % nr, k / nr) += h;
        Cm(k % nr, k / nr) -= h;
        const Eigen::MatrixXd Gp = barrier_gradient(Cp, mu);
        const Eigen::MatrixXd Gm = barrier_gradient(Cm, mu);
        for (Eigen::Index l = 0; l < dim; ++l) {
          Hm(l, k) = (Gp(l % nr, l / nr) - Gm(l % nr, l / nr)) / (2.0 * h);
        }
      }
      Hm = 0.5 * (Hm + Hm.transpose());
      Eigen::MatrixXd neg_H = -Hm;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eh(neg_H, Eigen::EigenvaluesOnly);
      const double lam_min = eh.eigenvalues().minCoeff();
      if (lam_min < 1e-12) {
        neg_H += (1e-12 - lam_min) * Eigen::MatrixXd::Identity(dim, dim);
      }
      const Eigen::VectorXd d = neg_H.llt().solve(g);
      const double decrement = g.dot(d);

      const double f0 = barrier_objective(C, mu);
      double t = 1.0;
      bool accepted = false;
      const Eigen::MatrixXd Dm = to_mat(d);
      for (int ls = 0; ls < 60; ++ls) {
        const Eigen::MatrixXd cand = C + t * Dm;
        if (barrier_objective(cand, mu) > f0) {
          C = cand;
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted || decrement < 0.01 * mu) break;
    }
    const double fw = linearization_gap(C);
    if (fw < best_fw) {
      best_fw = fw;
      best_C = C;
    }
  };

  auto sweep = [&](double mu_start, double factor) {
    sweep_steps = 0;
    for (double mu = mu_start;
         mu > 1e-12 * scale && best_fw > 0.5 * gap_tol && sweep_steps < cfg.max_iters;
         mu *= factor) {
      newton_stage(mu);
    }
  };
  sweep(0.1 * scale, 0.1);
  if (best_fw > 0.5 * gap_tol) {
    // denser path following from the best point for the hard tail
    C = best_C;
    sweep(1e-3 * scale, 0.5);
  }
  C = best_C;
  const double fw_gap = best_fw;

  SaddleResult res;
  res.X_star = par.A * C * par.B.transpose();
  res.K_star = cb.best_response_gain(res.X_star);
  res.value = cb.reduced_objective(res.X_star);
  res.iters = newton_steps;

  // Certificate: any gain's worst case upper-bounds the saddle value; the
  // zero gain covers flat interior maxima where the best-response gain
  // carries sign noise.
  double upper = cb.max_at_gain(res.K_star);
  const Eigen::MatrixXd K0 =
      Eigen::MatrixXd::Zero(res.K_star.rows(), res.K_star.cols());
  upper = std::min(upper, cb.max_at_gain(K0));
  res.gap = std::min(fw_gap, upper - res.value);
  res.converged = res.gap <= gap_tol;
  return res;
}

}  // namespace coloc
