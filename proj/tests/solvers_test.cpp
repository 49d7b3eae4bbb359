#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "coloc/fusion.hpp"
#include "coloc/solvers.hpp"

using namespace coloc;

namespace {

// symmetric scalar pair: unit priors and noise, difference measurement
struct ScalarCase {
  double P_i = 1.0, P_j = 1.0, R = 1.0;
  Eigen::MatrixXd m(double v) const { return Eigen::MatrixXd::Constant(1, 1, v); }
  Eigen::MatrixXd Pi() const { return m(P_i); }
  Eigen::MatrixXd Pj() const { return m(P_j); }
  Eigen::MatrixXd Hi() const { return m(-1.0); }
  Eigen::MatrixXd Hj() const { return m(1.0); }
  Eigen::MatrixXd Rm() const { return m(R); }

  double dmv_objective(double w) const {
    const DmvEvaluation e = dmv_eval(Pi(), Pj(), Hi(), Hj(), Rm(), w, GammaMode::One,
                                     false);
    return e.bounded ? e.log_det : std::numeric_limits<double>::infinity();
  }
};

}  // namespace

TEST_CASE("quadratic objective recovers its minimizer") {
  ScalarSearchSpec spec;
  spec.objective = [](double w) { return (w - 0.3) * (w - 0.3); };
  spec.tol = 1e-8;
  const ScalarSearchResult r = omega_search(spec);
  CHECK(r.omega_star == doctest::Approx(0.3).epsilon(1e-5));
  CHECK(r.value == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("symmetric scalar pair pushes omega to one") {
  ScalarCase s;  // equal peers, unknown correlation: keeping the prior is optimal
  ScalarSearchSpec spec;
  spec.objective = [&](double w) { return s.dmv_objective(w); };
  const ScalarSearchResult r = omega_search(spec);
  CHECK(r.omega_star == 1.0);

  double grid_best = std::numeric_limits<double>::infinity();
  double grid_arg = 0.0;
  for (int k = 0; k <= 10000; ++k) {
    const double v = s.dmv_objective(k / 10000.0);
    if (v < grid_best) {
      grid_best = v;
      grid_arg = k / 10000.0;
    }
  }
  CHECK(grid_arg == doctest::Approx(1.0));
  CHECK(r.value <= grid_best + 1e-6);
}

TEST_CASE("asymmetric scalar pair pushes omega to zero") {
  ScalarCase s;
  s.P_i = 1.0;
  s.P_j = 0.01;
  s.R = 0.01;
  ScalarSearchSpec spec;
  spec.objective = [&](double w) { return s.dmv_objective(w); };
  const ScalarSearchResult r = omega_search(spec);
  CHECK(r.omega_star == doctest::Approx(0.0));

  double grid_best = std::numeric_limits<double>::infinity();
  double grid_arg = 1.0;
  for (int k = 0; k <= 10000; ++k) {
    const double v = s.dmv_objective(k / 10000.0);
    if (v < grid_best) {
      grid_best = v;
      grid_arg = k / 10000.0;
    }
  }
  CHECK(grid_arg == doctest::Approx(0.0));
  CHECK(r.value <= grid_best + 1e-6);
}

TEST_CASE("search result never loses to a dense grid") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    ScalarCase s;
    s.P_i = 0.05 + 2.0 * u(rng);
    s.P_j = 0.05 + 2.0 * u(rng);
    s.R = 0.01 + 0.5 * u(rng);
    ScalarSearchSpec spec;
    spec.objective = [&](double w) { return s.dmv_objective(w); };
    const ScalarSearchResult r = omega_search(spec);
    double grid_best = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 1000; ++k) {
      grid_best = std::min(grid_best, s.dmv_objective(k / 1000.0));
    }
    CHECK(r.value <= grid_best + spec.tol);
  }
}

TEST_CASE("contraction projection clamps and is idempotent") {
  const double delta = 1e-6;
  Eigen::MatrixXd C = 0.5 * Eigen::MatrixXd::Identity(2, 2);
  CHECK((project_contraction(C, delta).C - C).norm() == doctest::Approx(0.0));

  Eigen::MatrixXd big = 2.0 * Eigen::MatrixXd::Identity(3, 3);
  const Eigen::MatrixXd clamped = project_contraction(big, delta).C;
  CHECK((clamped - (1.0 - delta) * Eigen::MatrixXd::Identity(3, 3)).norm() ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK((project_contraction(clamped, delta).C - clamped).norm() ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("projected cross terms keep the joint block matrix psd") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::MatrixXd Ai(3, 3), Aj(3, 3), C(3, 3);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        Ai(r, c) = g(rng);
        Aj(r, c) = g(rng);
        C(r, c) = 2.0 * g(rng);
      }
    }
    const Eigen::MatrixXd P_i = Ai * Ai.transpose() + 0.05 * Eigen::MatrixXd::Identity(3, 3);
    const Eigen::MatrixXd P_j = Aj * Aj.transpose() + 0.05 * Eigen::MatrixXd::Identity(3, 3);
    const CrossParameterization par = cross_parameterization(P_i, P_j);
    const Eigen::MatrixXd Cp = project_contraction(C, 1e-6).C;
    const Eigen::MatrixXd X = par.A * Cp * par.B.transpose();
    Eigen::MatrixXd J(6, 6);
    J << P_i, X, X.transpose(), P_j;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().minCoeff() >= -1e-9 * J.trace());
  }
}

TEST_CASE("projection is nonexpansive in frobenius norm") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::MatrixXd C1(2, 3), C2(2, 3);
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 3; ++c) {
        C1(r, c) = 3.0 * g(rng);
        C2(r, c) = 3.0 * g(rng);
      }
    }
    const Eigen::MatrixXd p1 = project_contraction(C1, 1e-6).C;
    const Eigen::MatrixXd p2 = project_contraction(C2, 1e-6).C;
    CHECK((p1 - p2).norm() <= (C1 - C2).norm() + 1e-12);
  }
}

namespace {

// scalar marginal determinant of the information-form pair update
double scalar_pecmv_objective(const ScalarCase& s, double X) {
  Eigen::MatrixXd J(2, 2);
  J << s.P_i, X, X, s.P_j;
  Eigen::LLT<Eigen::MatrixXd> llt(J);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  Eigen::MatrixXd H(1, 2);
  H << -1.0, 1.0;
  const Eigen::MatrixXd info =
      llt.solve(Eigen::MatrixXd::Identity(2, 2)) + H.transpose() * H / s.R;
  const Eigen::MatrixXd cov = info.inverse();
  return cov(0, 0);
}

}  // namespace

TEST_CASE("scalar determinant objective maximizes at the contraction boundary") {
  ScalarCase s;
  AscentConfig cfg;
  cfg.delta = 1e-6;
  auto objective = [&](const Eigen::MatrixXd& X) {
    return scalar_pecmv_objective(s, X(0, 0));
  };
  const AscentResult r = logdet_max(objective, s.Pi(), s.Pj(), cfg);
  CHECK(r.converged);
  // dense grid oracle over the open interval
  double grid_best = -std::numeric_limits<double>::infinity();
  double grid_arg = 0.0;
  for (int k = 1; k < 10000; ++k) {
    const double X = -1.0 + 2.0 * k / 10000.0;
    const double v = scalar_pecmv_objective(s, X);
    if (v > grid_best) {
      grid_best = v;
      grid_arg = X;
    }
  }
  CHECK(grid_arg > 0.99);  // increasing objective: supremum at the +1 boundary
  CHECK(r.X_star(0, 0) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(r.value >= grid_best - 1e-6);
  CHECK(r.value == doctest::Approx(1.0).epsilon(1e-3));  // approaches the prior
}

TEST_CASE("flat objective returns the zero seed") {
  ScalarCase s;
  auto objective = [&](const Eigen::MatrixXd&) { return 42.0; };
  AscentConfig cfg;
  const AscentResult r = logdet_max(objective, s.Pi(), s.Pj(), cfg);
  CHECK(r.converged);
  CHECK(r.X_star(0, 0) == doctest::Approx(0.0));
  CHECK(r.value == 42.0);
}

TEST_CASE("ascent agrees with a dense grid on random scalar instances") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    ScalarCase s;
    s.P_i = 0.2 + 2.0 * u(rng);
    s.P_j = 0.2 + 2.0 * u(rng);
    s.R = 0.05 + u(rng);
    auto objective = [&](const Eigen::MatrixXd& X) {
      return scalar_pecmv_objective(s, X(0, 0));
    };
    AscentConfig cfg;
    cfg.max_iters = 2000;
    const AscentResult r = logdet_max(objective, s.Pi(), s.Pj(), cfg);
    // grid over the same margin-clamped feasible interval, endpoints included
    const double scale = (1.0 - cfg.delta) * std::sqrt(s.P_i * s.P_j);
    double grid_best = -std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 10000; ++k) {
      const double X = scale * (-1.0 + 2.0 * k / 10000.0);
      grid_best = std::max(grid_best, scalar_pecmv_objective(s, X));
    }
    CHECK(r.value == doctest::Approx(grid_best).epsilon(1e-6));
  }
}

TEST_CASE("ascent values are monotone across accepted iterations") {
  ScalarCase s;
  s.P_i = 1.3;
  s.P_j = 0.8;
  s.R = 0.3;
  auto objective = [&](const Eigen::MatrixXd& X) {
    return scalar_pecmv_objective(s, X(0, 0));
  };
  AscentConfig cfg;
  const AscentResult r = logdet_max(objective, s.Pi(), s.Pj(), cfg);
  for (std::size_t k = 1; k < r.accepted_values.size(); ++k) {
    CHECK(r.accepted_values[k] >= r.accepted_values[k - 1]);
  }
}

namespace {

struct ScalarSaddle {
  ScalarCase s;

  double full_objective(double K, double X) const {
    const double B1 = 1.0 + K;   // I - K * (-1)
    const double B2 = -K;        // -K * (+1)
    return B1 * B1 * s.P_i + B2 * B2 * s.P_j + 2.0 * B1 * B2 * X + K * K * s.R;
  }

  SaddleCallbacks callbacks(const CrossParameterization& par, double delta) const {
    SaddleCallbacks cb;
    cb.best_response_gain = [this](const Eigen::MatrixXd& X) {
      return emv_gain_blocks(s.Pi(), s.Pj(), X, s.Hi(), s.Hj(), s.Rm());
    };
    cb.reduced_objective = [this](const Eigen::MatrixXd& X) {
      const Eigen::MatrixXd K = emv_gain_blocks(s.Pi(), s.Pj(), X, s.Hi(), s.Hj(), s.Rm());
      return full_objective(K(0, 0), X(0, 0));
    };
    cb.reduced_gradient = [this](const Eigen::MatrixXd& X) {
      const Eigen::MatrixXd K = emv_gain_blocks(s.Pi(), s.Pj(), X, s.Hi(), s.Hj(), s.Rm());
      const double k = K(0, 0);
      return Eigen::MatrixXd::Constant(1, 1, 2.0 * (1.0 + k) * (-k));
    };
    cb.max_at_gain = [this, par, delta](const Eigen::MatrixXd& K) {
      const double k = K(0, 0);
      const double base = (1 + k) * (1 + k) * s.P_i + k * k * s.P_j + k * k * s.R;
      const double cross_coeff = 2.0 * (1 + k) * (-k) * par.A(0, 0) * par.B(0, 0);
      return base + (1.0 - delta) * std::abs(cross_coeff);
    };
    return cb;
  }
};

}  // namespace

TEST_CASE("scalar saddle point matches a dense 2-d grid") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    ScalarSaddle prob;
    prob.s.P_i = 0.3 + 1.5 * u(rng);
    prob.s.P_j = 0.3 + 1.5 * u(rng);
    prob.s.R = 0.05 + 0.5 * u(rng);
    const CrossParameterization par =
        cross_parameterization(prob.s.Pi(), prob.s.Pj());
    AscentConfig cfg;
    cfg.max_iters = 2000;
    const SaddleResult r =
        saddle_solve(prob.callbacks(par, cfg.delta), par, cfg,
                     1e-6 * prob.s.P_i);
    CHECK(r.converged);
    CHECK(r.gap >= -1e-12);

    // min over K of max over X on a dense grid
    const double scale = std::sqrt(prob.s.P_i * prob.s.P_j);
    double best_outer = std::numeric_limits<double>::infinity();
    for (int a = 0; a <= 400; ++a) {
      const double K = -2.0 + 4.0 * a / 400.0;
      double worst = -std::numeric_limits<double>::infinity();
      for (int b = 0; b <= 400; ++b) {
        const double X = scale * (-0.999 + 1.998 * b / 400.0);
        worst = std::max(worst, prob.full_objective(K, X));
      }
      best_outer = std::min(best_outer, worst);
    }
    CHECK(r.value == doctest::Approx(best_outer).epsilon(2e-3));
  }
}

TEST_CASE("vanishing partner covariance pins the cross term near zero") {
  ScalarSaddle prob;
  prob.s.P_j = 1e-12;
  const CrossParameterization par = cross_parameterization(prob.s.Pi(), prob.s.Pj());
  AscentConfig cfg;
  const SaddleResult r =
      saddle_solve(prob.callbacks(par, cfg.delta), par, cfg, 1e-6 * prob.s.P_i);
  CHECK(std::abs(r.X_star(0, 0)) < 1e-6);
  // equals the zero-cross update
  const Eigen::MatrixXd K0 = emv_gain_blocks(prob.s.Pi(), prob.s.Pj(),
                                             Eigen::MatrixXd::Zero(1, 1), prob.s.Hi(),
                                             prob.s.Hj(), prob.s.Rm());
  CHECK(r.K_star(0, 0) == doctest::Approx(K0(0, 0)).epsilon(1e-5));
}

TEST_CASE("saddle inequalities hold at the reported point") {
  ScalarSaddle prob;
  prob.s.P_i = 1.1;
  prob.s.P_j = 0.7;
  prob.s.R = 0.2;
  const CrossParameterization par = cross_parameterization(prob.s.Pi(), prob.s.Pj());
  AscentConfig cfg;
  cfg.max_iters = 2000;
  const SaddleResult r =
      saddle_solve(prob.callbacks(par, cfg.delta), par, cfg, 1e-6 * prob.s.P_i);
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-0.999, 0.999);
  const double scale = std::sqrt(prob.s.P_i * prob.s.P_j);
  const double tol = 1e-5 * prob.s.P_i;
  for (int k = 0; k < 100; ++k) {
    const double X = scale * u(rng);
    CHECK(prob.full_objective(r.K_star(0, 0), X) <= r.value + r.gap + tol);
  }
}
