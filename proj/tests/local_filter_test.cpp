#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "coloc/local_filter.hpp"

using namespace coloc;

namespace {

Belief pose_belief(const Pose2D& p, const Eigen::Matrix3d& P) {
  return Belief(p.vec(), Covariance(P), 1, 0);
}

}  // namespace

TEST_CASE("prediction with zero noise and zero input keeps the belief") {
  const Belief bel = pose_belief({1, 2, 0.3}, 0.1 * Eigen::Matrix3d::Identity());
  const Belief out = predict_belief(bel, {0.0, 0.0, 0.1}, {}, ProcessNoise{});
  CHECK((out.mean - bel.mean).norm() == doctest::Approx(0.0));
  CHECK((out.cov.mat() - bel.cov.mat()).norm() == doctest::Approx(0.0));
  CHECK(out.stamp == bel.stamp + 1);
}

TEST_CASE("pure additive process noise") {
  const Belief bel = pose_belief({0, 0, 0}, Eigen::Matrix3d::Zero());
  const double q = 1e-4;
  const Belief out = predict_belief(bel, {0.5, 0.1, 0.1}, {},
                                    ProcessNoise::isotropic(std::sqrt(q)));
  CHECK((out.cov.mat() - q * Eigen::Matrix3d::Identity()).norm() ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("dead-reckoning covariance trace never shrinks") {
  NoiseModel nm;
  nm.v_frac = 0.2;
  nm.omega_frac = 0.1;
  nm.floor_v = 0.01;
  nm.floor_omega = 0.005;
  Belief bel = pose_belief({0, 0, 0}, 1e-4 * Eigen::Matrix3d::Identity());
  double prev = bel.cov.mat().trace();
  for (int t = 0; t < 100; ++t) {
    bel = predict_belief(bel, {0.6, 0.2, 0.1}, nm, ProcessNoise::isotropic(1e-3));
    const double cur = bel.cov.mat().trace();
    CHECK(cur >= prev * (1.0 - 1e-12));
    prev = cur;
  }
}

TEST_CASE("range model hand values") {
  const auto [h, H] = range_measurement_model({0, 0, 0.4}, {1, {3.0, 4.0}});
  CHECK(h == doctest::Approx(5.0));
  CHECK(H(0) == doctest::Approx(-0.6));
  CHECK(H(1) == doctest::Approx(-0.8));
  CHECK(H(2) == 0.0);

  const auto [h2, H2] = range_measurement_model({1, 0, 0}, {2, {0.0, 0.0}});
  CHECK(h2 == doctest::Approx(1.0));
  CHECK(H2(0) == doctest::Approx(1.0));
  CHECK(H2(1) == doctest::Approx(0.0));
}

TEST_CASE("range model rejects coincident geometry") {
  CHECK_THROWS_AS(range_measurement_model({1, 1, 0}, {1, {1.0, 1.0}}),
                  DegenerateGeometryError);
}

TEST_CASE("range jacobian matches central differences") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    const Landmark lm{1, {u(rng), u(rng)}};
    Pose2D x(u(rng), u(rng), u(rng));
    if (std::hypot(x.x - lm.position.x(), x.y - lm.position.y()) < 0.5) continue;
    const auto [val, H] = range_measurement_model(x, lm);
    for (int c = 0; c < 3; ++c) {
      Eigen::Vector3d hi = x.vec(), lo = x.vec();
      hi[c] += h;
      lo[c] -= h;
      const double fd = (range_measurement_model(Pose2D::from_vec(hi), lm).first -
                         range_measurement_model(Pose2D::from_vec(lo), lm).first) /
                        (2 * h);
      CHECK(H(c) == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

TEST_CASE("perfect prior ignores the measurement") {
  const Belief bel = pose_belief({0, 0, 0}, Eigen::Matrix3d::Zero());
  const Belief out = abs_correct_belief(bel, 1.3, {1, {1.0, 0.0}}, 0.2);
  CHECK((out.mean - bel.mean).norm() == doctest::Approx(0.0));
  CHECK(out.cov.mat().norm() == doctest::Approx(0.0));
}

TEST_CASE("uninformative measurement leaves the covariance") {
  const Belief bel = pose_belief({0, 0, 0}, Eigen::Matrix3d::Identity());
  const Belief out = abs_correct_belief(bel, 1.0, {1, {1.0, 0.0}}, 1e6);
  CHECK((out.cov.mat() - bel.cov.mat()).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("scalar range update against the kalman algebra oracle") {
  // prior I, landmark on the x axis one meter away: the x variance contracts
  // to r / (1 + r) and the mean moves along -x for a too-long range reading
  const Belief bel = pose_belief({0, 0, 0}, Eigen::Matrix3d::Identity());
  const Belief out = abs_correct_belief(bel, 1.2, {1, {1.0, 0.0}}, 0.2);
  const double r = 0.04;
  CHECK(out.cov.mat()(0, 0) == doctest::Approx(r / (1.0 + r)));  // ~0.03846
  // H = [-1, 0, 0], K_x = -1/(1+r), innovation +0.2
  CHECK(out.mean[0] == doctest::Approx(-0.2 / 1.04));
  CHECK(out.mean[0] < 0.0);
  CHECK(out.mean[1] == doctest::Approx(0.0));
}

TEST_CASE("joseph update keeps covariances psd and never inflates det") {
  std::mt19937_64 rng(33);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 1000; ++trial) {
    Eigen::Matrix3d A;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) A(r, c) = g(rng);
    }
    const Eigen::Matrix3d P = A * A.transpose() + 1e-6 * Eigen::Matrix3d::Identity();
    const Pose2D x(u(rng), u(rng), u(rng));
    const Landmark lm{1, {u(rng) + 5.0, u(rng)}};
    const Belief bel = pose_belief(x, P);
    const Belief out = abs_correct_belief(bel, 4.0 + g(rng), lm, 0.2);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(out.cov.mat());
    CHECK(es.eigenvalues().minCoeff() >= -1e-9 * out.cov.mat().trace());
    CHECK(out.cov.mat().determinant() <= P.determinant() * (1.0 + 1e-10));
  }
}
