#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "coloc/types.hpp"

using namespace coloc;

TEST_CASE("make_spd accepts symmetric positive definite input unchanged") {
  const Eigen::Matrix3d I = Eigen::Matrix3d::Identity();
  CHECK((make_spd(I) - I).norm() == doctest::Approx(0.0));

  Eigen::Matrix2d M;
  M << 1.0, 0.5, 0.5, 1.0;
  CHECK((make_spd(M) - M).norm() == doctest::Approx(0.0));
}

TEST_CASE("make_spd rejects an indefinite matrix") {
  Eigen::Matrix2d M;
  M << 1.0, 2.0, 2.0, 1.0;
  // oracle eigensolver confirms the spectrum {3, -1}
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(M);
  CHECK(es.eigenvalues().minCoeff() == doctest::Approx(-1.0));
  CHECK(es.eigenvalues().maxCoeff() == doctest::Approx(3.0));
  CHECK_THROWS_AS(make_spd(M), NotPsdError);
}

TEST_CASE("make_spd symmetrizes within tolerance") {
  Eigen::Matrix2d M;
  M << 1.0, 0.5 + 1e-12, 0.5, 1.0;
  const Eigen::MatrixXd S = make_spd(M);
  CHECK((S - S.transpose()).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("constructed covariances stay symmetric psd") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::Matrix3d A;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) A(r, c) = g(rng);
    }
    const Eigen::Matrix3d P = A * A.transpose();
    const Covariance cov(P);
    CHECK((cov.mat() - cov.mat().transpose()).lpNorm<Eigen::Infinity>() == 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov.mat());
    CHECK(es.eigenvalues().minCoeff() >= -1e-9 * cov.mat().trace());
  }
}

TEST_CASE("wrap_angle matches the half-open convention") {
  CHECK(wrap_angle(0.0) == 0.0);
  CHECK(wrap_angle(3.0 * kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(-kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(kPi) == doctest::Approx(kPi));
}

TEST_CASE("wrap_angle is idempotent and congruent mod 2pi") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const double a = u(rng);
    const double w = wrap_angle(a);
    CHECK(w > -kPi);
    CHECK(w <= kPi);
    CHECK(wrap_angle(w) == w);
    CHECK(std::remainder(a - w, 2.0 * kPi) == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("pose construction normalizes the heading") {
  const Pose2D p(1.0, 2.0, 5.0 * kPi / 2.0);
  CHECK(p.phi == doctest::Approx(kPi / 2.0));
}

TEST_CASE("belief requires matching dimensions") {
  CHECK_THROWS_AS(Belief(Eigen::Vector3d::Zero(), Covariance(Eigen::Matrix2d::Identity()),
                         1, 0),
                  DegenerateBeliefError);
}

TEST_CASE("joint belief validates the stacked matrix when the cross is present") {
  JointBelief jb;
  jb.mean_i = Eigen::VectorXd::Zero(1);
  jb.mean_j = Eigen::VectorXd::Zero(1);
  jb.P_i = Covariance(Eigen::MatrixXd::Identity(1, 1));
  jb.P_j = Covariance(Eigen::MatrixXd::Identity(1, 1));
  jb.P_ij = Eigen::MatrixXd::Constant(1, 1, 0.5);
  CHECK_NOTHROW(jb.validate());
  jb.P_ij = Eigen::MatrixXd::Constant(1, 1, 1.5);  // correlation beyond feasible
  CHECK_THROWS_AS(jb.validate(), NotPsdError);
}

TEST_CASE("relative measurements insist on strictly positive definite noise") {
  Eigen::VectorXd z(1);
  z << 1.0;
  CHECK_THROWS_AS(RelativeMeasurement(1, 2, MeasurementKind::RelativeRange, z,
                                      Eigen::MatrixXd::Zero(1, 1), 0),
                  NotPsdError);
  CHECK_NOTHROW(RelativeMeasurement(1, 2, MeasurementKind::RelativeRange, z,
                                    0.01 * Eigen::MatrixXd::Identity(1, 1), 0));
}
