#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "coloc/relative_models.hpp"

using namespace coloc;

TEST_CASE("relative range between agents on the x axis") {
  const RelativePrediction p = relative_range_model({0, 0, 0}, {1, 0, 0});
  CHECK(p.z_hat[0] == doctest::Approx(1.0));
  CHECK(p.jac.H_obs(0, 0) == doctest::Approx(-1.0));
  CHECK(p.jac.H_obs(0, 1) == doctest::Approx(0.0));
  CHECK(p.jac.H_tgt(0, 0) == doctest::Approx(1.0));
  CHECK(p.jac.H_tgt(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("relative pose of identical poses is zero") {
  const Pose2D x(1.7, -2.2, 0.9);
  const RelativePrediction p = relative_pose_model(x, x);
  CHECK(p.z_hat.norm() == doctest::Approx(0.0));
}

TEST_CASE("relative pose expresses the target in the observer frame") {
  // observer at origin facing +y; target one meter ahead of it
  const RelativePrediction p = relative_pose_model({0, 0, kPi / 2}, {0, 1, kPi});
  CHECK(p.z_hat[0] == doctest::Approx(1.0));
  CHECK(p.z_hat[1] == doctest::Approx(0.0));
  CHECK(p.z_hat[2] == doctest::Approx(kPi / 2));
}

TEST_CASE("coincident agents break range and bearing") {
  CHECK_THROWS_AS(relative_range_model({1, 1, 0}, {1, 1, 2}), DegenerateGeometryError);
  CHECK_THROWS_AS(relative_bearing_model({1, 1, 0}, {1, 1, 2}), DegenerateGeometryError);
}

TEST_CASE("all relative-model jacobians match central differences") {
  std::mt19937_64 rng(44);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  const double h = 1e-6;
  int done = 0;
  while (done < 100) {
    const Pose2D xi(u(rng), u(rng), u(rng));
    const Pose2D xj(u(rng), u(rng), u(rng));
    if (std::hypot(xj.x - xi.x, xj.y - xi.y) < 0.5) continue;
    ++done;
    for (MeasurementKind kind : {MeasurementKind::RelativePose,
                                 MeasurementKind::RelativeRange,
                                 MeasurementKind::RelativeBearing}) {
      const RelativePrediction p = evaluate_relative_model(kind, xi, xj);
      const Eigen::Index nz = p.z_hat.size();
      auto fd_col = [&](bool obs_side, int c) {
        Eigen::Vector3d hi = obs_side ? xi.vec() : xj.vec();
        Eigen::Vector3d lo = hi;
        hi[c] += h;
        lo[c] -= h;
        const Eigen::VectorXd zp =
            obs_side ? evaluate_relative_model(kind, Pose2D::from_vec(hi), xj).z_hat
                     : evaluate_relative_model(kind, xi, Pose2D::from_vec(hi)).z_hat;
        const Eigen::VectorXd zm =
            obs_side ? evaluate_relative_model(kind, Pose2D::from_vec(lo), xj).z_hat
                     : evaluate_relative_model(kind, xi, Pose2D::from_vec(lo)).z_hat;
        Eigen::VectorXd d(nz);
        for (Eigen::Index k = 0; k < nz; ++k) {
          const double raw = zp[k] - zm[k];
          d[k] = (is_angle_component(kind, k) ? wrap_angle(raw) : raw) / (2 * h);
        }
        return d;
      };
      for (int c = 0; c < 3; ++c) {
        const Eigen::VectorXd d_obs = fd_col(true, c);
        const Eigen::VectorXd d_tgt = fd_col(false, c);
        for (Eigen::Index k = 0; k < nz; ++k) {
          CHECK(p.jac.H_obs(k, c) == doctest::Approx(d_obs[k]).epsilon(2e-5));
          CHECK(p.jac.H_tgt(k, c) == doctest::Approx(d_tgt[k]).epsilon(2e-5));
        }
      }
    }
  }
}

TEST_CASE("innovation wraps angle components") {
  Eigen::VectorXd z(1), zh(1);
  z << 3.1;
  zh << -3.1;
  const Eigen::VectorXd nu = innovation(z, zh, MeasurementKind::RelativeBearing);
  CHECK(nu[0] == doctest::Approx(6.2 - 2.0 * kPi));  // ~ -0.08319

  Eigen::VectorXd zr(1), zhr(1);
  zr << 2.0;
  zhr << 1.5;
  CHECK(innovation(zr, zhr, MeasurementKind::RelativeRange)[0] == doctest::Approx(0.5));

  Eigen::VectorXd zp(3), zhp(3);
  zp << 1.0, -0.5, 3.0;
  zhp << 1.0, -0.5, 3.0;
  CHECK(innovation(zp, zhp, MeasurementKind::RelativePose).norm() == 0.0);
}

TEST_CASE("pose innovation wraps only the heading component") {
  Eigen::VectorXd z(3), zh(3);
  z << 0.0, 0.0, 3.0;
  zh << 0.0, 0.0, -3.0;
  const Eigen::VectorXd nu = innovation(z, zh, MeasurementKind::RelativePose);
  CHECK(nu[2] == doctest::Approx(6.0 - 2.0 * kPi));
}
