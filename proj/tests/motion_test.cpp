#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "coloc/motion.hpp"

using namespace coloc;

TEST_CASE("straight-line propagation") {
  const Pose2D a = propagate_state({0, 0, 0}, {1.0, 0.0, 1.0});
  CHECK(a.x == doctest::Approx(1.0));
  CHECK(a.y == doctest::Approx(0.0));
  CHECK(a.phi == doctest::Approx(0.0));

  const Pose2D b = propagate_state({0, 0, kPi / 2}, {2.0, 0.0, 0.5});
  CHECK(b.x == doctest::Approx(0.0));
  CHECK(b.y == doctest::Approx(1.0));
  CHECK(b.phi == doctest::Approx(kPi / 2));
}

TEST_CASE("euler step uses the pre-update heading") {
  const Pose2D p = propagate_state({1, 1, 0}, {1.0, kPi, 1.0});
  CHECK(p.x == doctest::Approx(2.0));
  CHECK(p.y == doctest::Approx(1.0));
  CHECK(p.phi == doctest::Approx(kPi));
}

TEST_CASE("zero input is the identity") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 50; ++i) {
    const Pose2D x(u(rng), u(rng), u(rng));
    const Pose2D y = propagate_state(x, {0.0, 0.0, 0.1});
    CHECK(y.x == x.x);
    CHECK(y.y == x.y);
    CHECK(y.phi == doctest::Approx(x.phi));
  }
}

TEST_CASE("nonpositive dt is rejected") {
  CHECK_THROWS_AS(UnicycleInput(1.0, 0.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(UnicycleInput(1.0, 0.0, -0.1), std::invalid_argument);
}

TEST_CASE("jacobian structure at zero heading") {
  const auto [F_x, F_u] = propagation_jacobians({0, 0, 0}, {1.0, 0.0, 1.0});
  CHECK(F_x(0, 0) == 1.0);
  CHECK(F_x(0, 1) == 0.0);
  CHECK(F_x(0, 2) == doctest::Approx(0.0));
  CHECK(F_x(1, 0) == 0.0);
  CHECK(F_x(1, 1) == 1.0);
  CHECK(F_x(1, 2) == doctest::Approx(1.0));
  CHECK(F_u(0, 0) == doctest::Approx(1.0));
  CHECK(F_u(1, 0) == doctest::Approx(0.0));
  CHECK(F_u(2, 1) == doctest::Approx(1.0));
}

TEST_CASE("zero velocity freezes the heading coupling") {
  const auto [F_x, F_u] = propagation_jacobians({2, -1, 0.7}, {0.0, 0.3, 0.2});
  CHECK((F_x - Eigen::Matrix3d::Identity()).norm() == doctest::Approx(0.0));
}

TEST_CASE("propagation jacobians match central differences") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    const Pose2D x(u(rng), u(rng), u(rng));
    const UnicycleInput uin(u(rng), u(rng), 0.05 + std::abs(u(rng)) * 0.2);
    const auto [F_x, F_u] = propagation_jacobians(x, uin);

    auto f = [&](const Eigen::Vector3d& state, double v, double w) {
      return propagate_state(Pose2D(state[0], state[1], state[2]), {v, w, uin.dt});
    };
    auto diff = [&](const Pose2D& hi, const Pose2D& lo) {
      Eigen::Vector3d d;
      d << hi.x - lo.x, hi.y - lo.y, wrap_angle(hi.phi - lo.phi);
      return Eigen::Vector3d(d / (2.0 * h));
    };

    Eigen::Matrix3d fd_x;
    for (int c = 0; c < 3; ++c) {
      Eigen::Vector3d hi = x.vec(), lo = x.vec();
      hi[c] += h;
      lo[c] -= h;
      fd_x.col(c) = diff(f(hi, uin.v, uin.omega), f(lo, uin.v, uin.omega));
    }
    CHECK((F_x - fd_x).lpNorm<Eigen::Infinity>() < 1e-5);

    Eigen::Matrix<double, 3, 2> fd_u;
    fd_u.col(0) = diff(f(x.vec(), uin.v + h, uin.omega), f(x.vec(), uin.v - h, uin.omega));
    fd_u.col(1) = diff(f(x.vec(), uin.v, uin.omega + h), f(x.vec(), uin.v, uin.omega - h));
    CHECK((F_u - fd_u).lpNorm<Eigen::Infinity>() < 1e-5);
  }
}

TEST_CASE("zero noise model returns the input unchanged") {
  std::mt19937_64 rng(5);
  const UnicycleInput u(0.8, -0.4, 0.1);
  const UnicycleInput s = sample_noisy_input(u, {}, rng);
  CHECK(s.v == u.v);
  CHECK(s.omega == u.omega);
}

TEST_CASE("sampled noise matches the requested standard deviation") {
  std::mt19937_64 rng(99);
  NoiseModel nm;
  nm.v_frac = 0.2;
  const UnicycleInput u(1.0, 0.0, 0.1);
  const int n = 100000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = sample_noisy_input(u, nm, rng).v - u.v;
    sum += d;
    sum2 += d * d;
  }
  const double std = std::sqrt(sum2 / n - (sum / n) * (sum / n));
  CHECK(std == doctest::Approx(0.2).epsilon(0.05));
}

TEST_CASE("noise floor takes over at standstill") {
  std::mt19937_64 rng(100);
  NoiseModel nm;
  nm.v_frac = 0.2;
  nm.floor_v = 0.01;
  const UnicycleInput u(0.0, 0.0, 0.1);
  CHECK(linear_noise_std(u, nm) == doctest::Approx(0.01));
  const int n = 100000;
  double sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = sample_noisy_input(u, nm, rng).v;
    sum2 += d * d;
  }
  CHECK(std::sqrt(sum2 / n) == doctest::Approx(0.01).epsilon(0.05));
}
