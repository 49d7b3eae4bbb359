#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "coloc/stats.hpp"

using namespace coloc;

TEST_CASE("normal quantile sanity") {
  CHECK(normal_quantile(0.975) == doctest::Approx(1.9599639845).epsilon(1e-8));
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0));
  CHECK(normal_quantile(0.025) == doctest::Approx(-1.9599639845).epsilon(1e-8));
}

TEST_CASE("averaged-nees band for fifty runs matches the reference values") {
  const ConsistencyBand band = chi2_band(50, 2, 0.05);
  CHECK(band.r1 == doctest::Approx(1.48).epsilon(0.005));
  CHECK(band.r2 == doctest::Approx(2.59).epsilon(0.005));
}

TEST_CASE("single-run single-dof band matches the chi-square table") {
  const ConsistencyBand band = chi2_band(1, 1, 0.05);
  CHECK(band.r1 == doctest::Approx(0.000982069).epsilon(1e-4));
  CHECK(band.r2 == doctest::Approx(5.023886).epsilon(1e-4));
}

TEST_CASE("band collapses as alpha approaches one") {
  const ConsistencyBand wide = chi2_band(50, 2, 0.05);
  const ConsistencyBand thin = chi2_band(50, 2, 0.999);
  CHECK(thin.r1 < thin.r2);
  CHECK((thin.r2 - thin.r1) < 0.05 * (wide.r2 - wide.r1));
}

TEST_CASE("quantile inverts the cdf") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> up(0.001, 0.999);
  std::uniform_int_distribution<int> ud(1, 400);
  for (int trial = 0; trial < 300; ++trial) {
    const double p = up(rng);
    const int dof = ud(rng);
    const double x = chi2_quantile(p, dof);
    CHECK(chi2_cdf(x, dof) == doctest::Approx(p).epsilon(1e-7));
  }
}

TEST_CASE("cdf and pdf are consistent") {
  // central difference of the cdf reproduces the density
  for (double x : {0.5, 1.0, 3.0, 10.0, 45.0}) {
    for (int dof : {1, 2, 5, 20, 100}) {
      const double h = 1e-6;
      const double fd = (chi2_cdf(x + h, dof) - chi2_cdf(x - h, dof)) / (2 * h);
      CHECK(chi2_pdf(x, dof) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("band endpoints are quantiles of the scaled statistic") {
  const ConsistencyBand band = chi2_band(50, 2, 0.05);
  CHECK(chi2_cdf(band.r1 * 50, 100) == doctest::Approx(0.025).epsilon(1e-9));
  CHECK(chi2_cdf(band.r2 * 50, 100) == doctest::Approx(0.975).epsilon(1e-9));
}

TEST_CASE("invalid band arguments are rejected") {
  CHECK_THROWS_AS(chi2_band(0, 2, 0.05), std::invalid_argument);
  CHECK_THROWS_AS(chi2_band(50, 2, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(chi2_band(50, 2, 1.0), std::invalid_argument);
}
