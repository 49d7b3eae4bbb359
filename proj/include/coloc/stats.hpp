#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

namespace coloc {

// Acklam inverse-normal approximation, refined once with Halley's method.
inline double normal_quantile(double p) {
  static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                  -2.759285104469687e+02, 1.383577518672690e+02,
                                  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                  -1.556989798598866e+02, 6.680131188771972e+01,
                                  -1.328068155288572e+01};
  static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                  -2.400758277161838e+00, -2.549732539343734e+00,
                                  4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                  2.445134137142996e+00, 3.754408661907416e+00};
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();

  const double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p > 1.0 - plow) {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

/// Regularized lower incomplete gamma P(a, x).
inline double regularized_gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) {
    throw std::invalid_argument("regularized_gamma_p: bad arguments");
  }
  if (x == 0.0) return 0.0;
  const double eps = 1e-15;
  const double log_prefactor = -x + a * std::log(x) - std::lgamma(a);
  if (x < a + 1.0) {
    // series representation
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < 500; ++n) {
      term *= x / (a + n);
      sum += term;
      if (std::abs(term) < std::abs(sum) * eps) break;
    }
    return sum * std::exp(log_prefactor);
  }
  // continued fraction (modified Lentz)
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -static_cast<double>(i) * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return 1.0 - std::exp(log_prefactor) * h;
}

inline double chi2_cdf(double x, double dof) {
  if (x <= 0.0) return 0.0;
  return regularized_gamma_p(0.5 * dof, 0.5 * x);
}

inline double chi2_pdf(double x, double dof) {
  if (x <= 0.0) return 0.0;
  const double k2 = 0.5 * dof;
  return std::exp((k2 - 1.0) * std::log(x) - 0.5 * x - k2 * std::log(2.0) -
                  std::lgamma(k2));
}

/// Chi-square quantile: Wilson-Hilferty start, Newton iteration with a
/// maintained bisection bracket. Relative error below 1e-9.
inline double chi2_quantile(double p, double dof) {
  if (!(p > 0.0 && p < 1.0) || !(dof > 0.0)) {
    throw std::invalid_argument("chi2_quantile: need 0 < p < 1 and dof > 0");
  }
  const double z = normal_quantile(p);
  const double aa = 2.0 / (9.0 * dof);
  const double w = 1.0 - aa + z * std::sqrt(aa);
  double x = dof * w * w * w;
  if (!(x > 0.0)) x = 1e-8;

  // bracket the root
  double lo = 0.0;
  double hi = std::max(x, dof + 10.0 * std::sqrt(2.0 * dof) + 10.0);
  while (chi2_cdf(hi, dof) < p) hi *= 2.0;
  if (x >= hi) x = 0.5 * hi;

  for (int it = 0; it < 200; ++it) {
    const double f = chi2_cdf(x, dof) - p;
    if (f > 0.0) {
      hi = x;
    } else {
      lo = x;
    }
    const double fp = chi2_pdf(x, dof);
    double next = (fp > 0.0) ? x - f / fp : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) {
      next = 0.5 * (lo + hi);
    }
    if (std::abs(next - x) <= 1e-12 * std::max(1.0, x)) {
      return next;
    }
    x = next;
  }
  return x;
}

/// Two-sided acceptance region for the run-averaged NEES statistic.
struct ConsistencyBand {
  double r1 = 0.0;
  double r2 = 0.0;
  int runs = 0;
  int dof = 0;
  double alpha = 0.0;
};

inline ConsistencyBand chi2_band(int runs, int dof, double alpha) {
  if (runs < 1 || dof < 1 || !(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("chi2_band: need runs*dof >= 1 and 0 < alpha < 1");
  }
  const double total = static_cast<double>(runs) * dof;
  const double m = static_cast<double>(runs);
  ConsistencyBand band;
  band.r1 = chi2_quantile(alpha / 2.0, total) / m;
  band.r2 = chi2_quantile(1.0 - alpha / 2.0, total) / m;
  band.runs = runs;
  band.dof = dof;
  band.alpha = alpha;
  return band;
}

}  // namespace coloc
