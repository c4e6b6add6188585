#pragma once

// Independent numerical oracles for the test suites. Everything here is
// deliberately written from scratch (series expansions, quadrature,
// finite differences) so it shares no code path with the library.

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <stdexcept>

namespace oracle {

// Regularized lower incomplete gamma P(a, x) via series / continued fraction
// (Numerical Recipes style).
inline double gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_p domain");
  if (x == 0.0) return 0.0;
  const double gln = std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a, del = 1.0 / a, sum = del;
    for (int n = 0; n < 500; ++n) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - gln);
  }
  double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return 1.0 - std::exp(-x + a * std::log(x) - gln) * h;
}

// Central chi-square CDF.
inline double chi2_cdf(double x, double dof) { return gamma_p(0.5 * dof, 0.5 * x); }

// Chi-square quantile by bisection on the hand-rolled CDF.
inline double chi2_quantile(double p, double dof) {
  double lo = 0.0, hi = std::max(4.0 * dof, 64.0);
  while (chi2_cdf(hi, dof) < p) hi *= 2.0;
  for (int i = 0; i < 400; ++i) {
    const double mid = 0.5 * (lo + hi);
    (chi2_cdf(mid, dof) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Noncentral chi-square CDF by the Poisson mixture of central CDFs.
inline double nc_chi2_cdf(double x, double dof, double lambda) {
  if (lambda == 0.0) return chi2_cdf(x, dof);
  const double half = 0.5 * lambda;
  // Start at the mode of the Poisson weights and expand both ways.
  const int k0 = static_cast<int>(half);
  auto log_pois = [&](int k) { return -half + k * std::log(half) - std::lgamma(k + 1.0); };
  double sum = 0.0;
  for (int k = k0; k >= 0; --k) {
    const double term = std::exp(log_pois(k)) * chi2_cdf(x, dof + 2.0 * k);
    sum += term;
    if (term < 1e-18 * sum) break;
  }
  for (int k = k0 + 1; k < k0 + 20000; ++k) {
    const double term = std::exp(log_pois(k)) * chi2_cdf(x, dof + 2.0 * k);
    sum += term;
    if (term < 1e-18 * sum) break;
  }
  return sum;
}

// Acklam's rational approximation of the standard normal quantile, refined
// with one Halley step; good to ~1e-12.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile domain");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1 - plow;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= phigh) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2 * M_PI) * std::exp(x * x / 2);
  return x - u / (1 + x * u / 2);
}

// Central finite differences of a vector function over an n-dim input,
// with an optional per-column step (large-scale functions need larger steps
// to stay above their absolute rounding noise).
inline Eigen::MatrixXd finite_difference(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& steps) {
  const int in_dim = static_cast<int>(steps.size());
  const Eigen::VectorXd r0 = f(Eigen::VectorXd::Zero(in_dim));
  Eigen::MatrixXd j(r0.size(), in_dim);
  for (int i = 0; i < in_dim; ++i) {
    Eigen::VectorXd dp = Eigen::VectorXd::Zero(in_dim);
    dp(i) = steps(i);
    const Eigen::VectorXd rp = f(dp);
    dp(i) = -steps(i);
    const Eigen::VectorXd rm = f(dp);
    j.col(i) = (rp - rm) / (2.0 * steps(i));
  }
  return j;
}

inline Eigen::MatrixXd finite_difference(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f, int in_dim,
    double step = 1e-6) {
  return finite_difference(f, Eigen::VectorXd::Constant(in_dim, step));
}

// Column-wise relative error with a unit floor, per the Jacobian contracts.
inline double max_column_relative_error(const Eigen::MatrixXd& analytic,
                                        const Eigen::MatrixXd& fd) {
  double worst = 0.0;
  for (int c = 0; c < fd.cols(); ++c) {
    const double denom = std::max(1.0, fd.col(c).norm());
    worst = std::max(worst, (analytic.col(c) - fd.col(c)).norm() / denom);
  }
  return worst;
}

}  // namespace oracle
