#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <type_traits>

namespace rarma {

template <typename Scalar = double>
Scalar std_normal_cdf(Scalar x) {
  static_assert(std::is_floating_point_v<Scalar>);
  return Scalar(0.5) * std::erfc(-x / std::numbers::sqrt2_v<Scalar>);
}

/// Standard normal quantile. Rational approximation (Acklam) refined with one
/// Halley step against erfc; absolute error is far below 1e-9 over (0, 1).
template <typename Scalar = double>
Scalar std_normal_quantile(Scalar u) {
  static_assert(std::is_floating_point_v<Scalar>);
  if (!(u > Scalar(0)) || !(u < Scalar(1)))
    throw std::domain_error("std_normal_quantile: u must be in (0,1)");

  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  const double p = static_cast<double>(u);
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  // Halley refinement on Phi(x) - p = 0.
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  const double t = e * std::numbers::sqrt2 * std::sqrt(std::numbers::pi) *
                   std::exp(0.5 * x * x);
  x -= t / (1.0 + 0.5 * x * t);
  return static_cast<Scalar>(x);
}

namespace detail {

// Regularized lower incomplete gamma P(a, x): series for x < a+1, Lentz
// continued fraction for Q = 1 - P otherwise.
inline double gamma_p(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0)) throw std::domain_error("gamma_p: requires a > 0, x >= 0");
  if (x == 0.0) return 0.0;

  const double log_prefactor = a * std::log(x) - x - std::lgamma(a);
  if (x < a + 1.0) {
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < 1000; ++n) {
      term *= x / (a + n);
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return std::exp(log_prefactor) * sum;
  }

  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -static_cast<double>(i) * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  const double q = std::exp(log_prefactor) * h;
  return 1.0 - q;
}

}  // namespace detail

inline double chi2_cdf(double x, int nu) {
  if (nu < 1) throw std::domain_error("chi2_cdf: nu must be >= 1");
  if (x <= 0.0) return 0.0;
  return detail::gamma_p(0.5 * nu, 0.5 * x);
}

/// Inverse chi-square CDF via a Wilson-Hilferty start and safeguarded Newton
/// iteration on the regularized incomplete gamma.
inline double chi2_quantile(double prob, int nu) {
  if (!(prob > 0.0) || !(prob < 1.0)) throw std::domain_error("chi2_quantile: prob must be in (0,1)");
  if (nu < 1) throw std::domain_error("chi2_quantile: nu must be >= 1");

  const double a = 0.5 * nu;
  const double z = std_normal_quantile(prob);
  const double wh = 2.0 / (9.0 * nu);
  double x = nu * std::pow(1.0 - wh + z * std::sqrt(wh), 3);
  if (!(x > 0.0) || !std::isfinite(x)) x = 0.5 * nu;

  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 200; ++it) {
    const double f = detail::gamma_p(a, 0.5 * x) - prob;
    if (f > 0.0)
      hi = x;
    else
      lo = x;
    // chi2 density at x
    const double pdf = 0.5 * std::exp((a - 1.0) * std::log(0.5 * x) - 0.5 * x - std::lgamma(a));
    double next = x - f / pdf;
    if (!(next > lo) || !(next < hi) || !std::isfinite(next))
      next = std::isfinite(hi) ? 0.5 * (lo + hi) : 2.0 * x;
    if (std::abs(next - x) <= 1e-14 * std::max(1.0, std::abs(x))) {
      x = next;
      break;
    }
    x = next;
  }
  return x;
}

}  // namespace rarma
