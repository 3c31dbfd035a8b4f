#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <type_traits>
#include <utility>

namespace rarma {

// Rayleigh distribution parametrized by its mean mu:
//   f(y; mu) = pi y / (2 mu^2) exp(-pi y^2 / (4 mu^2)),  y > 0, mu > 0.

template <typename Scalar = double>
Scalar rayleigh_pdf(Scalar y, Scalar mu) {
  static_assert(std::is_floating_point_v<Scalar>);
  if (!(y > Scalar(0)) || !(mu > Scalar(0)))
    throw std::domain_error("rayleigh_pdf: y and mu must be > 0");
  constexpr Scalar pi = std::numbers::pi_v<Scalar>;
  const Scalar z = y / mu;
  return pi * z / (Scalar(2) * mu) * std::exp(-pi * z * z / Scalar(4));
}

template <typename Scalar = double>
Scalar rayleigh_cdf(Scalar y, Scalar mu) {
  static_assert(std::is_floating_point_v<Scalar>);
  if (!(y >= Scalar(0)) || !(mu > Scalar(0)))
    throw std::domain_error("rayleigh_cdf: requires y >= 0 and mu > 0");
  constexpr Scalar pi = std::numbers::pi_v<Scalar>;
  const Scalar z = y / mu;
  return -std::expm1(-pi * z * z / Scalar(4));
}

/// Inverse CDF; u in [0, 1).
template <typename Scalar = double>
Scalar rayleigh_quantile(Scalar u, Scalar mu) {
  static_assert(std::is_floating_point_v<Scalar>);
  if (!(u >= Scalar(0)) || !(u < Scalar(1)) || !(mu > Scalar(0)))
    throw std::domain_error("rayleigh_quantile: requires u in [0,1) and mu > 0");
  constexpr Scalar pi = std::numbers::pi_v<Scalar>;
  return Scalar(2) * mu / std::sqrt(pi) * std::sqrt(-std::log1p(-u));
}

/// (mean, variance) = (mu, mu^2 (4/pi - 1)).
template <typename Scalar = double>
std::pair<Scalar, Scalar> rayleigh_mean_variance(Scalar mu) {
  static_assert(std::is_floating_point_v<Scalar>);
  if (!(mu > Scalar(0))) throw std::domain_error("rayleigh_mean_variance: mu must be > 0");
  constexpr Scalar pi = std::numbers::pi_v<Scalar>;
  return {mu, mu * mu * (Scalar(4) / pi - Scalar(1))};
}

}  // namespace rarma
