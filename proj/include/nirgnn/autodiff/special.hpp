#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "nirgnn/error.hpp"

namespace nirgnn::ad {

namespace detail {

// Lanczos approximation, g = 7, nine coefficients.
inline constexpr double lanczos_g = 7.0;
inline constexpr std::array<double, 9> lanczos_coef = {
    0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
    771.32342877765313,   -176.61502916214059,   12.507343278686905,
    -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7,
};

// Series A(z) = c0 + sum_k c_k / (z + k) and its derivative in z.
inline void lanczos_series(double z, double& a, double& da) {
  a = lanczos_coef[0];
  da = 0.0;
  for (std::size_t k = 1; k < lanczos_coef.size(); ++k) {
    const double den = z + static_cast<double>(k);
    a += lanczos_coef[k] / den;
    da -= lanczos_coef[k] / (den * den);
  }
}

}  // namespace detail

/// ln Gamma(x) for x > 0.
inline double log_gamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("log_gamma requires x > 0, got " + std::to_string(x));
  if (x < 0.5) {
    // Reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
    return std::log(std::numbers::pi / std::sin(std::numbers::pi * x)) - log_gamma(1.0 - x);
  }
  const double z = x - 1.0;
  double a = 0.0, da = 0.0;
  detail::lanczos_series(z, a, da);
  const double t = z + detail::lanczos_g + 0.5;
  return 0.5 * std::log(2.0 * std::numbers::pi) + (z + 0.5) * std::log(t) - t + std::log(a);
}

/// d/dx ln Gamma(x), from the analytic derivative of the same series.
inline double digamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("digamma requires x > 0, got " + std::to_string(x));
  if (x < 0.5) {
    return digamma(1.0 - x) - std::numbers::pi / std::tan(std::numbers::pi * x);
  }
  const double z = x - 1.0;
  double a = 0.0, da = 0.0;
  detail::lanczos_series(z, a, da);
  const double t = z + detail::lanczos_g + 0.5;
  return std::log(t) + (z + 0.5) / t - 1.0 + da / a;
}

/// ln of the Beta(a, b) density at x in (0, 1).
inline double beta_log_pdf(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw DomainError("beta_log_pdf requires positive shape parameters");
  if (!(x > 0.0) || !(x < 1.0)) throw DomainError("beta_log_pdf requires x in (0,1)");
  return log_gamma(a + b) - log_gamma(a) - log_gamma(b) + (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x);
}

}  // namespace nirgnn::ad
