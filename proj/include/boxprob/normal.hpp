#pragma once

// Univariate standard normal primitives with tail-accurate interval
// probabilities.

#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

namespace boxprob {

inline double normal_pdf(double z) {
  return std::isfinite(z) ? std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi) : 0.0;
}

/// Phi(z); exact at +-inf.
inline double univariate_normal_cdf(double z) {
  if (z == -std::numeric_limits<double>::infinity()) return 0.0;
  if (z == std::numeric_limits<double>::infinity()) return 1.0;
  return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

/// Phi^-1(p); returns -inf / +inf at p = 0 / 1.
inline double normal_quantile(double p) {
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  if (p > 0.5) return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * (1.0 - p));
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

/// Phi^-1 of the complement: z with 1 - Phi(z) = q.
inline double normal_quantile_upper(double q) { return -normal_quantile(q); }

/// Phi(b) - Phi(a) for a <= b, evaluated in whichever tail keeps precision.
inline double normal_interval(double a, double b) {
  if (a > 0.0) return univariate_normal_cdf(-a) - univariate_normal_cdf(-b);
  return univariate_normal_cdf(b) - univariate_normal_cdf(a);
}

/// Phi^-1(Phi(a) + w (Phi(b) - Phi(a))) for w in [0, 1]: maps a uniform
/// onto the normal truncated to [a, b].
inline double truncated_normal_inverse(double a, double b, double w) {
  if (a > 0.0) {
    const double qa = univariate_normal_cdf(-a);
    const double qb = univariate_normal_cdf(-b);
    return normal_quantile_upper(qa - w * (qa - qb));
  }
  const double pa = univariate_normal_cdf(a);
  const double pb = univariate_normal_cdf(b);
  return normal_quantile(pa + w * (pb - pa));
}

}  // namespace boxprob
