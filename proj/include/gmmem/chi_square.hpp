#pragma once

#include <cmath>
#include <limits>

#include "gmmem/error.hpp"

namespace gmmem {

namespace detail {

inline constexpr int kGammaMaxIterations = 100000;
inline constexpr double kGammaEpsilon = 1e-16;

// P(a, x) by its power series; converges quickly for x < a + 1.
inline double lower_gamma_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n < kGammaMaxIterations; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * kGammaEpsilon) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Q(a, x) by the Legendre continued fraction (modified Lentz); for x >= a + 1.
inline double upper_gamma_continued_fraction(double a, double x) {
  constexpr double tiny = std::numeric_limits<double>::min() / kGammaEpsilon;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kGammaMaxIterations; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kGammaEpsilon) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace detail

/// Regularized lower incomplete gamma function P(a, x).
inline double regularized_lower_gamma(double a, double x) {
  if (!(a > 0.0)) throw Error(ErrorKind::invalid_argument, "gamma shape must be positive");
  if (x < 0.0 || std::isnan(x)) throw Error(ErrorKind::invalid_argument, "x must be nonnegative");
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  if (x < a + 1.0) return detail::lower_gamma_series(a, x);
  return 1.0 - detail::upper_gamma_continued_fraction(a, x);
}

/// CDF of the chi-square distribution with `dof` degrees of freedom,
/// P(dof/2, x/2).
inline double chi_square_cdf(unsigned dof, double x) {
  if (dof == 0) throw Error(ErrorKind::invalid_argument, "degrees of freedom must be at least 1");
  if (x < 0.0 || std::isnan(x)) {
    throw Error(ErrorKind::invalid_argument, "chi-square CDF argument must be nonnegative");
  }
  return regularized_lower_gamma(0.5 * dof, 0.5 * x);
}

/// alpha_d = F_d(d), the chi-square CDF at its own mean.
inline double chi_square_cdf_at_mean(unsigned dof) {
  return chi_square_cdf(dof, static_cast<double>(dof));
}

}  // namespace gmmem
