#pragma once

#include <cmath>

#include "dalab/matrix.hpp"

namespace dalab {

namespace detail {
// Simpson's rule on a smooth integrand.
template <class F>
double simpson(F f, double a, double b, int n_intervals) {
  if (b <= a) return 0.0;
  if (n_intervals % 2) ++n_intervals;
  const double h = (b - a) / n_intervals;
  double s = f(a) + f(b);
  for (int i = 1; i < n_intervals; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

// Unnormalized integral of x^{beta-1}(1-x)^{beta-1} over [0, c], c <= 0.5.
// The endpoint singularity is removed by substituting u = x^beta:
//   integral = (1/beta) * int_0^{c^beta} (1 - u^{1/beta})^{beta-1} du,
// whose integrand is smooth on the range for beta in (0, 1].
inline double beta_left_integral(double beta, double c, int n = 4000) {
  if (c <= 0.0) return 0.0;
  const double inv_beta = 1.0 / beta;
  auto g = [&](double u) {
    const double x = std::pow(u, inv_beta);
    return std::pow(1.0 - x, beta - 1.0);
  };
  return inv_beta * simpson(g, 0.0, std::pow(c, beta), n);
}
}  // namespace detail

/// P(a < alpha < b) for alpha ~ Beta(beta, beta), by numerical integration of
/// the density (independent of any sampling code). Valid for beta in (0, 1].
inline double beta_interval_mass(double beta, double a, double b) {
  check_arg(beta > 0.0 && beta <= 1.0, "beta_interval_mass: beta outside (0,1]");
  check_arg(a <= b, "beta_interval_mass: empty interval");
  const double norm = 2.0 * detail::beta_left_integral(beta, 0.5);
  auto cdf_unnorm = [&](double c) {
    c = std::min(std::max(c, 0.0), 1.0);
    if (c <= 0.5) return detail::beta_left_integral(beta, c);
    return norm - detail::beta_left_integral(beta, 1.0 - c);  // symmetry of the density
  };
  return (cdf_unnorm(b) - cdf_unnorm(a)) / norm;
}

}  // namespace dalab
