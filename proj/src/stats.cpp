#include "conestack/stats.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace conestack {

double regularized_gamma_p(double a, double x) {
  if (a <= 0.0 || x < 0.0) throw std::domain_error("regularized_gamma_p: bad argument");
  if (x == 0.0) return 0.0;
  const double log_prefix = -x + a * std::log(x) - std::lgamma(a);
  if (x < a + 1.0) {
    // Series expansion.
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < 1000; ++n) {
      term *= x / (a + n);
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(log_prefix);
  }
  // Continued fraction for Q(a, x) (modified Lentz).
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -i * (i - a);
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
  return 1.0 - std::exp(log_prefix) * h;
}

double chi_square_cdf(double x, int dof) {
  if (dof <= 0) throw std::domain_error("chi_square_cdf: dof must be positive");
  if (x <= 0.0) return 0.0;
  return regularized_gamma_p(0.5 * dof, 0.5 * x);
}

double chi_square_quantile(double p, int dof) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("chi_square_quantile: p outside (0, 1)");
  double lo = 0.0;
  double hi = std::max(1.0, static_cast<double>(dof));
  while (chi_square_cdf(hi, dof) < p) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 1e-13 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (chi_square_cdf(mid, dof) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double mahalanobis_squared(const Eigen::Vector2d& nu, const Eigen::Matrix2d& s) {
  return nu.dot(s.ldlt().solve(nu));
}

double gaussian_log_likelihood(const Eigen::Vector2d& nu, const Eigen::Matrix2d& s) {
  const double det = s.determinant();
  if (!(det > 0.0)) return -std::numeric_limits<double>::infinity();
  return -0.5 * mahalanobis_squared(nu, s) - std::log(2.0 * std::numbers::pi) - 0.5 * std::log(det);
}

}  // namespace conestack
