#pragma once

#include <Eigen/Dense>

namespace conestack {

/// Regularized lower incomplete gamma P(a, x).
double regularized_gamma_p(double a, double x);

double chi_square_cdf(double x, int dof);

/// Inverse CDF by bisection on chi_square_cdf; p in (0, 1).
double chi_square_quantile(double p, int dof);

/// log N(nu; 0, S) for a 2-vector innovation.
double gaussian_log_likelihood(const Eigen::Vector2d& nu, const Eigen::Matrix2d& s);

/// nu^T S^-1 nu.
double mahalanobis_squared(const Eigen::Vector2d& nu, const Eigen::Matrix2d& s);

}  // namespace conestack
