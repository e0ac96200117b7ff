#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

#include "conestack/rng.hpp"

namespace conestack {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Cov2 = Eigen::Matrix2d;
using Cov3 = Eigen::Matrix3d;

/// Wraps an angle into (-pi, pi]; pi maps to pi. Throws on non-finite input.
double wrap_angle(double a);

/// Rigid transform in the plane. The heading is kept in (-pi, pi].
class Pose2D {
 public:
  Pose2D() = default;
  Pose2D(double x, double y, double theta) : x_(x), y_(y), theta_(wrap_angle(theta)) {}
  Pose2D(const Vec2& t, double theta) : Pose2D(t.x(), t.y(), theta) {}

  static Pose2D identity() { return {}; }

  double x() const { return x_; }
  double y() const { return y_; }
  double theta() const { return theta_; }
  Vec2 translation() const { return {x_, y_}; }
  Mat2 rotation() const;

  bool operator==(const Pose2D&) const = default;

 private:
  double x_ = 0.0;
  double y_ = 0.0;
  double theta_ = 0.0;
};

Mat2 rotation(double theta);

/// a then b: the pose of b expressed in the frame where a lives.
Pose2D compose(const Pose2D& a, const Pose2D& b);
Pose2D inverse(const Pose2D& p);

/// World point -> body frame of `pose`.
Vec2 to_body(const Pose2D& pose, const Vec2& world_pt);
Vec2 to_world(const Pose2D& pose, const Vec2& body_pt);

/// Homogeneous 3x3 form, used by tests and debugging.
Mat3 to_matrix(const Pose2D& p);

// Covariance helpers --------------------------------------------------------

struct CovarianceCheck {
  bool ok = true;
  std::string reason;
};

/// Symmetric to 1e-9 (relative to the largest entry) and no eigenvalue below
/// -1e-9 (relative). Applies to every covariance produced in the repository.
CovarianceCheck check_covariance(const Eigen::Ref<const Eigen::MatrixXd>& cov);
bool is_valid_covariance(const Eigen::Ref<const Eigen::MatrixXd>& cov);

/// Throws std::domain_error naming `what` when the check fails.
void require_covariance(const Eigen::Ref<const Eigen::MatrixXd>& cov, const char* what);

/// Lower factor L with L*L^T = cov. Cholesky first, eigen-decomposition for
/// semidefinite input. Throws std::domain_error if cov is not PSD.
Eigen::MatrixXd covariance_factor(const Eigen::Ref<const Eigen::MatrixXd>& cov);

Eigen::VectorXd sample_gaussian(Rng& rng, const Eigen::Ref<const Eigen::VectorXd>& mean,
                                const Eigen::Ref<const Eigen::MatrixXd>& cov);

/// Fixed-size variant used on hot paths.
template <int N>
Eigen::Matrix<double, N, 1> sample_gaussian(Rng& rng, const Eigen::Matrix<double, N, 1>& mean,
                                            const Eigen::Matrix<double, N, N>& cov) {
  Eigen::Matrix<double, N, N> factor;
  Eigen::LLT<Eigen::Matrix<double, N, N>> llt(cov);
  if (llt.info() == Eigen::Success) {
    factor = llt.matrixL();
  } else {
    factor = covariance_factor(cov);
  }
  Eigen::Matrix<double, N, 1> z;
  for (int i = 0; i < N; ++i) z(i) = rng.normal();
  return mean + factor * z;
}

/// Symmetrizes in place: (P + P^T) / 2.
template <typename Derived>
void symmetrize(Eigen::MatrixBase<Derived>& m) {
  m = (0.5 * (m + m.transpose())).eval();
}

}  // namespace conestack
