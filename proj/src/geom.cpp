#include "conestack/geom.hpp"

#include <algorithm>
#include <numbers>

namespace conestack {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}  // namespace

double wrap_angle(double a) {
  if (!std::isfinite(a)) throw std::invalid_argument("wrap_angle: non-finite angle");
  if (a > -kPi && a <= kPi) return a;
  double r = std::fmod(a + kPi, kTwoPi);
  if (r <= 0.0) r += kTwoPi;
  r -= kPi;
  // Rounding can land an odd multiple of pi on the excluded end.
  if (r <= -kPi) r = kPi;
  return r;
}

Mat2 rotation(double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  Mat2 r;
  r << c, -s, s, c;
  return r;
}

Mat2 Pose2D::rotation() const { return conestack::rotation(theta_); }

Pose2D compose(const Pose2D& a, const Pose2D& b) {
  const double c = std::cos(a.theta());
  const double s = std::sin(a.theta());
  return {a.x() + c * b.x() - s * b.y(), a.y() + s * b.x() + c * b.y(), a.theta() + b.theta()};
}

Pose2D inverse(const Pose2D& p) {
  const double c = std::cos(p.theta());
  const double s = std::sin(p.theta());
  return {-c * p.x() - s * p.y(), s * p.x() - c * p.y(), -p.theta()};
}

Vec2 to_body(const Pose2D& pose, const Vec2& world_pt) {
  const double c = std::cos(pose.theta());
  const double s = std::sin(pose.theta());
  const double dx = world_pt.x() - pose.x();
  const double dy = world_pt.y() - pose.y();
  return {c * dx + s * dy, -s * dx + c * dy};
}

Vec2 to_world(const Pose2D& pose, const Vec2& body_pt) {
  const double c = std::cos(pose.theta());
  const double s = std::sin(pose.theta());
  return {pose.x() + c * body_pt.x() - s * body_pt.y(), pose.y() + s * body_pt.x() + c * body_pt.y()};
}

Mat3 to_matrix(const Pose2D& p) {
  Mat3 m = Mat3::Identity();
  m.topLeftCorner<2, 2>() = p.rotation();
  m(0, 2) = p.x();
  m(1, 2) = p.y();
  return m;
}

CovarianceCheck check_covariance(const Eigen::Ref<const Eigen::MatrixXd>& cov) {
  if (cov.rows() != cov.cols()) return {false, "not square"};
  if (!cov.allFinite()) return {false, "non-finite entry"};
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  const double asym = (cov - cov.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-9 * scale) return {false, "asymmetric (" + std::to_string(asym) + ")"};
  const Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  const double min_eig = es.eigenvalues().minCoeff();
  if (min_eig < -1e-9 * scale) return {false, "negative eigenvalue (" + std::to_string(min_eig) + ")"};
  return {};
}

bool is_valid_covariance(const Eigen::Ref<const Eigen::MatrixXd>& cov) { return check_covariance(cov).ok; }

void require_covariance(const Eigen::Ref<const Eigen::MatrixXd>& cov, const char* what) {
  const auto check = check_covariance(cov);
  if (!check.ok) throw std::domain_error(std::string(what) + ": invalid covariance: " + check.reason);
}

Eigen::MatrixXd covariance_factor(const Eigen::Ref<const Eigen::MatrixXd>& cov) {
  require_covariance(cov, "covariance_factor");
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  const Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  const Eigen::VectorXd sqrt_eig = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * sqrt_eig.asDiagonal();
}

Eigen::VectorXd sample_gaussian(Rng& rng, const Eigen::Ref<const Eigen::VectorXd>& mean,
                                const Eigen::Ref<const Eigen::MatrixXd>& cov) {
  if (cov.rows() != mean.size()) throw std::invalid_argument("sample_gaussian: dimension mismatch");
  const Eigen::MatrixXd factor = covariance_factor(cov);
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  return mean + factor * z;
}

}  // namespace conestack
