#include "conestack/velest.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace conestack {

std::string_view to_string(HealthStatus s) {
  switch (s) {
    case HealthStatus::kHealthy:
      return "HEALTHY";
    case HealthStatus::kSuspect:
      return "SUSPECT";
    case HealthStatus::kFailed:
      return "FAILED";
  }
  return "HEALTHY";
}

HealthStatus health_status_from_string(std::string_view s) {
  if (s == "HEALTHY") return HealthStatus::kHealthy;
  if (s == "SUSPECT") return HealthStatus::kSuspect;
  if (s == "FAILED") return HealthStatus::kFailed;
  throw std::invalid_argument("unknown health status '" + std::string(s) + "'");
}

VelocityState process_step(const VelocityState& x, const Vec3& imu, double dt, double tau_r) {
  return {x.vx + dt * (imu.x() + x.r * x.vy), x.vy + dt * (imu.y() - x.r * x.vx),
          x.r + dt * (imu.z() - x.r) / tau_r};
}

Mat3 process_jacobian(const VelocityState& x, double dt, double tau_r) {
  Mat3 f;
  f << 1.0, dt * x.r, dt * x.vy,  //
      -dt * x.r, 1.0, -dt * x.vx,  //
      0.0, 0.0, 1.0 - dt / tau_r;
  return f;
}

VelBelief predict(const VelBelief& b, const Vec3& imu, double dt, const Vec3& q, double tau_r) {
  if (!(dt > 0.0 && dt <= 0.05)) throw std::invalid_argument("predict: dt must lie in (0, 0.05]");
  const Mat3 f = process_jacobian(b.mean, dt, tau_r);
  VelBelief out;
  out.mean = process_step(b.mean, imu, dt, tau_r);
  out.cov = f * b.cov * f.transpose();
  out.cov.diagonal() += q * dt;
  symmetrize(out.cov);
  out.timestamp = b.timestamp + dt;
  return out;
}

namespace {

// Joseph-form update with a diagonal measurement covariance.
void joseph_update(VelBelief& b, const Eigen::MatrixXd& h, const Eigen::VectorXd& nu, const Eigen::VectorXd& r_diag) {
  const Eigen::MatrixXd r = r_diag.asDiagonal();
  const Eigen::MatrixXd s = h * b.cov * h.transpose() + r;
  const Eigen::MatrixXd k = b.cov * h.transpose() * s.ldlt().solve(Eigen::MatrixXd::Identity(s.rows(), s.cols()));
  b.mean = VelocityState::from_vector(b.mean.as_vector() + k * nu);
  const Eigen::MatrixXd ikh = Eigen::MatrixXd::Identity(3, 3) - k * h;
  Cov3 p = ikh * b.cov * ikh.transpose() + k * r * k.transpose();
  symmetrize(p);
  b.cov = p;
}

}  // namespace

UpdateResult update_wheels(const VelBelief& b, const WheelSpeeds& meas, double ax_est, const SensorHealth& health,
                           const VelestParams& params, const VehicleParams& vehicle, const WheelSpeeds* previous) {
  UpdateResult res{b, {}};
  const auto hub = wheel_hub_speeds(b.mean, meas.steering, vehicle);
  const Eigen::Matrix<double, 4, 3> jac = wheel_hub_jacobian(meas.steering, vehicle) / vehicle.r_eff;
  const double slip = params.slip_gamma * std::abs(ax_est);
  const double r_var = params.sigma_wheel * params.sigma_wheel + slip * slip;

  std::vector<int> used;
  for (int i = 0; i < 4; ++i) {
    if (!meas.valid[i]) continue;
    auto& o = res.outcomes[i];
    o.evaluated = true;
    const double nu = meas.omegas[i] - hub[i] / vehicle.r_eff;
    const Eigen::RowVector3d hi = jac.row(i);
    const double s = (hi * b.cov * hi.transpose())(0, 0) + r_var;
    o.nis = nu * nu / s;
    const bool repeat = params.reject_repeats && previous != nullptr && previous->valid[i] &&
                        previous->omegas[i] == meas.omegas[i];
    o.gate_failed = o.nis > params.gate_1dof || repeat;
    o.used = !o.gate_failed && health[i].status != HealthStatus::kFailed;
    if (o.used) used.push_back(i);
  }
  if (used.empty()) return res;

  const auto m = static_cast<Eigen::Index>(used.size());
  Eigen::MatrixXd h(m, 3);
  Eigen::VectorXd nu(m), r = Eigen::VectorXd::Constant(m, r_var);
  for (Eigen::Index k = 0; k < m; ++k) {
    const int i = used[static_cast<std::size_t>(k)];
    h.row(k) = jac.row(i);
    nu(k) = meas.omegas[i] - hub[i] / vehicle.r_eff;
  }
  joseph_update(res.belief, h, nu, r);
  return res;
}

UpdateResult update_gss(const VelBelief& b, const GssSample& meas, const SensorHealth& health,
                        const VelestParams& params, const GssSample* previous) {
  UpdateResult res{b, {}};
  auto& o = res.outcomes[kGssChannel];
  o.evaluated = true;
  const Vec2 nu(meas.vx - b.mean.vx, meas.vy - b.mean.vy);
  const Mat2 s = b.cov.topLeftCorner<2, 2>() + params.sigma_gss * params.sigma_gss * Mat2::Identity();
  o.nis = mahalanobis_squared(nu, s);
  const bool repeat =
      params.reject_repeats && previous != nullptr && previous->vx == meas.vx && previous->vy == meas.vy;
  o.gate_failed = o.nis > params.gate_2dof || repeat;
  o.used = !o.gate_failed && health[kGssChannel].status != HealthStatus::kFailed;
  if (!o.used) return res;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(2, 3);
  h(0, 0) = 1.0;
  h(1, 1) = 1.0;
  joseph_update(res.belief, h, Eigen::VectorXd(nu),
                Eigen::VectorXd::Constant(2, params.sigma_gss * params.sigma_gss));
  return res;
}

ChannelHealth update_failure_belief(ChannelHealth h, bool gate_failed, const FailureBeliefParams& p) {
  const double prior = h.fail_belief * (1.0 - p.leak_to_recovery) + (1.0 - h.fail_belief) * p.leak_to_failure;
  const double like_failed = gate_failed ? p.p_fail_if_failed : 1.0 - p.p_fail_if_failed;
  const double like_healthy = gate_failed ? p.p_fail_if_healthy : 1.0 - p.p_fail_if_healthy;
  const double num = like_failed * prior;
  h.fail_belief = std::clamp(num / (num + like_healthy * (1.0 - prior)), 0.0, 1.0);
  if (h.fail_belief > p.failed_above)
    h.status = HealthStatus::kFailed;
  else if (h.fail_belief < p.healthy_below)
    h.status = HealthStatus::kHealthy;
  else
    h.status = HealthStatus::kSuspect;
  h.window.push_back(gate_failed);
  while (h.window.size() > p.window) h.window.pop_front();
  return h;
}

// Buffer --------------------------------------------------------------------------

double timestamp_of(const VelMeasurement& m) {
  return std::visit([](const auto& s) { return s.timestamp; }, m);
}

void MeasurementBuffer::push(VelMeasurement m) {
  const std::lock_guard lock(mutex_);
  if (released_until_ && timestamp_of(m) < *released_until_) {
    ++dropped_;
    return;
  }
  pending_.emplace_back(sequence_++, std::move(m));
}

std::vector<VelMeasurement> MeasurementBuffer::release_until(double t) {
  std::vector<std::pair<std::size_t, VelMeasurement>> ready, keep;
  for (auto& e : pending_) (timestamp_of(e.second) <= t ? ready : keep).push_back(std::move(e));
  pending_ = std::move(keep);
  std::sort(ready.begin(), ready.end(), [](const auto& a, const auto& b) {
    const double ta = timestamp_of(a.second), tb = timestamp_of(b.second);
    return ta != tb ? ta < tb : a.first < b.first;
  });
  std::vector<VelMeasurement> out;
  out.reserve(ready.size());
  for (auto& e : ready) out.push_back(std::move(e.second));
  if (!out.empty()) released_until_ = std::max(released_until_.value_or(-1e300), timestamp_of(out.back()));
  return out;
}

std::vector<VelMeasurement> MeasurementBuffer::drain(double now) {
  const std::lock_guard lock(mutex_);
  return release_until(now - window_);
}

std::vector<VelMeasurement> MeasurementBuffer::flush() {
  const std::lock_guard lock(mutex_);
  return release_until(1e300);
}

std::size_t MeasurementBuffer::dropped() const {
  const std::lock_guard lock(mutex_);
  return dropped_;
}

// Estimator -------------------------------------------------------------------------

VelBelief initial_belief(const VelocityState& v, double t, const VelestParams& params) {
  VelBelief b;
  b.mean = v;
  b.cov = params.initial_sigma.cwiseAbs2().asDiagonal();
  b.timestamp = t;
  return b;
}

VelocityEstimator::VelocityEstimator(const VelestParams& params, const VehicleParams& vehicle,
                                     const VelBelief& initial)
    : params_(params), vehicle_(vehicle), belief_(initial) {
  require_covariance(belief_.cov, "initial velocity covariance");
}

void VelocityEstimator::predict_to(double t) {
  while (t - belief_.timestamp > 1e-12) {
    const double dt = std::min(params_.max_predict_dt, t - belief_.timestamp);
    belief_ = predict(belief_, imu_, dt, params_.q, params_.tau_r);
  }
  belief_.timestamp = std::max(belief_.timestamp, t);
}

void VelocityEstimator::apply_outcomes(const GateOutcomes& outcomes) {
  outcomes_ = outcomes;
  for (std::size_t i = 0; i < outcomes.size(); ++i)
    if (outcomes[i].evaluated) health_[i] = update_failure_belief(health_[i], outcomes[i].gate_failed, params_.failure);
}

void VelocityEstimator::process(const ImuSample& s) {
  if (s.timestamp < belief_.timestamp) {
    ++stale_;
    return;
  }
  predict_to(s.timestamp);
  imu_ = Vec3(s.ax, s.ay, s.gz) - params_.imu_bias;
}

void VelocityEstimator::process(const WheelSpeeds& s) {
  if (s.timestamp < belief_.timestamp) {
    ++stale_;
    return;
  }
  predict_to(s.timestamp);
  const auto res = update_wheels(belief_, s, imu_.x(), health_, params_, vehicle_,
                                 last_wheels_ ? &*last_wheels_ : nullptr);
  last_wheels_ = s;
  belief_ = res.belief;
  apply_outcomes(res.outcomes);
}

void VelocityEstimator::process(const GssSample& s) {
  if (s.timestamp < belief_.timestamp) {
    ++stale_;
    return;
  }
  predict_to(s.timestamp);
  const auto res = update_gss(belief_, s, health_, params_, last_gss_ ? &*last_gss_ : nullptr);
  last_gss_ = s;
  belief_ = res.belief;
  apply_outcomes(res.outcomes);
}

VelBelief VelocityEstimator::published() const {
  VelBelief out = belief_;
  out.mean.r = imu_.z();
  out.cov.row(2).setZero();
  out.cov.col(2).setZero();
  out.cov(2, 2) = params_.sigma_gyro * params_.sigma_gyro;
  return out;
}

void VelocityEstimator::process(const VelMeasurement& m) {
  std::visit([this](const auto& s) { process(s); }, m);
}

}  // namespace conestack
