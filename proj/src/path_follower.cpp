#include "conestack/path_follower.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace conestack {

SpeedPlan::SpeedPlan(const TrackSpec& track, const SpeedProfile& profile) : path_(track.centerline) {
  if (!(profile.v_min > 0.0 && profile.v_max >= profile.v_min))
    throw std::invalid_argument("SpeedPlan: need 0 < v_min <= v_max");
  if (profile.v_max > 25.0) throw std::invalid_argument("SpeedPlan: v_max above 25 m/s");

  const double len = path_.length();
  const auto n = static_cast<std::size_t>(std::ceil(len / 0.5));
  step_ = len / static_cast<double>(n);
  std::vector<double> curvature(n);
  for (std::size_t i = 0; i < n; ++i) curvature[i] = std::abs(path_.curvature_at(i * step_, 1.5));
  // Moving average over +-2 m suppresses polyline kinks.
  const int half = static_cast<int>(std::round(2.0 / step_));
  std::vector<double> smooth(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int k = -half; k <= half; ++k) acc += curvature[(i + n + k) % n];
    smooth[i] = acc / (2 * half + 1);
  }

  speeds_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double k = smooth[i];
    const double v_corner = k > 1e-9 ? std::sqrt(profile.a_lat_design / k) : profile.v_max;
    speeds_[i] = std::clamp(v_corner, profile.v_min, profile.v_max);
  }

  // Report the first contiguous arc that breaks the lateral envelope.
  for (std::size_t i = 0; i < n; ++i) {
    const double a_lat = speeds_[i] * speeds_[i] * smooth[i];
    if (a_lat <= kMaxLateralAccel) continue;
    std::size_t j = i;
    double worst = a_lat;
    while (j + 1 < n && speeds_[j + 1] * speeds_[j + 1] * smooth[j + 1] > kMaxLateralAccel) {
      ++j;
      worst = std::max(worst, speeds_[j] * speeds_[j] * smooth[j]);
    }
    std::ostringstream msg;
    msg << "speed profile infeasible on arc s=[" << i * step_ << ", " << (j + 1) * step_ << "] m: speed "
        << speeds_[i] << " m/s at curvature " << smooth[i] << " 1/m gives lateral acceleration " << worst
        << " m/s^2 (" << worst / kGravity << " g) above the 1.7 g limit";
    throw std::runtime_error(msg.str());
  }
}

double SpeedPlan::target(double s) const {
  const double len = path_.length();
  s = std::fmod(s, len);
  if (s < 0.0) s += len;
  const auto i = static_cast<std::size_t>(s / step_) % speeds_.size();
  return speeds_[i];
}

double SpeedPlan::preview(double s, double horizon) const {
  double v = target(s);
  for (double d = step_; d <= horizon; d += step_) v = std::min(v, target(s + d));
  return v;
}

PathFollower::PathFollower(const TrackSpec& track, const SpeedProfile& profile, const VehicleParams& vehicle,
                           const FollowerParams& follower)
    : plan_(track, profile), vehicle_(vehicle), follower_(follower) {}

VehicleState PathFollower::initial_state() const {
  const Vec2 p0 = plan_.path().point_at(0.0);
  return make_state(Pose2D(p0, plan_.path().heading_at(0.0)), plan_.target(0.0), vehicle_);
}

DriveInput PathFollower::control(const VehicleState& s) {
  const auto& path = plan_.path();
  const double len = path.length();
  const double station = path.project(s.pose.translation(), &segment_hint_);
  double ds = station - last_s_;
  if (ds < -0.5 * len) ds += len;
  if (ds > 0.5 * len) ds -= len;
  progress_ += ds;
  last_s_ = station;

  const double vx = s.vel.vx;
  const double lookahead = std::clamp(follower_.lookahead_gain * vx, follower_.lookahead_min, follower_.lookahead_max);
  const Vec2 target = to_body(s.pose, path.point_at(station + lookahead));
  const double alpha = std::atan2(target.y(), target.x());
  const double wheelbase = vehicle_.wheelbase();
  double steering = std::atan(2.0 * wheelbase * std::sin(alpha) / lookahead);
  steering = std::clamp(steering, -vehicle_.steer_max, vehicle_.steer_max);

  const double v_target = plan_.preview(station, std::max(vx, 1.0) * follower_.brake_horizon);
  double accel = follower_.speed_gain * (v_target - vx);
  const double a_lat_cmd = vx * vx * std::abs(std::tan(steering)) / wheelbase;
  if (a_lat_cmd > 0.9 * kMaxLateralAccel) accel = std::min(accel, -3.0);
  accel = std::clamp(accel, -0.6 * vehicle_.accel_max, 0.6 * vehicle_.accel_max);
  return {steering, accel};
}

std::vector<VehicleState> follow_path(const TrackSpec& track, const SpeedProfile& profile, double duration, double dt,
                                      const VehicleParams& vehicle, const FollowerParams& follower) {
  if (!(duration >= 0.0)) throw std::invalid_argument("follow_path: negative duration");
  PathFollower driver(track, profile, vehicle, follower);
  std::vector<VehicleState> out;
  out.reserve(static_cast<std::size_t>(duration / dt) + 2);
  out.push_back(driver.initial_state());
  const auto steps = static_cast<long>(std::floor(duration / dt + 1e-9));
  for (long k = 0; k < steps; ++k) {
    const DriveInput u = driver.control(out.back());
    VehicleState next = step_dynamics(out.back(), u, dt, vehicle);
    next.timestamp = (k + 1) * dt;
    out.push_back(next);
  }
  return out;
}

}  // namespace conestack
