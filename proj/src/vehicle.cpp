#include "conestack/vehicle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace conestack {

bool VelocityState::finite() const { return std::isfinite(vx) && std::isfinite(vy) && std::isfinite(r); }

namespace {

// x, y, theta, vx, vy, r
using PlantState = Eigen::Matrix<double, 6, 1>;

struct Derivative {
  PlantState dot;
  Vec2 specific_force;
};

Derivative plant_derivative(const PlantState& y, const DriveInput& u, const VehicleParams& p) {
  const double theta = y(2);
  const double vx = y(3);
  const double vy = y(4);
  const double r = y(5);
  const double delta = u.steering;

  const double v_den = std::max(vx, p.v_floor);
  const double alpha_f = std::atan((vy + p.lf * r) / v_den) - delta;
  const double alpha_r = std::atan((vy - p.lr * r) / v_den);
  const double fyf = -p.cf * alpha_f;
  const double fyr = -p.cr * alpha_r;

  const double ax = u.accel_cmd - fyf * std::sin(delta) / p.mass - p.drag * vx * std::abs(vx);
  const double ay = (fyf * std::cos(delta) + fyr) / p.mass;

  Derivative d;
  d.dot(0) = vx * std::cos(theta) - vy * std::sin(theta);
  d.dot(1) = vx * std::sin(theta) + vy * std::cos(theta);
  d.dot(2) = r;
  d.dot(3) = ax + r * vy;
  d.dot(4) = ay - r * vx;
  d.dot(5) = (p.lf * fyf * std::cos(delta) - p.lr * fyr) / p.yaw_inertia;
  d.specific_force = {ax, ay};
  return d;
}

}  // namespace

std::array<double, 4> wheel_hub_speeds(const VelocityState& vel, double steering, const VehicleParams& p) {
  const double half = 0.5 * p.track;
  const std::array<Vec2, 4> offsets = {Vec2(p.lf, half), Vec2(p.lf, -half), Vec2(-p.lr, half), Vec2(-p.lr, -half)};
  std::array<double, 4> out{};
  for (int i = 0; i < 4; ++i) {
    const double hub_x = vel.vx - vel.r * offsets[i].y();
    const double hub_y = vel.vy + vel.r * offsets[i].x();
    const double delta = i < 2 ? steering : 0.0;
    out[i] = hub_x * std::cos(delta) + hub_y * std::sin(delta);
  }
  return out;
}

Eigen::Matrix<double, 4, 3> wheel_hub_jacobian(double steering, const VehicleParams& p) {
  const double half = 0.5 * p.track;
  const std::array<Vec2, 4> offsets = {Vec2(p.lf, half), Vec2(p.lf, -half), Vec2(-p.lr, half), Vec2(-p.lr, -half)};
  Eigen::Matrix<double, 4, 3> h;
  for (int i = 0; i < 4; ++i) {
    const double delta = i < 2 ? steering : 0.0;
    const double c = std::cos(delta);
    const double s = std::sin(delta);
    h(i, 0) = c;
    h(i, 1) = s;
    h(i, 2) = -offsets[i].y() * c + offsets[i].x() * s;
  }
  return h;
}

double slip_ratio(double accel_cmd, const VehicleParams& p) {
  return std::clamp(p.kappa_gain * accel_cmd, -p.kappa_max, p.kappa_max);
}

std::array<double, 4> wheel_omegas(const VelocityState& vel, const DriveInput& u, const VehicleParams& p) {
  const auto hub = wheel_hub_speeds(vel, u.steering, p);
  const double kappa = slip_ratio(u.accel_cmd, p);
  std::array<double, 4> out{};
  for (int i = 0; i < 4; ++i) out[i] = hub[i] * (1.0 + kappa) / p.r_eff;
  return out;
}

VehicleState step_dynamics(const VehicleState& s, const DriveInput& u, double dt, const VehicleParams& p) {
  if (!(dt > 0.0 && dt <= 0.02)) throw std::invalid_argument("step_dynamics: dt must lie in (0, 0.02]");
  if (!(std::abs(u.steering) <= p.steer_max)) throw std::invalid_argument("step_dynamics: steering beyond steer_max");
  if (!(std::abs(u.accel_cmd) <= p.accel_max)) throw std::invalid_argument("step_dynamics: accel_cmd beyond accel_max");
  if (!s.vel.finite()) throw std::invalid_argument("step_dynamics: non-finite velocity");

  PlantState y;
  y << s.pose.x(), s.pose.y(), s.pose.theta(), s.vel.vx, s.vel.vy, s.vel.r;

  const int n_sub = std::max(1, static_cast<int>(std::ceil(dt / p.max_substep - 1e-9)));
  const double h = dt / n_sub;
  for (int k = 0; k < n_sub; ++k) {
    const PlantState k1 = plant_derivative(y, u, p).dot;
    const PlantState k2 = plant_derivative(y + 0.5 * h * k1, u, p).dot;
    const PlantState k3 = plant_derivative(y + 0.5 * h * k2, u, p).dot;
    const PlantState k4 = plant_derivative(y + h * k3, u, p).dot;
    y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    // The plant does not reverse.
    if (y(3) < 0.0) y(3) = 0.0;
  }

  VehicleState out;
  out.pose = Pose2D(y(0), y(1), y(2));
  out.vel = {y(3), y(4), y(5)};
  out.input = u;
  out.timestamp = s.timestamp + dt;
  out.accel = plant_derivative(y, u, p).specific_force;
  if (out.vel.vx == 0.0 && u.accel_cmd <= 0.0) out.accel.x() = 0.0;
  out.wheel_omegas = wheel_omegas(out.vel, u, p);
  return out;
}

VehicleState make_state(const Pose2D& pose, double vx, const VehicleParams& p) {
  VehicleState s;
  s.pose = pose;
  s.vel = {vx, 0.0, 0.0};
  s.wheel_omegas = wheel_omegas(s.vel, s.input, p);
  return s;
}

}  // namespace conestack
