#pragma once

#include <array>

#include "conestack/geom.hpp"

namespace conestack {

/// Body-frame planar velocity: longitudinal, lateral, yaw rate.
struct VelocityState {
  double vx = 0.0;
  double vy = 0.0;
  double r = 0.0;

  Vec3 as_vector() const { return {vx, vy, r}; }
  static VelocityState from_vector(const Vec3& v) { return {v(0), v(1), v(2)}; }
  bool finite() const;
  bool operator==(const VelocityState&) const = default;
};

struct DriveInput {
  double steering = 0.0;  // front axle, rad
  double accel_cmd = 0.0;  // m/s^2
  bool operator==(const DriveInput&) const = default;
};

/// Single configuration for every vehicle constant used by the plant, the
/// sensors and the velocity estimator.
struct VehicleParams {
  double mass = 190.0;           // kg
  double yaw_inertia = 110.0;    // kg m^2
  double lf = 0.80;              // CoG to front axle, m
  double lr = 0.75;              // CoG to rear axle, m
  double track = 1.2;            // lateral wheel spacing, m
  double r_eff = 0.23;           // effective rolling radius, m
  double cf = 20000.0;           // front axle cornering stiffness, N/rad
  double cr = 22000.0;           // rear axle cornering stiffness, N/rad
  double kappa_gain = 0.01;      // slip ratio per m/s^2 of accel command
  double kappa_max = 0.1;
  double steer_max = 0.45;       // rad
  double accel_max = 15.0;       // m/s^2
  double drag = 0.0;             // 1/m, quadratic longitudinal drag
  double v_floor = 1.0;          // m/s, slip-angle denominator floor
  double max_substep = 1e-3;     // s

  double wheelbase() const { return lf + lr; }
};

/// Wheel order: front-left, front-right, rear-left, rear-right.
enum WheelIndex { kFrontLeft = 0, kFrontRight = 1, kRearLeft = 2, kRearRight = 3 };

struct VehicleState {
  Pose2D pose;
  VelocityState vel;
  std::array<double, 4> wheel_omegas{};  // rad/s
  Vec2 accel = Vec2::Zero();             // body-frame specific force, m/s^2
  DriveInput input;                      // input applied over the last step
  double timestamp = 0.0;
};

/// Longitudinal hub speed of every wheel in its own rolling direction
/// (front wheels rotated by the steering angle). No slip.
std::array<double, 4> wheel_hub_speeds(const VelocityState& vel, double steering, const VehicleParams& params);

/// Partial derivatives of wheel_hub_speeds w.r.t. (vx, vy, r); row per wheel.
Eigen::Matrix<double, 4, 3> wheel_hub_jacobian(double steering, const VehicleParams& params);

double slip_ratio(double accel_cmd, const VehicleParams& params);

/// Wheel angular rates including the commanded slip ratio.
std::array<double, 4> wheel_omegas(const VelocityState& vel, const DriveInput& u, const VehicleParams& params);

/// Dynamic bicycle model with linear tire forces, RK4 over fixed substeps.
/// dt must lie in (0, 0.02]; the input must respect steer_max / accel_max.
VehicleState step_dynamics(const VehicleState& s, const DriveInput& u, double dt, const VehicleParams& params);

/// State at rest at `pose`.
VehicleState make_state(const Pose2D& pose, double vx, const VehicleParams& params);

}  // namespace conestack
