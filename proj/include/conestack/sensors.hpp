#pragma once

#include <array>
#include <numbers>
#include <string_view>
#include <vector>

#include "conestack/geom.hpp"
#include "conestack/rng.hpp"
#include "conestack/track.hpp"
#include "conestack/vehicle.hpp"

namespace conestack {

enum class Modality { kLidar = 0, kCamera = 1 };

std::string_view to_string(Modality m);
Modality modality_from_string(std::string_view s);

/// One detected cone in the vehicle body frame, as published by either
/// perception chain.
struct ConeObservation {
  Vec2 pos_body = Vec2::Zero();
  Cov2 cov = Cov2::Zero();
  ColorProbs color_probs{0.0, 0.0, 0.0, 1.0};
  Modality modality = Modality::kLidar;
  double timestamp = 0.0;
};

bool operator==(const ConeObservation& a, const ConeObservation& b);

/// All observations of one modality sharing a timestamp.
struct ConeFrame {
  double timestamp = 0.0;
  Modality modality = Modality::kLidar;
  std::vector<ConeObservation> cones;
};

bool operator==(const ConeFrame& a, const ConeFrame& b);

struct WheelSpeeds {
  double timestamp = 0.0;
  std::array<double, 4> omegas{};       // rad/s, order FL FR RL RR
  std::array<bool, 4> valid{true, true, true, true};
  double steering = 0.0;                // steering angle sensor, rad
  bool operator==(const WheelSpeeds&) const = default;
};

struct ImuSample {
  double timestamp = 0.0;
  double ax = 0.0;  // m/s^2, body, bias-corrupted
  double ay = 0.0;
  double gz = 0.0;  // rad/s, bias-corrupted
  bool operator==(const ImuSample&) const = default;
};

struct GssSample {
  double timestamp = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  bool operator==(const GssSample&) const = default;
};

// Error models -----------------------------------------------------------------

struct LidarModelParams {
  bool enabled = true;
  double range = 12.0;           // m, 360 deg field of view
  double sigma0 = 0.03;          // m
  double sigma_k = 0.005;        // m per m of range
  double color_range = 8.0;      // m; beyond it all color mass is UNKNOWN
  double p_color_floor = 0.34;
  double p_color_ceil = 0.97;
  double p_det_near = 0.95;      // detection probability up to det_falloff_start
  double p_det_far = 0.7;        // detection probability at `range`
  double det_falloff_start = 8.0;
  double fp_rate = 0.1;          // Poisson mean of false positives per frame
};

struct CameraModelParams {
  bool enabled = true;
  double range = 15.0;
  double half_fov = 55.0 * std::numbers::pi / 180.0;
  double depth_coeff = 0.01;     // sigma_d = depth_coeff * r^2
  double tangential0 = 0.02;     // sigma_t = tangential0 + tangential_k * r
  double tangential_k = 0.002;
  double p_color = 0.97;
  double p_det = 0.9;
  double fp_rate = 0.05;
};

struct WheelModelParams {
  double sigma = 0.3;  // rad/s
};

struct ImuModelParams {
  double bias_ax = 0.05;
  double bias_ay = -0.03;
  double bias_gz = 0.002;
  double sigma_accel = 0.1;
  double sigma_gyro = 0.005;
};

struct GssModelParams {
  bool enabled = true;
  double sigma = 0.05;  // m/s per axis
};

struct SensorSuiteParams {
  LidarModelParams lidar;
  CameraModelParams camera;
  WheelModelParams wheels;
  ImuModelParams imu;
  GssModelParams gss;
};

double lidar_sigma(const LidarModelParams& p, double range);
double lidar_detection_probability(const LidarModelParams& p, double range);
/// clamp(1 - r / color_range, floor, ceil); beyond color_range the
/// observation carries UNKNOWN mass only.
double lidar_color_probability(const LidarModelParams& p, double range);

/// Covariance oriented along the bearing of `pos_body`: depth variance along
/// the ray, tangential variance across it.
Cov2 camera_covariance(const CameraModelParams& p, const Vec2& pos_body);

/// Color belief reported for a cone of class `truth` when the classifier is
/// right with probability `p_correct`: the reported class gets p_correct and
/// the remaining mass is split over the other known colors.
ColorProbs reported_color_probs(ConeColor truth, double p_correct, Rng& rng);

std::vector<ConeObservation> sample_lidar_cones(const VehicleState& truth, const TrackSpec& track, Rng& rng,
                                                const LidarModelParams& params);
std::vector<ConeObservation> sample_camera_cones(const VehicleState& truth, const TrackSpec& track, Rng& rng,
                                                 const CameraModelParams& params);

WheelSpeeds sample_wheel_speeds(const VehicleState& truth, Rng& rng, const WheelModelParams& params);
ImuSample sample_imu(const VehicleState& truth, Rng& rng, const ImuModelParams& params);
GssSample sample_gss(const VehicleState& truth, Rng& rng, const GssModelParams& params);

/// Checks the ConeObservation invariants against the modality's range.
bool observation_is_valid(const ConeObservation& obs, double max_range);

}  // namespace conestack
