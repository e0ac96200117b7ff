#pragma once

#include <vector>

#include "conestack/track.hpp"
#include "conestack/vehicle.hpp"

namespace conestack {

inline constexpr double kGravity = 9.81;
/// Lateral acceleration envelope of the simulated car (1.7 g).
inline constexpr double kMaxLateralAccel = 1.7 * kGravity;

/// Target speed along the track: v_max on straights, reduced in corners so
/// that v^2 * |curvature| stays at a_lat_design, never below v_min.
struct SpeedProfile {
  double v_min = 8.0;
  double v_max = 12.0;
  double a_lat_design = 8.0;

  static SpeedProfile constant(double v) { return {v, v, kMaxLateralAccel}; }
};

struct FollowerParams {
  double lookahead_gain = 0.35;  // s
  double lookahead_min = 3.0;    // m
  double lookahead_max = 8.0;    // m
  double speed_gain = 2.0;       // 1/s
  double brake_horizon = 1.5;    // s of preview for speed targets
};

/// Speed target per centerline arc length; throws std::runtime_error naming
/// the offending arc when the profile would exceed kMaxLateralAccel.
class SpeedPlan {
 public:
  SpeedPlan(const TrackSpec& track, const SpeedProfile& profile);

  double target(double s) const;
  /// Minimum target over [s, s + horizon].
  double preview(double s, double horizon) const;
  const ClosedPath& path() const { return path_; }

 private:
  ClosedPath path_;
  double step_;
  std::vector<double> speeds_;
};

/// Pure-pursuit driver over the centerline. Returns the trajectory sampled
/// every dt including the initial state (start_pose, flying start).
std::vector<VehicleState> follow_path(const TrackSpec& track, const SpeedProfile& profile, double duration, double dt,
                                      const VehicleParams& vehicle = {}, const FollowerParams& follower = {});

/// Stateful form of follow_path used by the simulation driver.
class PathFollower {
 public:
  PathFollower(const TrackSpec& track, const SpeedProfile& profile, const VehicleParams& vehicle = {},
               const FollowerParams& follower = {});

  VehicleState initial_state() const;
  DriveInput control(const VehicleState& s);
  /// Distance travelled along the centerline since the start.
  double progress() const { return progress_; }

 private:
  SpeedPlan plan_;
  VehicleParams vehicle_;
  FollowerParams follower_;
  std::size_t segment_hint_ = 0;
  double last_s_ = 0.0;
  double progress_ = 0.0;
};

}  // namespace conestack
