#pragma once

#include <optional>
#include <vector>

#include "conestack/json_io.hpp"
#include "conestack/log.hpp"

namespace conestack {

// Assignment ----------------------------------------------------------------------

/// Minimum-cost assignment for a rectangular cost matrix (row-major, rows x
/// cols). Every row is assigned when rows <= cols, otherwise every column.
/// Returns the column of each row, -1 for unassigned rows. O(n^2 m).
std::vector<int> hungarian(const std::vector<double>& cost, int rows, int cols);

double assignment_cost(const std::vector<double>& cost, int cols, const std::vector<int>& assignment);

struct ConeMatch {
  int estimated = 0;
  int truth = 0;
  double distance = 0.0;
};

/// Optimal one-to-one matching under a distance gate: minimizes the sum of
/// squared distances of matched pairs plus gate^2 / 2 per unmatched cone, so
/// any pair within the gate is worth matching.
std::vector<ConeMatch> match_cones(const std::vector<Vec2>& estimated, const std::vector<Vec2>& truth, double gate);

// Report --------------------------------------------------------------------------

struct MapMetrics {
  int n_truth = 0;
  int n_estimated = 0;
  int matched = 0;
  int missed = 0;
  int false_cones = 0;
  double recall = 0.0;
  double precision = 0.0;
  double position_rmse = 0.0;
  int colored = 0;  // matches whose estimated color is known
  double color_accuracy = 0.0;
};

struct TrajectoryMetrics {
  int n_poses = 0;
  double ate_rmse = 0.0;
  double max_err = 0.0;
  int n_localization = 0;
  double localization_ate_rmse = 0.0;  // poses in localization mode only
};

struct VelocityMetrics {
  int n = 0;
  double vx_rmse = 0.0;
  double vy_rmse = 0.0;
  double r_rmse = 0.0;
};

struct FaultDetection {
  FailureEvent fault;
  std::optional<double> latency;  // first FAILED at or after t_start, minus t_start
};

struct FailureMetrics {
  std::vector<FaultDetection> faults;  // faults on monitored channels
  int false_alarms = 0;
  double false_alarms_per_minute = 0.0;
  double max_latency() const;  // over detected faults, 0 if none
  int detected() const;
};

struct RuntimeMetrics {
  double simulated_seconds = 0.0;
  double estimator_seconds = 0.0;
  double real_time_factor = 0.0;
};

struct EvalReport {
  MapMetrics map;
  TrajectoryMetrics trajectory;
  VelocityMetrics velocity;
  FailureMetrics failures;
  RuntimeMetrics runtime;
};

struct EvalOptions {
  double map_gate = 1.5;  // m
  // A FAILED declaration this long after a fault ends still counts as its
  // detection rather than a false alarm.
  double detection_grace = 1.0;  // s
};

/// Pure function of the log and the truth. The map is the last MAP event;
/// truth is expressed in the frame of the first TRUTH pose. Runtime is left
/// zero; it is measured separately. Throws std::invalid_argument when TRUTH,
/// VEL_EST, SLAM_POSE or MAP are missing.
EvalReport evaluate(const EventLog& log, const TruthDoc& truth, const EvalOptions& options = {});

/// Map metrics alone, for maps in the frame of the truth cones.
MapMetrics evaluate_map(const ConeMap& map, const std::vector<Cone>& truth, double gate);

}  // namespace conestack
