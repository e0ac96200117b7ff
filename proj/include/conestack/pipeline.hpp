#pragma once

#include <array>
#include <optional>

#include "conestack/config.hpp"
#include "conestack/log.hpp"

namespace conestack {

/// Velocity estimator and SLAM driven by log events.
///
/// Input events (TRUTH and sensor streams) are fed in log order. When the
/// first event of a new timestamp arrives, the previous timestamp is closed:
/// VEL_EST is published when due and handed to SLAM, and HEALTH is written
/// with it and whenever a channel changes status. Cone frames produce a SLAM_POSE right away
/// and a MAP when lap closure freezes the map. finish() closes the last
/// timestamp and writes the final MAP, if any frame was seen.
///
/// The output depends only on the sequence of fed events, which is what
/// makes replay of a recorded log reproduce the inline run exactly.
class EstimatorPipeline {
 public:
  explicit EstimatorPipeline(const ScenarioConfig& cfg);

  /// Appends `ev` to `out` together with whatever the estimators emit
  /// around it. Throws std::invalid_argument for an estimator stream.
  void feed(const LogEvent& ev, EventLog& out);
  void finish(EventLog& out);

  /// Wall-clock seconds spent inside estimator code.
  double busy_seconds() const { return busy_; }
  const std::optional<VelocityEstimator>& velocity() const { return velest_; }
  const ConeSlam& slam() const { return slam_; }

 private:
  void close_step(EventLog& out);
  void start_velest(const LogEvent& ev);

  ScenarioConfig cfg_;
  VehicleParams vehicle_;
  std::optional<VelocityEstimator> velest_;
  ConeSlam slam_;
  std::optional<double> open_t_;
  long next_pub_ = 0;  // index of the next VEL_EST slot
  std::array<HealthStatus, kMonitoredSensors.size()> reported_{};
  SlamMode last_mode_ = SlamMode::kMapping;
  long frames_ = 0;
  bool finished_ = false;
  double busy_ = 0.0;
};

struct SimulationResult {
  EventLog log;
  TruthDoc truth;
  double estimator_seconds = 0.0;  // wall clock inside the estimators
  double simulated_seconds = 0.0;
  double real_time_factor() const;
};

/// Single-threaded simulated-time loop. The plant advances at rates.plant;
/// each stream is sampled on its own step grid (sensors from the first step
/// after t = 0), passed through the failure script and fed to the estimators
/// inline. Streams within one step are written in the order TRUTH, WHEELS,
/// GSS, IMU, LIDAR_OBS, CAM_OBS. Deterministic given the config.
SimulationResult run_simulation(const ScenarioConfig& cfg);

struct ReplayResult {
  EventLog log;
  double estimator_seconds = 0.0;
};

/// Drops the estimator streams of a recorded log and runs the estimators
/// over the remaining events.
ReplayResult replay_estimators(const EventLog& recorded, const ScenarioConfig& cfg);

/// The recorded log with the estimator streams removed.
EventLog input_events(const EventLog& log);

}  // namespace conestack
