#pragma once

#include <array>
#include <cstddef>
#include <deque>
#include <mutex>
#include <optional>
#include <variant>
#include <vector>

#include "conestack/failures.hpp"
#include "conestack/geom.hpp"
#include "conestack/stats.hpp"
#include "conestack/sensors.hpp"
#include "conestack/vehicle.hpp"

namespace conestack {

struct VelBelief {
  VelocityState mean;
  Cov3 cov = Cov3::Zero();
  double timestamp = 0.0;
  bool operator==(const VelBelief& o) const {
    return mean == o.mean && cov == o.cov && timestamp == o.timestamp;
  }
};

enum class HealthStatus { kHealthy, kSuspect, kFailed };

std::string_view to_string(HealthStatus s);
HealthStatus health_status_from_string(std::string_view s);

/// Channels monitored by the failure detector.
constexpr std::array<SensorId, 5> kMonitoredSensors = {SensorId::kWheel0, SensorId::kWheel1, SensorId::kWheel2,
                                                       SensorId::kWheel3, SensorId::kGss};
constexpr std::size_t kGssChannel = 4;

struct ChannelHealth {
  HealthStatus status = HealthStatus::kHealthy;
  double fail_belief = 0.0;
  std::deque<bool> window;  // most recent gate outcomes, true = gate failure
  bool operator==(const ChannelHealth&) const = default;
};

using SensorHealth = std::array<ChannelHealth, kMonitoredSensors.size()>;

struct FailureBeliefParams {
  double p_fail_if_failed = 0.9;    // P(gate failure | sensor FAILED)
  double p_fail_if_healthy = 0.01;  // P(gate failure | sensor HEALTHY)
  double leak_to_failure = 0.001;   // per step
  double leak_to_recovery = 0.01;   // per step
  double failed_above = 0.95;
  double healthy_below = 0.5;
  std::size_t window = 20;
};

struct VelestParams {
  double tau_r = 0.05;                          // s, gyro tracking constant
  // Process noise density of (vx, vy, r). The velocity terms match the
  // accelerometer noise; the yaw-rate term covers the lag of the first-order
  // gyro tracking in turns.
  Vec3 q = Vec3(5.0e-5, 5.0e-5, 2.0e-2);
  double sigma_wheel = 0.35;                    // rad/s, inflated over the sensor's 0.3
  double slip_gamma = 0.5;                      // rad/s per m/s^2 of |ax|
  double sigma_gss = 0.05;                      // m/s
  double gate_1dof = 6.63;                      // chi2(0.99, 1)
  double gate_2dof = 9.21;                      // chi2(0.99, 2)
  double max_predict_dt = 0.05;
  double reorder_window = 0.02;                 // s
  Vec3 imu_bias = Vec3(0.05, -0.03, 0.002);     // known (ax, ay, gz) biases
  double sigma_gyro = 0.005;                    // rad/s, used for the published yaw rate
  Vec3 initial_sigma = Vec3(1.0, 0.5, 0.1);
  // A noisy sensor never repeats a reading bit for bit, so an exact repeat
  // of the previous sample is scored as a gate failure and not fused.
  bool reject_repeats = true;
  FailureBeliefParams failure;
};

// Process model -----------------------------------------------------------------

/// Euler step of vx' = ax + r vy, vy' = ay - r vx, r' = (gz - r) / tau.
VelocityState process_step(const VelocityState& x, const Vec3& imu, double dt, double tau_r);
Mat3 process_jacobian(const VelocityState& x, double dt, double tau_r);

/// `imu` holds bias-corrected (ax, ay, gz). Throws std::invalid_argument
/// unless dt lies in (0, 0.05].
VelBelief predict(const VelBelief& b, const Vec3& imu, double dt, const Vec3& q, double tau_r = 0.05);

// Measurement updates -----------------------------------------------------------

struct GateOutcome {
  bool evaluated = false;  // a measurement for this channel was present
  double nis = 0.0;
  bool gate_failed = false;
  bool used = false;  // entered the joint update
  bool operator==(const GateOutcome&) const = default;
};

using GateOutcomes = std::array<GateOutcome, kMonitoredSensors.size()>;

struct UpdateResult {
  VelBelief belief;
  GateOutcomes outcomes;
};

/// Wheel channel i measures hub_long_i / r_eff with variance
/// sigma_wheel^2 + (slip_gamma * |ax_est|)^2. `previous` enables the
/// repeated-value check.
UpdateResult update_wheels(const VelBelief& b, const WheelSpeeds& meas, double ax_est, const SensorHealth& health,
                           const VelestParams& params, const VehicleParams& vehicle,
                           const WheelSpeeds* previous = nullptr);
UpdateResult update_gss(const VelBelief& b, const GssSample& meas, const SensorHealth& health,
                        const VelestParams& params, const GssSample* previous = nullptr);

/// One step of the binary Bayes filter on the failure hypothesis.
ChannelHealth update_failure_belief(ChannelHealth h, bool gate_failed, const FailureBeliefParams& params);

// Measurement queue ---------------------------------------------------------------

using VelMeasurement = std::variant<ImuSample, WheelSpeeds, GssSample>;

double timestamp_of(const VelMeasurement& m);

/// Thread-safe reorder buffer. Producers push from any thread; the consumer
/// drains samples older than the reorder window in timestamp order. Samples
/// arriving after their slot was released are dropped and counted.
class MeasurementBuffer {
 public:
  explicit MeasurementBuffer(double window = 0.02) : window_(window) {}

  void push(VelMeasurement m);
  /// Releases all samples with timestamp <= now - window, sorted.
  std::vector<VelMeasurement> drain(double now);
  /// Releases everything.
  std::vector<VelMeasurement> flush();
  std::size_t dropped() const;

 private:
  std::vector<VelMeasurement> release_until(double t);

  mutable std::mutex mutex_;
  double window_;
  std::vector<std::pair<std::size_t, VelMeasurement>> pending_;  // (arrival sequence, sample)
  std::optional<double> released_until_;
  std::size_t dropped_ = 0;
  std::size_t sequence_ = 0;
};

// Estimator ---------------------------------------------------------------------

/// Single-owner filter state: bias correction, predict-to-timestamp,
/// gated updates and per-channel failure tracking.
class VelocityEstimator {
 public:
  VelocityEstimator(const VelestParams& params, const VehicleParams& vehicle, const VelBelief& initial);

  void process(const ImuSample& s);
  void process(const WheelSpeeds& s);
  void process(const GssSample& s);
  void process(const VelMeasurement& m);

  const VelBelief& belief() const { return belief_; }
  /// Belief handed to pose integration. The tracked yaw rate trails the gyro
  /// by tau_r, which over a lap adds up to a heading error of tau_r times the
  /// total turn; the published yaw rate is the lead-compensated
  /// r + tau_r * dr/dt, i.e. the bias-corrected gyro.
  VelBelief published() const;
  const SensorHealth& health() const { return health_; }
  const GateOutcomes& last_outcomes() const { return outcomes_; }
  const VelestParams& params() const { return params_; }
  std::size_t stale_samples() const { return stale_; }

 private:
  void predict_to(double t);
  void apply_outcomes(const GateOutcomes& outcomes);

  VelestParams params_;
  VehicleParams vehicle_;
  VelBelief belief_;
  SensorHealth health_;
  GateOutcomes outcomes_{};
  Vec3 imu_ = Vec3::Zero();  // latest bias-corrected sample
  std::optional<WheelSpeeds> last_wheels_;
  std::optional<GssSample> last_gss_;
  std::size_t stale_ = 0;
};

/// Initial belief at the given velocity with the configured initial sigmas.
VelBelief initial_belief(const VelocityState& v, double t, const VelestParams& params);

}  // namespace conestack
