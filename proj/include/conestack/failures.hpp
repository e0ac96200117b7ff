#pragma once

#include <array>
#include <map>
#include <optional>
#include <string_view>
#include <vector>

#include "conestack/rng.hpp"
#include "conestack/sensors.hpp"

namespace conestack {

enum class SensorId { kWheel0 = 0, kWheel1, kWheel2, kWheel3, kImu, kGss, kLidar, kCamera };

std::string_view to_string(SensorId id);
/// Throws std::invalid_argument for an unknown id.
SensorId sensor_id_from_string(std::string_view s);
inline SensorId wheel_sensor(int i) { return static_cast<SensorId>(i); }

enum class FailureMode { kStuck, kOffset, kDropout, kNoiseBurst };

std::string_view to_string(FailureMode m);
FailureMode failure_mode_from_string(std::string_view s);

struct FailureEvent {
  SensorId sensor = SensorId::kWheel0;
  FailureMode mode = FailureMode::kStuck;
  double t_start = 0.0;
  double t_end = 0.0;
  double magnitude = 0.0;  // OFFSET: added value; NOISE_BURST: noise multiplier
  bool operator==(const FailureEvent&) const = default;
};

using FailureScript = std::vector<FailureEvent>;

/// Throws std::invalid_argument unless intervals are well formed, sorted and
/// non-overlapping per sensor, and each mode is supported by its sensor
/// (cone modalities accept DROPOUT only).
void validate_failure_script(const FailureScript& script);

/// Applies a FailureScript to sensor samples as they are produced.
///
/// STUCK holds the last value emitted before the interval, OFFSET adds the
/// magnitude to every component, DROPOUT removes the sample (or marks the
/// wheel channel invalid), NOISE_BURST scales the channel's white noise by
/// the magnitude by adding independent noise of std sigma*sqrt(m^2 - 1).
/// Intervals are half-open [t_start, t_end).
class FailureInjector {
 public:
  FailureInjector(FailureScript script, const SensorSuiteParams& noise);

  void apply(WheelSpeeds& w, Rng& rng);
  /// Returns false when the sample is dropped.
  bool apply(ImuSample& s, Rng& rng);
  bool apply(GssSample& s, Rng& rng);
  bool apply(ConeFrame& frame);

  const FailureScript& script() const { return script_; }

 private:
  const FailureEvent* active(SensorId id, double t) const;

  FailureScript script_;
  SensorSuiteParams noise_;
  std::array<std::optional<double>, 4> last_wheel_;
  std::optional<ImuSample> last_imu_;
  std::optional<GssSample> last_gss_;
};

std::vector<WheelSpeeds> apply_failures(std::vector<WheelSpeeds> stream, const FailureScript& script,
                                        const SensorSuiteParams& noise, Rng& rng);
std::vector<ImuSample> apply_failures(std::vector<ImuSample> stream, const FailureScript& script,
                                      const SensorSuiteParams& noise, Rng& rng);
std::vector<GssSample> apply_failures(std::vector<GssSample> stream, const FailureScript& script,
                                      const SensorSuiteParams& noise, Rng& rng);

}  // namespace conestack
