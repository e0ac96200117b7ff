#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "conestack/coneslam.hpp"
#include "conestack/failures.hpp"
#include "conestack/json_io.hpp"
#include "conestack/path_follower.hpp"
#include "conestack/sensors.hpp"
#include "conestack/track.hpp"
#include "conestack/velest.hpp"

namespace conestack {

/// Stream rates in Hz. Every rate must divide the plant rate so that each
/// stream lands on plant steps.
struct StreamRates {
  double plant = 200.0;
  double truth = 100.0;
  double imu = 100.0;
  double wheels = 100.0;
  double gss = 100.0;
  double lidar = 10.0;
  double camera = 10.0;
  double camera_phase = 0.05;  // s, camera frames lag the LiDAR by this much
  double vel_est = 100.0;

  bool operator==(const StreamRates&) const = default;
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  double duration = 60.0;  // s
  TrackParams track;
  SpeedProfile speed;
  SensorSuiteParams sensors;
  StreamRates rates;
  FailureScript failures;
  VelestParams velest;
  SlamParams slam;
};

/// Raised for an invalid document; what() lists every offending key.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// Missing keys keep their defaults; unknown keys, wrong types and values
/// outside the documented ranges are collected and thrown as ConfigError.
ScenarioConfig config_from_json(const Json& j);
ScenarioConfig parse_config(const std::string& text);
ScenarioConfig load_config(const std::string& path);

/// Full document, every key present.
Json to_json(const ScenarioConfig& cfg);

/// Range and cross-field checks; returns the problems found.
std::vector<std::string> validate(const ScenarioConfig& cfg);

/// Number of plant steps per sample of a stream running at `rate`.
int steps_per_sample(const StreamRates& rates, double rate);

/// Seeds of the independent random streams derived from the scenario seed.
/// The track seed is the scenario seed itself, so `gen-track --seed s`
/// reproduces the track of a scenario with seed s.
std::uint64_t track_seed(std::uint64_t seed);
std::uint64_t sensor_seed(std::uint64_t seed);
std::uint64_t slam_seed(std::uint64_t seed);

}  // namespace conestack
