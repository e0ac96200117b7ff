#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "conestack/coneslam.hpp"
#include "conestack/json_io.hpp"
#include "conestack/sensors.hpp"
#include "conestack/velest.hpp"

namespace conestack {

enum class Stream { kTruth, kLidarObs, kCamObs, kWheels, kImu, kGss, kVelEst, kHealth, kSlamPose, kMap };

inline constexpr std::size_t kNumStreams = 10;

std::string_view to_string(Stream s);
/// Throws std::invalid_argument for an unknown name.
Stream stream_from_string(std::string_view s);

/// Streams written by the estimators; everything else is sensor or truth
/// input and is what `estimate` replays.
bool is_estimator_stream(Stream s);

struct TruthRecord {
  Pose2D pose;
  VelocityState vel;
  bool operator==(const TruthRecord&) const = default;
};

struct ChannelReport {
  SensorId sensor = SensorId::kWheel0;
  HealthStatus status = HealthStatus::kHealthy;
  double fail_belief = 0.0;
  bool operator==(const ChannelReport&) const = default;
};

struct HealthRecord {
  std::vector<ChannelReport> channels;
  bool operator==(const HealthRecord&) const = default;
};

struct SlamPoseRecord {
  Pose2D pose;
  double ess = 0.0;
  int n_particles = 0;
  SlamMode mode = SlamMode::kMapping;
  bool operator==(const SlamPoseRecord&) const = default;
};

enum class MapReason { kLap, kFinal };

struct MapRecord {
  MapReason reason = MapReason::kFinal;
  int laps = 0;
  ConeMap cones;
  bool operator==(const MapRecord&) const = default;
};

using Payload = std::variant<TruthRecord, ConeFrame, WheelSpeeds, ImuSample, GssSample, VelBelief, HealthRecord,
                             SlamPoseRecord, MapRecord>;

/// One timestamped record. Payloads that carry their own timestamp keep it
/// equal to t; the parser restores it from t.
struct LogEvent {
  double t = 0.0;
  Stream stream = Stream::kTruth;
  Payload payload;
  bool operator==(const LogEvent&) const = default;
};

using EventLog = std::vector<LogEvent>;

LogEvent make_event(double t, TruthRecord r);
LogEvent make_event(ConeFrame frame);
LogEvent make_event(WheelSpeeds w);
LogEvent make_event(ImuSample s);
LogEvent make_event(GssSample s);
LogEvent make_event(VelBelief b);
LogEvent make_event(double t, HealthRecord r);
LogEvent make_event(double t, SlamPoseRecord r);
LogEvent make_event(double t, MapRecord r);

Json to_json(const LogEvent& e);
/// Throws std::invalid_argument on a malformed event.
LogEvent event_from_json(const Json& j);

/// One line, no trailing newline.
std::string serialize_event(const LogEvent& e);
LogEvent parse_event(std::string_view line);

std::string serialize_log(const EventLog& log);
/// Blank lines are skipped; errors name the line number.
EventLog parse_log(std::string_view text);

EventLog read_log(const std::string& path);
void write_log(const std::string& path, const EventLog& log);

/// Checks t >= 0 and per-stream time order; returns the problems found.
std::vector<std::string> check_log(const EventLog& log);

}  // namespace conestack
