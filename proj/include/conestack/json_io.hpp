#pragma once

#include <string>

#include <json.hpp>

#include "conestack/failures.hpp"
#include "conestack/track.hpp"

namespace conestack {

using Json = nlohmann::ordered_json;

/// Compact serialization with every double written as %.17g, so that
/// parsing the text gives back the same bits. Throws std::invalid_argument
/// on a non-finite number.
std::string dump_exact(const Json& j);

Json to_json(const Pose2D& p);
Pose2D pose_from_json(const Json& j);

Json to_json(const TrackSpec& track);
TrackSpec track_from_json(const Json& j);

Json to_json(const FailureEvent& e);
FailureEvent failure_event_from_json(const Json& j);
Json to_json(const FailureScript& script);
FailureScript failure_script_from_json(const Json& j);

/// Ground truth handed to evaluation: the track and the injected faults.
struct TruthDoc {
  TrackSpec track;
  FailureScript failures;
};

Json to_json(const TruthDoc& truth);
TruthDoc truth_from_json(const Json& j);

/// Whole-file helpers; throw std::runtime_error naming the path.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace conestack
