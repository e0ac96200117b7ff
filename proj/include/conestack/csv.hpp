#pragma once

#include <string>

#include "conestack/eval.hpp"
#include "conestack/log.hpp"

namespace conestack {

/// Long format with a header row: `metric,value`, one row per field. Per
/// fault rows are keyed failures.fault<i>.*; an undetected fault has the
/// latency value `undetected`.
std::string report_csv(const EvalReport& report);

/// One row per event of `stream` (one row per cone for cone frames and maps,
/// one per channel for HEALTH) under a stream-specific header.
std::string export_csv(const EventLog& log, Stream stream);

}  // namespace conestack
