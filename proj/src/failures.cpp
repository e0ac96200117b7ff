#include "conestack/failures.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace conestack {

namespace {
constexpr std::array<std::string_view, 8> kSensorNames = {"wheel0", "wheel1", "wheel2", "wheel3",
                                                          "imu",    "gss",    "lidar",  "camera"};
constexpr std::array<std::string_view, 4> kModeNames = {"STUCK", "OFFSET", "DROPOUT", "NOISE_BURST"};

double burst_sigma(double base, double magnitude) {
  return base * std::sqrt(std::max(0.0, magnitude * magnitude - 1.0));
}
}  // namespace

std::string_view to_string(SensorId id) { return kSensorNames[static_cast<std::size_t>(id)]; }

SensorId sensor_id_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kSensorNames.size(); ++i)
    if (kSensorNames[i] == s) return static_cast<SensorId>(i);
  throw std::invalid_argument("unknown sensor_id '" + std::string(s) + "'");
}

std::string_view to_string(FailureMode m) { return kModeNames[static_cast<std::size_t>(m)]; }

FailureMode failure_mode_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kModeNames.size(); ++i)
    if (kModeNames[i] == s) return static_cast<FailureMode>(i);
  throw std::invalid_argument("unknown failure mode '" + std::string(s) + "'");
}

void validate_failure_script(const FailureScript& script) {
  std::map<SensorId, double> last_end;
  for (const auto& e : script) {
    const auto sid = static_cast<int>(e.sensor);
    if (sid < 0 || sid >= static_cast<int>(kSensorNames.size()))
      throw std::invalid_argument("failure script: invalid sensor_id");
    if (!(e.t_start >= 0.0 && e.t_end > e.t_start))
      throw std::invalid_argument("failure script: interval on " + std::string(to_string(e.sensor)) +
                                  " must satisfy 0 <= t_start < t_end");
    if ((e.sensor == SensorId::kLidar || e.sensor == SensorId::kCamera) && e.mode != FailureMode::kDropout)
      throw std::invalid_argument("failure script: " + std::string(to_string(e.sensor)) + " supports DROPOUT only");
    if (e.mode == FailureMode::kNoiseBurst && !(e.magnitude >= 1.0))
      throw std::invalid_argument("failure script: NOISE_BURST magnitude must be >= 1");
    auto it = last_end.find(e.sensor);
    if (it != last_end.end() && e.t_start < it->second)
      throw std::invalid_argument("failure script: intervals on " + std::string(to_string(e.sensor)) +
                                  " overlap or are out of order");
    last_end[e.sensor] = e.t_end;
  }
}

FailureInjector::FailureInjector(FailureScript script, const SensorSuiteParams& noise)
    : script_(std::move(script)), noise_(noise) {
  validate_failure_script(script_);
}

const FailureEvent* FailureInjector::active(SensorId id, double t) const {
  for (const auto& e : script_)
    if (e.sensor == id && t >= e.t_start && t < e.t_end) return &e;
  return nullptr;
}

void FailureInjector::apply(WheelSpeeds& w, Rng& rng) {
  for (int i = 0; i < 4; ++i) {
    const FailureEvent* e = active(wheel_sensor(i), w.timestamp);
    if (e == nullptr) {
      if (w.valid[i]) last_wheel_[i] = w.omegas[i];
      continue;
    }
    switch (e->mode) {
      case FailureMode::kStuck:
        if (last_wheel_[i]) w.omegas[i] = *last_wheel_[i];
        else last_wheel_[i] = w.omegas[i];
        break;
      case FailureMode::kOffset:
        w.omegas[i] += e->magnitude;
        break;
      case FailureMode::kDropout:
        w.valid[i] = false;
        break;
      case FailureMode::kNoiseBurst:
        w.omegas[i] += burst_sigma(noise_.wheels.sigma, e->magnitude) * rng.normal();
        break;
    }
  }
}

bool FailureInjector::apply(ImuSample& s, Rng& rng) {
  const FailureEvent* e = active(SensorId::kImu, s.timestamp);
  if (e == nullptr) {
    last_imu_ = s;
    return true;
  }
  switch (e->mode) {
    case FailureMode::kStuck:
      if (last_imu_) {
        const double t = s.timestamp;
        s = *last_imu_;
        s.timestamp = t;
      } else {
        last_imu_ = s;
      }
      break;
    case FailureMode::kOffset:
      s.ax += e->magnitude;
      s.ay += e->magnitude;
      s.gz += e->magnitude;
      break;
    case FailureMode::kDropout:
      return false;
    case FailureMode::kNoiseBurst:
      s.ax += burst_sigma(noise_.imu.sigma_accel, e->magnitude) * rng.normal();
      s.ay += burst_sigma(noise_.imu.sigma_accel, e->magnitude) * rng.normal();
      s.gz += burst_sigma(noise_.imu.sigma_gyro, e->magnitude) * rng.normal();
      break;
  }
  return true;
}

bool FailureInjector::apply(GssSample& s, Rng& rng) {
  const FailureEvent* e = active(SensorId::kGss, s.timestamp);
  if (e == nullptr) {
    last_gss_ = s;
    return true;
  }
  switch (e->mode) {
    case FailureMode::kStuck:
      if (last_gss_) {
        const double t = s.timestamp;
        s = *last_gss_;
        s.timestamp = t;
      } else {
        last_gss_ = s;
      }
      break;
    case FailureMode::kOffset:
      s.vx += e->magnitude;
      s.vy += e->magnitude;
      break;
    case FailureMode::kDropout:
      return false;
    case FailureMode::kNoiseBurst:
      s.vx += burst_sigma(noise_.gss.sigma, e->magnitude) * rng.normal();
      s.vy += burst_sigma(noise_.gss.sigma, e->magnitude) * rng.normal();
      break;
  }
  return true;
}

bool FailureInjector::apply(ConeFrame& frame) {
  const SensorId id = frame.modality == Modality::kLidar ? SensorId::kLidar : SensorId::kCamera;
  return active(id, frame.timestamp) == nullptr;
}

namespace {
template <typename Sample>
std::vector<Sample> filter_stream(std::vector<Sample> stream, FailureInjector& injector, Rng& rng) {
  std::vector<Sample> out;
  out.reserve(stream.size());
  for (auto& s : stream)
    if (injector.apply(s, rng)) out.push_back(s);
  return out;
}
}  // namespace

std::vector<WheelSpeeds> apply_failures(std::vector<WheelSpeeds> stream, const FailureScript& script,
                                        const SensorSuiteParams& noise, Rng& rng) {
  FailureInjector injector(script, noise);
  for (auto& w : stream) injector.apply(w, rng);
  return stream;
}

std::vector<ImuSample> apply_failures(std::vector<ImuSample> stream, const FailureScript& script,
                                      const SensorSuiteParams& noise, Rng& rng) {
  FailureInjector injector(script, noise);
  return filter_stream(std::move(stream), injector, rng);
}

std::vector<GssSample> apply_failures(std::vector<GssSample> stream, const FailureScript& script,
                                      const SensorSuiteParams& noise, Rng& rng) {
  FailureInjector injector(script, noise);
  return filter_stream(std::move(stream), injector, rng);
}

}  // namespace conestack
