#include "conestack/log.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace conestack {

namespace {

constexpr std::array<std::string_view, kNumStreams> kStreamNames = {
    "TRUTH", "LIDAR_OBS", "CAM_OBS", "WHEELS", "IMU", "GSS", "VEL_EST", "HEALTH", "SLAM_POSE", "MAP"};

template <class M>
Json matrix_json(const M& m) {
  Json out = Json::array();
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  return out;
}

template <class M>
M matrix_from(const Json& j) {
  M m;
  if (!j.is_array() || j.size() != static_cast<std::size_t>(m.size()))
    throw std::invalid_argument("expected " + std::to_string(m.size()) + " matrix entries");
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) m(r, c) = j[static_cast<std::size_t>(r * m.cols() + c)].get<double>();
  return m;
}

template <std::size_t N>
Json array_json(const std::array<double, N>& a) {
  Json out = Json::array();
  for (double v : a) out.push_back(v);
  return out;
}

template <std::size_t N>
std::array<double, N> array_from(const Json& j) {
  if (!j.is_array() || j.size() != N) throw std::invalid_argument("expected " + std::to_string(N) + " numbers");
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = j[i].get<double>();
  return out;
}

std::string_view mode_name(SlamMode m) { return m == SlamMode::kMapping ? "MAPPING" : "LOCALIZATION"; }

SlamMode mode_from(const std::string& s) {
  if (s == "MAPPING") return SlamMode::kMapping;
  if (s == "LOCALIZATION") return SlamMode::kLocalization;
  throw std::invalid_argument("unknown slam mode '" + s + "'");
}

std::string_view reason_name(MapReason r) { return r == MapReason::kLap ? "lap" : "final"; }

MapReason reason_from(const std::string& s) {
  if (s == "lap") return MapReason::kLap;
  if (s == "final") return MapReason::kFinal;
  throw std::invalid_argument("unknown map reason '" + s + "'");
}

Json payload_json(const TruthRecord& r) {
  return Json{{"x", r.pose.x()},   {"y", r.pose.y()},   {"theta", r.pose.theta()},
              {"vx", r.vel.vx},    {"vy", r.vel.vy},    {"r", r.vel.r}};
}

Json payload_json(const ConeFrame& f) {
  Json cones = Json::array();
  for (const auto& c : f.cones) {
    cones.push_back(Json{{"x", c.pos_body.x()},
                         {"y", c.pos_body.y()},
                         {"cov", matrix_json(c.cov)},
                         {"color", array_json(c.color_probs)}});
  }
  return Json{{"cones", cones}};
}

Json payload_json(const WheelSpeeds& w) {
  Json valid = Json::array();
  for (bool v : w.valid) valid.push_back(v);
  return Json{{"omega", array_json(w.omegas)}, {"valid", valid}, {"steering", w.steering}};
}

Json payload_json(const ImuSample& s) { return Json{{"ax", s.ax}, {"ay", s.ay}, {"gz", s.gz}}; }

Json payload_json(const GssSample& s) { return Json{{"vx", s.vx}, {"vy", s.vy}}; }

Json payload_json(const VelBelief& b) {
  return Json{{"vx", b.mean.vx}, {"vy", b.mean.vy}, {"r", b.mean.r}, {"cov", matrix_json(b.cov)}};
}

Json payload_json(const HealthRecord& h) {
  Json channels = Json::array();
  for (const auto& c : h.channels) {
    channels.push_back(Json{{"sensor", std::string(to_string(c.sensor))},
                            {"status", std::string(to_string(c.status))},
                            {"fail_belief", c.fail_belief}});
  }
  return Json{{"channels", channels}};
}

Json payload_json(const SlamPoseRecord& r) {
  return Json{{"x", r.pose.x()},
              {"y", r.pose.y()},
              {"theta", r.pose.theta()},
              {"ess", r.ess},
              {"n_particles", r.n_particles},
              {"mode", std::string(mode_name(r.mode))}};
}

Json payload_json(const MapRecord& m) {
  Json cones = Json::array();
  for (const auto& c : m.cones) {
    cones.push_back(Json{{"x", c.position.x()},
                         {"y", c.position.y()},
                         {"color", std::string(to_string(c.color))},
                         {"confidence", c.confidence},
                         {"cov", matrix_json(c.cov)}});
  }
  return Json{{"reason", std::string(reason_name(m.reason))}, {"laps", m.laps}, {"cones", cones}};
}

double num(const Json& p, const char* key) { return p.at(key).get<double>(); }

Payload payload_from(Stream s, double t, const Json& p) {
  switch (s) {
    case Stream::kTruth:
      return TruthRecord{{num(p, "x"), num(p, "y"), num(p, "theta")}, {num(p, "vx"), num(p, "vy"), num(p, "r")}};
    case Stream::kLidarObs:
    case Stream::kCamObs: {
      ConeFrame f;
      f.timestamp = t;
      f.modality = s == Stream::kLidarObs ? Modality::kLidar : Modality::kCamera;
      for (const auto& c : p.at("cones")) {
        ConeObservation o;
        o.pos_body = {num(c, "x"), num(c, "y")};
        o.cov = matrix_from<Cov2>(c.at("cov"));
        o.color_probs = array_from<kNumColors>(c.at("color"));
        o.modality = f.modality;
        o.timestamp = t;
        f.cones.push_back(o);
      }
      return f;
    }
    case Stream::kWheels: {
      WheelSpeeds w;
      w.timestamp = t;
      w.omegas = array_from<4>(p.at("omega"));
      const auto& valid = p.at("valid");
      if (!valid.is_array() || valid.size() != 4) throw std::invalid_argument("expected 4 validity flags");
      for (std::size_t i = 0; i < 4; ++i) w.valid[i] = valid[i].get<bool>();
      w.steering = num(p, "steering");
      return w;
    }
    case Stream::kImu:
      return ImuSample{t, num(p, "ax"), num(p, "ay"), num(p, "gz")};
    case Stream::kGss:
      return GssSample{t, num(p, "vx"), num(p, "vy")};
    case Stream::kVelEst: {
      VelBelief b;
      b.mean = {num(p, "vx"), num(p, "vy"), num(p, "r")};
      b.cov = matrix_from<Cov3>(p.at("cov"));
      b.timestamp = t;
      return b;
    }
    case Stream::kHealth: {
      HealthRecord h;
      for (const auto& c : p.at("channels")) {
        h.channels.push_back({sensor_id_from_string(c.at("sensor").get<std::string>()),
                              health_status_from_string(c.at("status").get<std::string>()), num(c, "fail_belief")});
      }
      return h;
    }
    case Stream::kSlamPose:
      return SlamPoseRecord{{num(p, "x"), num(p, "y"), num(p, "theta")},
                            num(p, "ess"),
                            p.at("n_particles").get<int>(),
                            mode_from(p.at("mode").get<std::string>())};
    case Stream::kMap: {
      MapRecord m;
      m.reason = reason_from(p.at("reason").get<std::string>());
      m.laps = p.at("laps").get<int>();
      for (const auto& c : p.at("cones")) {
        MapCone cone;
        cone.position = {num(c, "x"), num(c, "y")};
        cone.color = cone_color_from_string(c.at("color").get<std::string>());
        cone.confidence = num(c, "confidence");
        cone.cov = matrix_from<Cov2>(c.at("cov"));
        m.cones.push_back(cone);
      }
      return m;
    }
  }
  throw std::invalid_argument("unknown stream");
}

bool payload_matches(Stream s, const Payload& p) {
  switch (s) {
    case Stream::kTruth:
      return std::holds_alternative<TruthRecord>(p);
    case Stream::kLidarObs:
      return std::holds_alternative<ConeFrame>(p) && std::get<ConeFrame>(p).modality == Modality::kLidar;
    case Stream::kCamObs:
      return std::holds_alternative<ConeFrame>(p) && std::get<ConeFrame>(p).modality == Modality::kCamera;
    case Stream::kWheels:
      return std::holds_alternative<WheelSpeeds>(p);
    case Stream::kImu:
      return std::holds_alternative<ImuSample>(p);
    case Stream::kGss:
      return std::holds_alternative<GssSample>(p);
    case Stream::kVelEst:
      return std::holds_alternative<VelBelief>(p);
    case Stream::kHealth:
      return std::holds_alternative<HealthRecord>(p);
    case Stream::kSlamPose:
      return std::holds_alternative<SlamPoseRecord>(p);
    case Stream::kMap:
      return std::holds_alternative<MapRecord>(p);
  }
  return false;
}

}  // namespace

std::string_view to_string(Stream s) { return kStreamNames[static_cast<std::size_t>(s)]; }

Stream stream_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kStreamNames.size(); ++i)
    if (kStreamNames[i] == s) return static_cast<Stream>(i);
  throw std::invalid_argument("unknown stream '" + std::string(s) + "'");
}

bool is_estimator_stream(Stream s) {
  return s == Stream::kVelEst || s == Stream::kHealth || s == Stream::kSlamPose || s == Stream::kMap;
}

LogEvent make_event(double t, TruthRecord r) { return {t, Stream::kTruth, r}; }
LogEvent make_event(ConeFrame frame) {
  const double t = frame.timestamp;
  const Stream s = frame.modality == Modality::kLidar ? Stream::kLidarObs : Stream::kCamObs;
  for (auto& c : frame.cones) {
    c.timestamp = t;
    c.modality = frame.modality;
  }
  return {t, s, std::move(frame)};
}
LogEvent make_event(WheelSpeeds w) { return {w.timestamp, Stream::kWheels, w}; }
LogEvent make_event(ImuSample s) { return {s.timestamp, Stream::kImu, s}; }
LogEvent make_event(GssSample s) { return {s.timestamp, Stream::kGss, s}; }
LogEvent make_event(VelBelief b) { return {b.timestamp, Stream::kVelEst, b}; }
LogEvent make_event(double t, HealthRecord r) { return {t, Stream::kHealth, std::move(r)}; }
LogEvent make_event(double t, SlamPoseRecord r) { return {t, Stream::kSlamPose, r}; }
LogEvent make_event(double t, MapRecord r) { return {t, Stream::kMap, std::move(r)}; }

Json to_json(const LogEvent& e) {
  if (!payload_matches(e.stream, e.payload))
    throw std::invalid_argument("payload does not match stream " + std::string(to_string(e.stream)));
  return Json{{"t", e.t},
              {"stream", std::string(to_string(e.stream))},
              {"payload", std::visit([](const auto& p) { return payload_json(p); }, e.payload)}};
}

LogEvent event_from_json(const Json& j) {
  if (!j.is_object() || j.size() != 3 || !j.contains("t") || !j.contains("stream") || !j.contains("payload"))
    throw std::invalid_argument("event must have exactly the keys t, stream, payload");
  LogEvent e;
  e.t = j.at("t").get<double>();
  if (!(std::isfinite(e.t) && e.t >= 0.0)) throw std::invalid_argument("event time must be finite and >= 0");
  e.stream = stream_from_string(j.at("stream").get<std::string>());
  try {
    e.payload = payload_from(e.stream, e.t, j.at("payload"));
  } catch (const Json::exception& ex) {
    throw std::invalid_argument(std::string(to_string(e.stream)) + " payload: " + ex.what());
  }
  return e;
}

std::string serialize_event(const LogEvent& e) { return dump_exact(to_json(e)); }

LogEvent parse_event(std::string_view line) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const Json::parse_error& ex) {
    throw std::invalid_argument(ex.what());
  }
  return event_from_json(j);
}

std::string serialize_log(const EventLog& log) {
  std::string out;
  for (const auto& e : log) {
    out += serialize_event(e);
    out += '\n';
  }
  return out;
}

EventLog parse_log(std::string_view text) {
  EventLog log;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    try {
      log.push_back(parse_event(line));
    } catch (const std::exception& ex) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return log;
}

EventLog read_log(const std::string& path) { return parse_log(read_text_file(path)); }

void write_log(const std::string& path, const EventLog& log) { write_text_file(path, serialize_log(log)); }

std::vector<std::string> check_log(const EventLog& log) {
  std::vector<std::string> problems;
  std::array<double, kNumStreams> last;
  last.fill(-1.0);
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& e = log[i];
    if (!(e.t >= 0.0)) problems.push_back("event " + std::to_string(i) + ": negative time");
    auto& prev = last[static_cast<std::size_t>(e.stream)];
    if (e.t < prev)
      problems.push_back("event " + std::to_string(i) + ": " + std::string(to_string(e.stream)) + " goes back in time");
    prev = e.t;
    if (!payload_matches(e.stream, e.payload)) problems.push_back("event " + std::to_string(i) + ": wrong payload");
  }
  return problems;
}

}  // namespace conestack
