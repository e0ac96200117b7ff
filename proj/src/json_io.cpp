#include "conestack/json_io.hpp"

#include <cmath>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace conestack {

namespace {

void dump_into(const Json& j, std::string& out) {
  switch (j.type()) {
    case Json::value_t::object: {
      out += '{';
      bool first = true;
      for (const auto& [key, value] : j.items()) {
        if (!first) out += ',';
        first = false;
        out += Json(key).dump();
        out += ':';
        dump_into(value, out);
      }
      out += '}';
      break;
    }
    case Json::value_t::array: {
      out += '[';
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ',';
        dump_into(j[i], out);
      }
      out += ']';
      break;
    }
    case Json::value_t::number_float: {
      const double v = j.get<double>();
      if (!std::isfinite(v)) throw std::invalid_argument("dump_exact: non-finite number");
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      // "-0" would parse back as the integer 0 and lose its sign.
      out += v == 0.0 && std::signbit(v) ? "-0.0" : buf;
      break;
    }
    default:
      out += j.dump();
  }
}

Json vec2_json(const Vec2& v) { return Json::array({v.x(), v.y()}); }

Vec2 vec2_from(const Json& j) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

Json cones_json(const std::vector<Cone>& cones) {
  Json out = Json::array();
  for (const auto& c : cones)
    out.push_back(Json{{"x", c.position.x()}, {"y", c.position.y()}, {"color", std::string(to_string(c.color))}});
  return out;
}

std::vector<Cone> cones_from(const Json& j) {
  std::vector<Cone> out;
  for (const auto& c : j) {
    out.push_back({{c.at("x").get<double>(), c.at("y").get<double>()},
                   cone_color_from_string(c.at("color").get<std::string>())});
  }
  return out;
}

}  // namespace

std::string dump_exact(const Json& j) {
  std::string out;
  dump_into(j, out);
  return out;
}

Json to_json(const Pose2D& p) { return Json{{"x", p.x()}, {"y", p.y()}, {"theta", p.theta()}}; }

Pose2D pose_from_json(const Json& j) {
  return {j.at("x").get<double>(), j.at("y").get<double>(), j.at("theta").get<double>()};
}

Json to_json(const TrackSpec& track) {
  Json centerline = Json::array();
  for (const auto& p : track.centerline) centerline.push_back(vec2_json(p));
  return Json{{"track_width", track.track_width},
              {"start_pose", to_json(track.start_pose)},
              {"centerline", centerline},
              {"left_cones", cones_json(track.left_cones)},
              {"right_cones", cones_json(track.right_cones)}};
}

TrackSpec track_from_json(const Json& j) {
  TrackSpec t;
  t.track_width = j.at("track_width").get<double>();
  t.start_pose = pose_from_json(j.at("start_pose"));
  for (const auto& p : j.at("centerline")) t.centerline.push_back(vec2_from(p));
  t.left_cones = cones_from(j.at("left_cones"));
  t.right_cones = cones_from(j.at("right_cones"));
  return t;
}

Json to_json(const FailureEvent& e) {
  return Json{{"sensor", std::string(to_string(e.sensor))},
              {"mode", std::string(to_string(e.mode))},
              {"t_start", e.t_start},
              {"t_end", e.t_end},
              {"magnitude", e.magnitude}};
}

FailureEvent failure_event_from_json(const Json& j) {
  static const std::vector<std::string> kKeys = {"sensor", "mode", "t_start", "t_end", "magnitude"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end())
      throw std::invalid_argument("unknown failure key '" + key + "'");
  }
  FailureEvent e;
  e.sensor = sensor_id_from_string(j.at("sensor").get<std::string>());
  e.mode = failure_mode_from_string(j.at("mode").get<std::string>());
  e.t_start = j.at("t_start").get<double>();
  e.t_end = j.at("t_end").get<double>();
  e.magnitude = j.value("magnitude", 0.0);
  return e;
}

Json to_json(const FailureScript& script) {
  Json out = Json::array();
  for (const auto& e : script) out.push_back(to_json(e));
  return out;
}

FailureScript failure_script_from_json(const Json& j) {
  if (!j.is_array()) throw std::invalid_argument("failure script must be an array");
  FailureScript out;
  for (const auto& e : j) out.push_back(failure_event_from_json(e));
  return out;
}

Json to_json(const TruthDoc& truth) {
  return Json{{"track", to_json(truth.track)}, {"failures", to_json(truth.failures)}};
}

TruthDoc truth_from_json(const Json& j) {
  TruthDoc t;
  t.track = track_from_json(j.at("track"));
  if (j.contains("failures")) t.failures = failure_script_from_json(j.at("failures"));
  return t;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace conestack
