#include "conestack/config.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

namespace conestack {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string join_problems(const std::vector<std::string>& problems) {
  std::string out = "invalid config:";
  for (const auto& p : problems) out += "\n  " + p;
  return out;
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

// The schema is written once per section as a visitor over the fields; the
// reader and the writer below walk the same description.

class Reader {
 public:
  Reader(const Json& node, std::string path, std::vector<std::string>& problems)
      : node_(node), path_(std::move(path)), problems_(problems) {
    if (!node_.is_object()) problem("", "expected an object");
  }

  ~Reader() {
    if (!node_.is_object()) return;
    for (const auto& [key, value] : node_.items())
      if (!known_.contains(key)) problem(key, "unknown key");
  }

  Reader(const Reader&) = delete;
  Reader& operator=(const Reader&) = delete;

  void number(const char* key, double& out, double lo, double hi) {
    const Json* v = find(key);
    if (!v) return;
    if (!v->is_number()) return problem(key, "expected a number");
    const double x = v->get<double>();
    if (!(x >= lo && x <= hi)) return problem(key, fmt(x) + " outside [" + fmt(lo) + ", " + fmt(hi) + "]");
    out = x;
  }

  void integer(const char* key, int& out, int lo, int hi) {
    const Json* v = find(key);
    if (!v) return;
    if (!v->is_number_integer()) return problem(key, "expected an integer");
    const auto x = v->get<long long>();
    if (x < lo || x > hi)
      return problem(key, std::to_string(x) + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    out = static_cast<int>(x);
  }

  void unsigned64(const char* key, std::uint64_t& out) {
    const Json* v = find(key);
    if (!v) return;
    if (!v->is_number_unsigned()) return problem(key, "expected a non-negative integer");
    out = v->get<std::uint64_t>();
  }

  void boolean(const char* key, bool& out) {
    const Json* v = find(key);
    if (!v) return;
    if (!v->is_boolean()) return problem(key, "expected true or false");
    out = v->get<bool>();
  }

  void numbers(const char* key, double* out, std::size_t n, double lo, double hi) {
    const Json* v = find(key);
    if (!v) return;
    if (!v->is_array() || v->size() != n) return problem(key, "expected an array of " + std::to_string(n) + " numbers");
    std::vector<double> tmp(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!(*v)[i].is_number()) return problem(key, "expected an array of " + std::to_string(n) + " numbers");
      tmp[i] = (*v)[i].get<double>();
      if (!(tmp[i] >= lo && tmp[i] <= hi))
        return problem(key, "element " + fmt(tmp[i]) + " outside [" + fmt(lo) + ", " + fmt(hi) + "]");
    }
    std::copy(tmp.begin(), tmp.end(), out);
  }

  template <class Fn>
  void section(const char* key, Fn&& fn) {
    const Json* v = find(key);
    if (!v) return;
    Reader sub(*v, qualified(key), problems_);
    if (v->is_object()) fn(sub);
  }

  void failures(const char* key, FailureScript& out) {
    const Json* v = find(key);
    if (!v) return;
    try {
      out = failure_script_from_json(*v);
    } catch (const std::exception& e) {
      problem(key, e.what());
    }
  }

 private:
  const Json* find(const char* key) {
    known_.insert(key);
    if (!node_.is_object()) return nullptr;
    const auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void problem(const std::string& key, const std::string& what) {
    problems_.push_back((key.empty() ? (path_.empty() ? std::string("<root>") : path_) : qualified(key)) + ": " +
                        what);
  }

  const Json& node_;
  std::string path_;
  std::vector<std::string>& problems_;
  std::set<std::string> known_;
};

class Writer {
 public:
  Json& json() { return out_; }

  void number(const char* key, double& v, double, double) { out_[key] = v; }
  void integer(const char* key, int& v, int, int) { out_[key] = v; }
  void unsigned64(const char* key, std::uint64_t& v) { out_[key] = v; }
  void boolean(const char* key, bool& v) { out_[key] = v; }
  void numbers(const char* key, double* v, std::size_t n, double, double) {
    Json arr = Json::array();
    for (std::size_t i = 0; i < n; ++i) arr.push_back(v[i]);
    out_[key] = arr;
  }
  template <class Fn>
  void section(const char* key, Fn&& fn) {
    Writer sub;
    fn(sub);
    out_[key] = sub.out_;
  }
  void failures(const char* key, FailureScript& script) { out_[key] = to_json(script); }

 private:
  Json out_ = Json::object();
};

template <class V>
void visit(V& v, TrackParams& p) {
  v.integer("n_waypoints", p.n_waypoints, 8, 100000);
  v.number("mean_radius", p.mean_radius, 5.0, 1000.0);
  v.number("irregularity", p.irregularity, 0.0, 1.0);
  v.number("track_width", p.track_width, 1.0, 20.0);
  v.number("cone_spacing", p.cone_spacing, 0.5, 5.0);
  v.number("min_width", p.min_width, 0.5, 20.0);
  v.number("max_spacing", p.max_spacing, 0.5, 20.0);
}

template <class V>
void visit(V& v, SpeedProfile& p) {
  v.number("v_min", p.v_min, 0.5, 25.0);
  v.number("v_max", p.v_max, 0.5, 25.0);  // 90 km/h
  v.number("a_lat_design", p.a_lat_design, 0.1, kMaxLateralAccel);
}

template <class V>
void visit(V& v, LidarModelParams& p) {
  v.boolean("enabled", p.enabled);
  v.number("range", p.range, 1.0, 100.0);
  v.number("sigma0", p.sigma0, 0.0, 1.0);
  v.number("sigma_k", p.sigma_k, 0.0, 0.1);
  v.number("color_range", p.color_range, 0.0, 100.0);
  v.number("p_color_floor", p.p_color_floor, 0.0, 1.0);
  v.number("p_color_ceil", p.p_color_ceil, 0.0, 1.0);
  v.number("p_det_near", p.p_det_near, 0.0, 1.0);
  v.number("p_det_far", p.p_det_far, 0.0, 1.0);
  v.number("det_falloff_start", p.det_falloff_start, 0.0, 100.0);
  v.number("fp_rate", p.fp_rate, 0.0, 10.0);
}

template <class V>
void visit(V& v, CameraModelParams& p) {
  v.boolean("enabled", p.enabled);
  v.number("range", p.range, 1.0, 100.0);
  v.number("half_fov", p.half_fov, 0.01, std::numbers::pi);
  v.number("depth_coeff", p.depth_coeff, 0.0, 1.0);
  v.number("tangential0", p.tangential0, 0.0, 1.0);
  v.number("tangential_k", p.tangential_k, 0.0, 0.1);
  v.number("p_color", p.p_color, 0.0, 1.0);
  v.number("p_det", p.p_det, 0.0, 1.0);
  v.number("fp_rate", p.fp_rate, 0.0, 10.0);
}

template <class V>
void visit(V& v, SensorSuiteParams& p) {
  v.section("lidar", [&](V& s) { visit(s, p.lidar); });
  v.section("camera", [&](V& s) { visit(s, p.camera); });
  v.section("wheels", [&](V& s) { s.number("sigma", p.wheels.sigma, 0.0, 10.0); });
  v.section("imu", [&](V& s) {
    s.number("bias_ax", p.imu.bias_ax, -2.0, 2.0);
    s.number("bias_ay", p.imu.bias_ay, -2.0, 2.0);
    s.number("bias_gz", p.imu.bias_gz, -0.5, 0.5);
    s.number("sigma_accel", p.imu.sigma_accel, 0.0, 5.0);
    s.number("sigma_gyro", p.imu.sigma_gyro, 0.0, 1.0);
  });
  v.section("gss", [&](V& s) {
    s.boolean("enabled", p.gss.enabled);
    s.number("sigma", p.gss.sigma, 0.0, 5.0);
  });
}

template <class V>
void visit(V& v, StreamRates& r) {
  v.number("plant", r.plant, 50.0, 10000.0);
  v.number("truth", r.truth, 1.0, 10000.0);
  v.number("imu", r.imu, 1.0, 10000.0);
  v.number("wheels", r.wheels, 1.0, 10000.0);
  v.number("gss", r.gss, 1.0, 10000.0);
  v.number("lidar", r.lidar, 1.0, 100.0);
  v.number("camera", r.camera, 1.0, 100.0);
  v.number("camera_phase", r.camera_phase, 0.0, 1.0);
  v.number("vel_est", r.vel_est, 1.0, 10000.0);
}

template <class V>
void visit(V& v, FailureBeliefParams& p) {
  v.number("p_fail_if_failed", p.p_fail_if_failed, 0.0, 1.0);
  v.number("p_fail_if_healthy", p.p_fail_if_healthy, 0.0, 1.0);
  v.number("leak_to_failure", p.leak_to_failure, 0.0, 1.0);
  v.number("leak_to_recovery", p.leak_to_recovery, 0.0, 1.0);
  v.number("failed_above", p.failed_above, 0.0, 1.0);
  v.number("healthy_below", p.healthy_below, 0.0, 1.0);
  int window = static_cast<int>(p.window);
  v.integer("window", window, 1, 10000);
  p.window = static_cast<std::size_t>(window);
}

template <class V>
void visit(V& v, VelestParams& p) {
  v.number("tau_r", p.tau_r, 1e-3, 10.0);
  v.numbers("q", p.q.data(), 3, 0.0, 100.0);
  v.number("sigma_wheel", p.sigma_wheel, 1e-6, 100.0);
  v.number("slip_gamma", p.slip_gamma, 0.0, 100.0);
  v.number("sigma_gss", p.sigma_gss, 1e-6, 100.0);
  v.number("gate_1dof", p.gate_1dof, 0.0, 1000.0);
  v.number("gate_2dof", p.gate_2dof, 0.0, 1000.0);
  v.number("max_predict_dt", p.max_predict_dt, 1e-4, 0.05);
  v.number("reorder_window", p.reorder_window, 0.0, 1.0);
  v.numbers("imu_bias", p.imu_bias.data(), 3, -2.0, 2.0);
  v.number("sigma_gyro", p.sigma_gyro, 1e-6, 1.0);
  v.numbers("initial_sigma", p.initial_sigma.data(), 3, 1e-6, 100.0);
  v.boolean("reject_repeats", p.reject_repeats);
  v.section("failure", [&](V& s) { visit(s, p.failure); });
}

template <class V>
void visit(V& v, SlamParams& p) {
  v.integer("n_particles", p.n_particles, 1, 100000);
  v.numbers("q_floor", p.q_floor.data(), 3, 0.0, 10.0);
  v.number("max_predict_dt", p.max_predict_dt, 1e-4, 1.0);
  v.number("pose_sigma_xy", p.pose_sigma_xy, 0.0, 10.0);
  v.number("pose_sigma_theta", p.pose_sigma_theta, 0.0, 1.0);
  v.number("gate", p.gate, 0.0, 1000.0);
  v.number("search_radius", p.search_radius, 0.0, 100.0);
  v.number("new_distance", p.new_distance, 0.0, 100.0);
  v.number("p_new", p.p_new, 1e-300, 1.0);
  v.number("p_clutter", p.p_clutter, 1e-300, 1.0);
  v.integer("min_observations", p.min_observations, 1, 100000);
  v.number("max_map_sigma", p.max_map_sigma, 0.0, kInf);
  v.numbers("modality_weight", p.modality_weight.data(), 2, 0.0, 100.0);
  v.number("min_confidence", p.min_confidence, 0.0, 1.0);
  v.number("merge_distance", p.merge_distance, 0.0, 100.0);
  v.number("prune_age", p.prune_age, 0.0, kInf);
  v.number("footprint_radius", p.footprint_radius, 0.0, 1000.0);
  v.number("lap_radius", p.lap_radius, 0.0, 100.0);
  v.number("lap_heading", p.lap_heading, 0.0, std::numbers::pi);
  v.number("lap_departure", p.lap_departure, 0.0, 10000.0);
  v.boolean("freeze_on_lap", p.freeze_on_lap);
}

template <class V>
void visit(V& v, ScenarioConfig& c) {
  v.unsigned64("seed", c.seed);
  v.number("duration", c.duration, 0.0, 3600.0);
  v.section("track", [&](V& s) { visit(s, c.track); });
  v.section("speed", [&](V& s) { visit(s, c.speed); });
  v.section("sensors", [&](V& s) { visit(s, c.sensors); });
  v.section("rates", [&](V& s) { visit(s, c.rates); });
  v.failures("failures", c.failures);
  v.section("velest", [&](V& s) { visit(s, c.velest); });
  v.section("slam", [&](V& s) { visit(s, c.slam); });
}

bool divides(double plant, double rate) {
  const double ratio = plant / rate;
  return std::abs(ratio - std::round(ratio)) < 1e-9 * ratio && std::round(ratio) >= 1.0;
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::invalid_argument(join_problems(problems)), problems_(std::move(problems)) {}

std::vector<std::string> validate(const ScenarioConfig& cfg) {
  std::vector<std::string> problems;
  // Re-running the reader over the serialized form applies the range checks.
  {
    ScenarioConfig scratch;
    const Json doc = to_json(cfg);
    Reader r(doc, "", problems);
    visit(r, scratch);
  }
  const auto& r = cfg.rates;
  const std::pair<const char*, double> streams[] = {{"truth", r.truth}, {"imu", r.imu},       {"wheels", r.wheels},
                                                    {"gss", r.gss},     {"lidar", r.lidar},   {"camera", r.camera},
                                                    {"vel_est", r.vel_est}};
  for (const auto& [name, rate] : streams) {
    if (rate > 0.0 && !divides(r.plant, rate))
      problems.push_back(std::string("rates.") + name + ": " + fmt(rate) + " Hz does not divide the plant rate");
  }
  if (r.plant > 0.0 && r.camera > 0.0) {
    const double phase_steps = r.camera_phase * r.plant;
    if (std::abs(phase_steps - std::round(phase_steps)) > 1e-9 || r.camera_phase >= 1.0 / r.camera)
      problems.push_back("rates.camera_phase: must be a whole number of plant steps below the camera period");
  }
  if (cfg.speed.v_min > cfg.speed.v_max) problems.push_back("speed.v_min: exceeds speed.v_max");
  if (cfg.track.track_width < cfg.track.min_width) problems.push_back("track.track_width: below track.min_width");
  if (cfg.track.cone_spacing > cfg.track.max_spacing)
    problems.push_back("track.cone_spacing: exceeds track.max_spacing");
  if (cfg.sensors.lidar.p_color_floor > cfg.sensors.lidar.p_color_ceil)
    problems.push_back("sensors.lidar.p_color_floor: exceeds p_color_ceil");
  if (cfg.velest.failure.healthy_below > cfg.velest.failure.failed_above)
    problems.push_back("velest.failure.healthy_below: exceeds failed_above");
  try {
    validate_failure_script(cfg.failures);
  } catch (const std::exception& e) {
    problems.push_back(std::string("failures: ") + e.what());
  }
  return problems;
}

ScenarioConfig config_from_json(const Json& j) {
  ScenarioConfig cfg;
  std::vector<std::string> problems;
  {
    Reader r(j, "", problems);
    visit(r, cfg);
  }
  if (problems.empty()) problems = validate(cfg);
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return cfg;
}

ScenarioConfig parse_config(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError({std::string("<root>: ") + e.what()});
  }
  return config_from_json(j);
}

ScenarioConfig load_config(const std::string& path) { return parse_config(read_text_file(path)); }

Json to_json(const ScenarioConfig& cfg) {
  Writer w;
  ScenarioConfig copy = cfg;
  visit(w, copy);
  return w.json();
}

int steps_per_sample(const StreamRates& rates, double rate) {
  return static_cast<int>(std::lround(rates.plant / rate));
}

std::uint64_t track_seed(std::uint64_t seed) { return seed; }
std::uint64_t sensor_seed(std::uint64_t seed) { return mix(seed ^ 0x73656e736f7273ULL); }
std::uint64_t slam_seed(std::uint64_t seed) { return mix(seed ^ 0x736c616dULL); }

}  // namespace conestack
