#include "conestack/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "conestack/path_follower.hpp"

namespace conestack {

namespace {

constexpr double kTimeEps = 1e-9;

class BusyTimer {
 public:
  explicit BusyTimer(double& acc) : acc_(acc), start_(std::chrono::steady_clock::now()) {}
  ~BusyTimer() { acc_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }
  BusyTimer(const BusyTimer&) = delete;
  BusyTimer& operator=(const BusyTimer&) = delete;

 private:
  double& acc_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

EstimatorPipeline::EstimatorPipeline(const ScenarioConfig& cfg)
    : cfg_(cfg), slam_(cfg.slam, slam_seed(cfg.seed), Pose2D{}) {
  reported_.fill(HealthStatus::kHealthy);
}

void EstimatorPipeline::start_velest(const LogEvent& ev) {
  // Bootstrap the forward speed from the first speed measurement; lateral
  // velocity and yaw rate start at zero with the configured prior.
  double vx = 0.0;
  if (const auto* w = std::get_if<WheelSpeeds>(&ev.payload)) {
    double sum = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      if (!w->valid[i]) continue;
      sum += w->omegas[i];
      ++n;
    }
    if (n == 0) return;
    vx = sum / n * vehicle_.r_eff;
  } else if (const auto* g = std::get_if<GssSample>(&ev.payload)) {
    vx = g->vx;
  } else {
    return;
  }
  velest_.emplace(cfg_.velest, vehicle_, initial_belief({vx, 0.0, 0.0}, ev.t, cfg_.velest));
}

void EstimatorPipeline::feed(const LogEvent& ev, EventLog& out) {
  if (finished_) throw std::logic_error("EstimatorPipeline: feed after finish");
  if (is_estimator_stream(ev.stream))
    throw std::invalid_argument("EstimatorPipeline: cannot feed " + std::string(to_string(ev.stream)));
  if (open_t_ && ev.t > *open_t_) close_step(out);
  if (open_t_ && ev.t < *open_t_) throw std::invalid_argument("EstimatorPipeline: events out of time order");
  open_t_ = ev.t;
  out.push_back(ev);

  switch (ev.stream) {
    case Stream::kTruth:
      return;
    case Stream::kWheels:
    case Stream::kGss:
    case Stream::kImu: {
      BusyTimer timer(busy_);
      if (!velest_) {
        start_velest(ev);
        if (!velest_) return;
      }
      std::visit(
          [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, WheelSpeeds> || std::is_same_v<T, GssSample> ||
                          std::is_same_v<T, ImuSample>)
              velest_->process(p);
          },
          ev.payload);
      return;
    }
    case Stream::kLidarObs:
    case Stream::kCamObs: {
      SlamEstimate est;
      ++frames_;
      {
        BusyTimer timer(busy_);
        slam_.process(std::get<ConeFrame>(ev.payload));
        est = slam_.estimate();
      }
      out.push_back(make_event(ev.t, SlamPoseRecord{est.pose, est.ess, est.n_particles, est.mode}));
      if (last_mode_ == SlamMode::kMapping && slam_.mode() == SlamMode::kLocalization)
        out.push_back(make_event(ev.t, MapRecord{MapReason::kLap, slam_.laps(), slam_.map()}));
      last_mode_ = slam_.mode();
      return;
    }
    default:
      return;
  }
}

void EstimatorPipeline::close_step(EventLog& out) {
  if (!open_t_ || !velest_) return;
  const double t = *open_t_;
  const double rate = cfg_.rates.vel_est;
  const bool due = static_cast<double>(next_pub_) / rate <= t + kTimeEps;
  if (due) {
    VelBelief published;
    {
      BusyTimer timer(busy_);
      published = velest_->published();
      slam_.process(published);
    }
    out.push_back(make_event(published));
    next_pub_ = static_cast<long>(std::floor(t * rate + kTimeEps)) + 1;
  }
  const auto& health = velest_->health();
  bool changed = false;
  for (std::size_t i = 0; i < health.size(); ++i) changed |= health[i].status != reported_[i];
  if (due || changed) {
    HealthRecord rec;
    for (std::size_t i = 0; i < health.size(); ++i) {
      rec.channels.push_back({kMonitoredSensors[i], health[i].status, health[i].fail_belief});
      reported_[i] = health[i].status;
    }
    out.push_back(make_event(t, std::move(rec)));
  }
}

void EstimatorPipeline::finish(EventLog& out) {
  if (finished_) return;
  close_step(out);
  finished_ = true;
  if (frames_ == 0) return;
  ConeMap map;
  {
    BusyTimer timer(busy_);
    map = slam_.map();
  }
  out.push_back(make_event(open_t_.value_or(0.0), MapRecord{MapReason::kFinal, slam_.laps(), std::move(map)}));
}

double SimulationResult::real_time_factor() const {
  return estimator_seconds > 0.0 ? simulated_seconds / estimator_seconds : 0.0;
}

SimulationResult run_simulation(const ScenarioConfig& cfg) {
  if (const auto problems = validate(cfg); !problems.empty()) throw ConfigError(problems);

  SimulationResult result;
  Rng track_rng(track_seed(cfg.seed));
  result.truth.track = generate_track(track_rng, cfg.track);
  result.truth.failures = cfg.failures;
  const TrackSpec& track = result.truth.track;

  const VehicleParams vehicle;
  PathFollower driver(track, cfg.speed, vehicle);
  VehicleState state = driver.initial_state();
  state.timestamp = 0.0;

  Rng rng(sensor_seed(cfg.seed));
  FailureInjector injector(cfg.failures, cfg.sensors);
  EstimatorPipeline pipeline(cfg);

  const auto& r = cfg.rates;
  const double dt = 1.0 / r.plant;
  const long steps = std::lround(std::floor(cfg.duration * r.plant + kTimeEps));
  const int truth_div = steps_per_sample(r, r.truth);
  const int wheel_div = steps_per_sample(r, r.wheels);
  const int gss_div = steps_per_sample(r, r.gss);
  const int imu_div = steps_per_sample(r, r.imu);
  const int lidar_div = steps_per_sample(r, r.lidar);
  const int camera_div = steps_per_sample(r, r.camera);
  const long camera_phase = std::lround(r.camera_phase * r.plant);

  auto& log = result.log;
  for (long k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) / r.plant;
    if (k > 0) {
      const DriveInput u = driver.control(state);
      state = step_dynamics(state, u, dt, vehicle);
      state.timestamp = t;
    }
    if (k % truth_div == 0) pipeline.feed(make_event(t, TruthRecord{state.pose, state.vel}), log);
    if (k == 0) continue;

    if (k % wheel_div == 0) {
      WheelSpeeds w = sample_wheel_speeds(state, rng, cfg.sensors.wheels);
      w.timestamp = t;
      injector.apply(w, rng);
      pipeline.feed(make_event(w), log);
    }
    if (cfg.sensors.gss.enabled && k % gss_div == 0) {
      GssSample g = sample_gss(state, rng, cfg.sensors.gss);
      g.timestamp = t;
      if (injector.apply(g, rng)) pipeline.feed(make_event(g), log);
    }
    if (k % imu_div == 0) {
      ImuSample s = sample_imu(state, rng, cfg.sensors.imu);
      s.timestamp = t;
      if (injector.apply(s, rng)) pipeline.feed(make_event(s), log);
    }
    if (cfg.sensors.lidar.enabled && k % lidar_div == 0) {
      ConeFrame f{t, Modality::kLidar, sample_lidar_cones(state, track, rng, cfg.sensors.lidar)};
      if (injector.apply(f)) pipeline.feed(make_event(std::move(f)), log);
    }
    if (cfg.sensors.camera.enabled && k % camera_div == camera_phase) {
      ConeFrame f{t, Modality::kCamera, sample_camera_cones(state, track, rng, cfg.sensors.camera)};
      if (injector.apply(f)) pipeline.feed(make_event(std::move(f)), log);
    }
  }
  pipeline.finish(log);
  result.estimator_seconds = pipeline.busy_seconds();
  result.simulated_seconds = static_cast<double>(steps) / r.plant;
  return result;
}

EventLog input_events(const EventLog& log) {
  EventLog out;
  out.reserve(log.size());
  for (const auto& e : log)
    if (!is_estimator_stream(e.stream)) out.push_back(e);
  return out;
}

ReplayResult replay_estimators(const EventLog& recorded, const ScenarioConfig& cfg) {
  ReplayResult result;
  EstimatorPipeline pipeline(cfg);
  result.log.reserve(recorded.size());
  for (const auto& e : recorded)
    if (!is_estimator_stream(e.stream)) pipeline.feed(e, result.log);
  pipeline.finish(result.log);
  result.estimator_seconds = pipeline.busy_seconds();
  return result;
}

}  // namespace conestack
