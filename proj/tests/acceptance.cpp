// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Closed-loop runs use the built-in default scenario with
// fixed seeds, so every number printed here is reproducible.

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "conestack/eval.hpp"
#include "conestack/lidar.hpp"
#include "conestack/pipeline.hpp"
#include "conestack/velest.hpp"
#include "oracles.hpp"

using namespace conestack;

namespace {

int g_failed = 0;

void report(const char* name, bool pass, const std::string& detail) {
  std::printf("%s  %-34s %s\n", pass ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  g_failed += !pass;
}

template <class... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }
double max_of(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }
double min_of(const std::vector<double>& v) { return *std::min_element(v.begin(), v.end()); }

ScenarioConfig scenario(std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.seed = seed;
  return cfg;
}

// Map metrics of the map frozen at the end of the first lap.
MapMetrics lap_map_metrics(const SimulationResult& sim) {
  const auto truth_it = std::find_if(sim.log.begin(), sim.log.end(), [](const auto& e) { return e.stream == Stream::kTruth; });
  const Pose2D anchor = std::get<TruthRecord>(truth_it->payload).pose;
  const auto lap_it = std::find_if(sim.log.begin(), sim.log.end(), [](const auto& e) {
    return e.stream == Stream::kMap && std::get<MapRecord>(e.payload).reason == MapReason::kLap;
  });
  if (lap_it == sim.log.end()) return {};
  std::vector<Cone> cones = sim.truth.track.all_cones();
  for (auto& c : cones) c.position = to_body(anchor, c.position);
  return evaluate_map(std::get<MapRecord>(lap_it->payload).cones, cones, EvalOptions{}.map_gate);
}

struct RunSummary {
  MapMetrics lap_map;
  EvalReport report;
  double rtf = 0.0;
  bool lap_closed = false;
};

RunSummary run(const ScenarioConfig& cfg) {
  const SimulationResult sim = run_simulation(cfg);
  RunSummary s;
  s.lap_closed = std::any_of(sim.log.begin(), sim.log.end(), [](const auto& e) {
    return e.stream == Stream::kMap && std::get<MapRecord>(e.payload).reason == MapReason::kLap;
  });
  s.lap_map = lap_map_metrics(sim);
  s.report = evaluate(sim.log, sim.truth);
  s.rtf = sim.real_time_factor();
  return s;
}

// Mean GSS NIS over every GSS sample of a run, replaying its inputs.
struct NisSample {
  double mean = 0.0;
  int n = 0;
};

NisSample gss_nis(const ScenarioConfig& cfg) {
  const SimulationResult sim = run_simulation(cfg);
  EstimatorPipeline pipeline(cfg);
  EventLog sink;
  NisSample out;
  double sum = 0.0;
  for (const auto& e : input_events(sim.log)) {
    pipeline.feed(e, sink);
    if (e.stream != Stream::kGss || !pipeline.velocity()) continue;
    const auto& o = pipeline.velocity()->last_outcomes()[kGssChannel];
    if (!o.evaluated) continue;
    sum += o.nis;
    ++out.n;
  }
  out.mean = out.n > 0 ? sum / out.n : 0.0;
  return out;
}

void mapping_and_localization(const std::vector<RunSummary>& runs) {
  std::vector<double> recall, false_cones, rmse, color, loc_ate, vx, vy, rtf;
  int laps = 0;
  for (const auto& r : runs) {
    recall.push_back(r.lap_map.recall);
    false_cones.push_back(r.lap_map.false_cones);
    rmse.push_back(r.lap_map.position_rmse);
    color.push_back(r.lap_map.color_accuracy);
    loc_ate.push_back(r.report.trajectory.localization_ate_rmse);
    vx.push_back(r.report.velocity.vx_rmse);
    vy.push_back(r.report.velocity.vy_rmse);
    laps += r.lap_closed;
  }
  const int n = static_cast<int>(runs.size());
  report("mapping: cone recall >= 0.95", laps == n && mean(recall) >= 0.95,
         fmt("mean %.4f (min %.4f) over %d seeds, %d/%d laps closed", mean(recall), min_of(recall), n, laps, n));
  report("mapping: false cones <= 3", mean(false_cones) <= 3.0,
         fmt("mean %.2f (max %.0f)", mean(false_cones), max_of(false_cones)));
  report("mapping: position RMSE <= 0.30 m", mean(rmse) <= 0.30, fmt("mean %.4f m (max %.4f)", mean(rmse), max_of(rmse)));
  report("mapping: color accuracy >= 0.95", mean(color) >= 0.95,
         fmt("mean %.4f (min %.4f)", mean(color), min_of(color)));
  report("localization: lap-2 ATE <= 0.20 m", mean(loc_ate) <= 0.20,
         fmt("mean %.4f m (max %.4f) over %d seeds", mean(loc_ate), max_of(loc_ate), n));
  report("velocity: vx RMSE <= 0.15 m/s", max_of(vx) <= 0.15, fmt("max %.4f m/s (mean %.4f)", max_of(vx), mean(vx)));
  report("velocity: vy RMSE <= 0.10 m/s", max_of(vy) <= 0.10, fmt("max %.4f m/s (mean %.4f)", max_of(vy), mean(vy)));
}

void nis_consistency() {
  // The mean of N independent chi2(2) draws is chi2(2N)/N; 95% two-sided.
  bool pass = true;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    const NisSample s = gss_nis(scenario(seed));
    const boost::math::chi_squared dist(2.0 * s.n);
    const double lo = boost::math::quantile(dist, 0.025) / s.n;
    const double hi = boost::math::quantile(dist, 0.975) / s.n;
    const bool ok = s.mean > lo && s.mean < hi;
    pass &= ok;
    detail += fmt("seed %d: %.3f in [%.3f, %.3f]%s  ", static_cast<int>(seed), s.mean, lo, hi, ok ? "" : " OUT");
  }
  report("velocity: GSS NIS interval", pass, detail);
}

void false_alarms(const std::vector<RunSummary>& runs) {
  int total = 0;
  std::string seeds;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const int n = runs[i].report.failures.false_alarms;
    total += n;
    if (n > 0) seeds += fmt(" seed %d:%d", static_cast<int>(i + 1), n);
  }
  report("failures: 0 false FAILED, 20 seeds", total == 0,
         fmt("%d false FAILED declarations over %zu fault-free 60 s runs%s", total, runs.size(),
             seeds.empty() ? "" : (" (" + seeds.substr(1) + ")").c_str()));
}

void fault_latency() {
  const double offset = 3.0 * SensorSuiteParams{}.wheels.sigma;
  struct Case {
    const char* name;
    FailureMode mode;
    double magnitude;
  };
  const Case cases[] = {{"STUCK", FailureMode::kStuck, 0.0},
                        {"OFFSET 3 sigma", FailureMode::kOffset, offset},
                        {"NOISE_BURST x10", FailureMode::kNoiseBurst, 10.0}};
  for (const auto& c : cases) {
    std::vector<double> latency;
    int missed = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      auto cfg = scenario(seed);
      cfg.duration = 40.0;
      cfg.failures = {{SensorId::kWheel1, c.mode, 20.0, 30.0, c.magnitude}};
      const auto r = evaluate(run_simulation(cfg).log, TruthDoc{{}, cfg.failures});
      const auto& f = r.failures.faults.at(0);
      if (f.latency)
        latency.push_back(*f.latency);
      else
        ++missed;
    }
    const bool pass = missed == 0 && max_of(latency.empty() ? std::vector<double>{1e9} : latency) <= 1.0;
    report(fmt("failures: %s latency <= 1 s", c.name).c_str(), pass,
           fmt("wheel1, 5 seeds: max %.3f s, mean %.3f s, missed %d", latency.empty() ? 0.0 : max_of(latency),
               latency.empty() ? 0.0 : mean(latency), missed));
  }
}

void redundancy(const std::vector<RunSummary>& both) {
  std::vector<double> with_both, lidar_only, camera_only;
  for (std::size_t i = 0; i < both.size(); ++i) {
    with_both.push_back(both[i].lap_map.recall);
    auto cfg = scenario(i + 1);
    cfg.sensors.camera.enabled = false;
    lidar_only.push_back(run(cfg).lap_map.recall);
    cfg = scenario(i + 1);
    cfg.sensors.lidar.enabled = false;
    camera_only.push_back(run(cfg).lap_map.recall);
  }
  const double b = mean(with_both), l = mean(lidar_only), c = mean(camera_only);
  report("redundancy: each modality >= 0.85", l >= 0.85 && c >= 0.85,
         fmt("recall LiDAR only %.4f, camera only %.4f", l, c));
  report("redundancy: both strictly higher", b > l && b > c,
         fmt("recall both %.4f vs LiDAR only %.4f, camera only %.4f", b, l, c));
}

void real_time(const std::vector<RunSummary>& runs) {
  std::vector<double> rtf;
  for (const auto& r : runs) rtf.push_back(r.rtf);
  report("real time: factor >= 1", min_of(rtf) >= 1.0,
         fmt("N=%d particles, 10 Hz frames: min %.1f, mean %.1f over %zu runs", SlamParams{}.n_particles, min_of(rtf),
             mean(rtf), rtf.size()));
}

void association_oracle() {
  Rng rng(11);
  const SlamParams params;
  int identical = 0, gate_mismatch = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    const Pose2D pose(rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0), rng.uniform(-3.0, 3.0));
    const auto n_lm = static_cast<int>(rng.uniform_index(5));
    const auto n_obs = 1 + static_cast<int>(rng.uniform_index(4));
    std::vector<Landmark> lms(n_lm);
    for (auto& lm : lms) {
      lm.mean = to_world(pose, Vec2(rng.uniform(2.0, 5.0), rng.uniform(-1.5, 1.5)));
      lm.cov = oracle::random_cov(rng, 0.2);
    }
    std::vector<ConeObservation> obs(n_obs);
    for (auto& o : obs) {
      o.pos_body = Vec2(rng.uniform(2.0, 5.0), rng.uniform(-1.5, 1.5));
      o.cov = oracle::random_cov(rng, 0.15);
    }
    std::vector<std::vector<double>> d2;
    const auto best = oracle::exhaustive_association(pose, lms, obs, params, d2);
    const auto greedy = associate(pose, lms, obs, params);
    bool same = true;
    for (int i = 0; i < n_obs; ++i) {
      const int g = greedy[i].kind == AssociationKind::kMatched ? static_cast<int>(greedy[i].landmark) : -1;
      same &= g == best[i];
      for (int j = 0; j < n_lm; ++j) {
        const auto single = associate(pose, std::span(lms).subspan(j, 1), std::span(obs).subspan(i, 1), params);
        gate_mismatch += (single[0].kind == AssociationKind::kMatched) != (d2[i][j] <= params.gate);
      }
    }
    identical += same;
  }
  const double rate = static_cast<double>(identical) / trials;
  report("oracle: association vs brute force", rate >= 0.95 && gate_mismatch == 0,
         fmt("%.1f%% identical assignments, %d gate disagreements, %d trials up to 4x4", 100.0 * rate, gate_mismatch,
             trials));
}

void landmark_oracle() {
  Rng rng(5);
  SlamParams params;
  params.pose_sigma_xy = 0.0;
  params.pose_sigma_theta = 0.0;
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const Pose2D pose(rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0), rng.uniform(-3.0, 3.0));
    const int k = 2 + static_cast<int>(rng.uniform_index(30));
    std::vector<ConeObservation> obs(k);
    for (auto& o : obs) {
      o.pos_body = Vec2(6.0, -1.0) + Vec2(rng.normal(0.0, 0.3), rng.normal(0.0, 0.3));
      o.cov = oracle::random_cov(rng, 0.2);
    }
    Landmark lm = init_landmark(obs[0], pose, params);
    for (int i = 1; i < k; ++i) lm = update_landmark(lm, obs[i], pose);
    worst = std::max(worst, (lm.mean - oracle::weighted_least_squares(pose, obs).mean).norm());
  }
  report("oracle: landmark EKF vs WLS", worst <= 1e-6, fmt("max deviation %.2e m over 200 landmarks", worst));
}

void jacobian_oracle() {
  Rng rng(3);
  const VehicleParams veh;
  double worst = 0.0;
  const double h = 1e-6;
  for (int n = 0; n < 200; ++n) {
    const VelocityState x{rng.uniform(-5.0, 25.0), rng.uniform(-3.0, 3.0), rng.uniform(-2.0, 2.0)};
    const Vec3 imu(rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0), rng.uniform(-2.0, 2.0));
    const double dt = rng.uniform(0.001, 0.05);
    const double steer = rng.uniform(-0.4, 0.4);
    const Mat3 f = process_jacobian(x, dt, 0.05);
    const auto hub = wheel_hub_jacobian(steer, veh);
    for (int j = 0; j < 3; ++j) {
      Vec3 lo = x.as_vector(), hi = x.as_vector();
      lo(j) -= h;
      hi(j) += h;
      const auto xl = VelocityState::from_vector(lo), xh = VelocityState::from_vector(hi);
      const Vec3 col = (process_step(xh, imu, dt, 0.05).as_vector() - process_step(xl, imu, dt, 0.05).as_vector()) / (2 * h);
      worst = std::max(worst, (col - f.col(j)).cwiseAbs().maxCoeff());
      const auto wh = wheel_hub_speeds(xh, steer, veh), wl = wheel_hub_speeds(xl, steer, veh);
      for (int w = 0; w < 4; ++w) worst = std::max(worst, std::abs((wh[w] - wl[w]) / (2 * h) - hub(w, j)));
    }
  }
  report("oracle: Jacobians vs finite differences", worst <= 1e-6,
         fmt("max deviation %.2e (process model and wheel hub speeds, 200 points)", worst));
}

void hungarian_oracle() {
  Rng rng(2024);
  int mismatches = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const int rows = 1 + static_cast<int>(rng.uniform_index(6));
    const int cols = 1 + static_cast<int>(rng.uniform_index(6));
    std::vector<double> cost(static_cast<std::size_t>(rows * cols));
    // Integer costs add exactly in any order, so equality can be exact.
    for (auto& c : cost) c = static_cast<double>(rng.uniform_index(trial % 2 ? 1000 : 4));
    mismatches += assignment_cost(cost, cols, hungarian(cost, rows, cols)) != oracle::min_assignment_cost(cost, rows, cols);
  }
  report("oracle: Hungarian vs enumeration", mismatches == 0,
         fmt("%d/500 optimal cost mismatches, up to 6x6 including rectangular", mismatches));
}

void resampling_oracle() {
  Rng wr(17);
  double worst_z = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 7;
    std::vector<double> w(n);
    for (auto& x : w) x = wr.uniform();
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& x : w) x /= total;
    std::vector<double> sum(n, 0.0), sum2(n, 0.0);
    const int draws = 10000;
    for (int s = 0; s < draws; ++s) {
      Rng r(1000 * trial + s);
      std::vector<double> c(n, 0.0);
      for (auto i : systematic_indices(w, r.uniform())) c[i] += 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        sum[i] += c[i];
        sum2[i] += c[i] * c[i];
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double m = sum[i] / draws;
      const double se = std::sqrt(std::max(sum2[i] / draws - m * m, 1e-12) / draws);
      worst_z = std::max(worst_z, std::abs(m - n * w[i]) / se);
    }
  }
  report("oracle: resampling expectation", worst_z <= 3.0,
         fmt("worst |mean copies - N w| = %.2f standard errors (5 weight sets x 10000 draws)", worst_z));
}

void lidar_scenes() {
  Rng rng(9);
  lidar::DetectionTally total;
  const lidar::PipelineParams pp;
  for (int scene = 0; scene < 100; ++scene) {
    const TrackSpec track = generate_track(rng, TrackParams{});
    const std::size_t k = rng.uniform_index(track.centerline.size());
    const Pose2D pose(track.centerline[k], rng.uniform(-3.0, 3.0));
    const auto cones = track.all_cones();
    const auto labeled = lidar::synth_labeled(pose, cones, rng, pp.scan);
    total += lidar::tally_detections(lidar::process_scan(labeled.points, 0.0, pp), labeled.cones);
  }
  report("lidar: recall >= 0.9 within 8 m", total.recall() >= 0.9,
         fmt("%.4f (%d/%d) over 100 scenes", total.recall(), total.cones_found, total.cones_in_range));
  report("lidar: precision >= 0.9 within 8 m", total.precision() >= 0.9,
         fmt("%.4f (%d/%d)", total.precision(), total.detections_matched, total.detections_in_range));
  report("lidar: color accuracy >= 0.9 within 6 m", total.color_accuracy() >= 0.9,
         fmt("%.4f over %d decisive of %d matched (rest abstain)", total.color_accuracy(), total.color_decisive,
             total.color_in_range));
}

}  // namespace

int main() {
  const auto start = std::chrono::steady_clock::now();

  std::vector<RunSummary> fault_free;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) fault_free.push_back(run(scenario(seed)));
  const std::vector<RunSummary> first_ten(fault_free.begin(), fault_free.begin() + 10);

  mapping_and_localization(first_ten);
  nis_consistency();
  fault_latency();
  false_alarms(fault_free);
  redundancy(first_ten);
  real_time(fault_free);
  association_oracle();
  landmark_oracle();
  jacobian_oracle();
  hungarian_oracle();
  resampling_oracle();
  lidar_scenes();

  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report("suite runtime <= 10 min", elapsed <= 600.0, fmt("%.1f s", elapsed));
  std::printf("%d criteria failed\n", g_failed);
  return g_failed == 0 ? 0 : 1;
}
