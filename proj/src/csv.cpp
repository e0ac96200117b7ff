#include "conestack/csv.hpp"

#include <cstdio>
#include <initializer_list>

namespace conestack {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string num(int v) { return std::to_string(v); }

class CsvWriter {
 public:
  explicit CsvWriter(std::initializer_list<std::string_view> header) { row(header); }

  void row(std::initializer_list<std::string_view> cells) {
    bool first = true;
    for (auto c : cells) {
      if (!first) out_ += ',';
      first = false;
      out_ += c;
    }
    out_ += '\n';
  }

  std::string str() && { return std::move(out_); }

 private:
  std::string out_;
};

template <class M>
std::string cells(const M& m) {
  std::string out;
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) {
      if (!out.empty()) out += ',';
      out += num(m(r, c));
    }
  return out;
}

std::string_view mode_name(SlamMode m) { return m == SlamMode::kMapping ? "MAPPING" : "LOCALIZATION"; }

}  // namespace

std::string report_csv(const EvalReport& r) {
  CsvWriter w{"metric", "value"};
  auto put = [&](const std::string& key, const std::string& value) { w.row({key, value}); };
  put("map.n_truth", num(r.map.n_truth));
  put("map.n_estimated", num(r.map.n_estimated));
  put("map.matched", num(r.map.matched));
  put("map.missed", num(r.map.missed));
  put("map.false_cones", num(r.map.false_cones));
  put("map.recall", num(r.map.recall));
  put("map.precision", num(r.map.precision));
  put("map.position_rmse", num(r.map.position_rmse));
  put("map.colored", num(r.map.colored));
  put("map.color_accuracy", num(r.map.color_accuracy));
  put("trajectory.n_poses", num(r.trajectory.n_poses));
  put("trajectory.ate_rmse", num(r.trajectory.ate_rmse));
  put("trajectory.max_err", num(r.trajectory.max_err));
  put("trajectory.n_localization", num(r.trajectory.n_localization));
  put("trajectory.localization_ate_rmse", num(r.trajectory.localization_ate_rmse));
  put("velocity.n", num(r.velocity.n));
  put("velocity.vx_rmse", num(r.velocity.vx_rmse));
  put("velocity.vy_rmse", num(r.velocity.vy_rmse));
  put("velocity.r_rmse", num(r.velocity.r_rmse));
  put("failures.injected", num(static_cast<int>(r.failures.faults.size())));
  put("failures.detected", num(r.failures.detected()));
  put("failures.max_detection_latency", num(r.failures.max_latency()));
  for (std::size_t i = 0; i < r.failures.faults.size(); ++i) {
    const auto& f = r.failures.faults[i];
    const std::string key = "failures.fault" + std::to_string(i) + ".";
    put(key + "sensor", std::string(to_string(f.fault.sensor)));
    put(key + "mode", std::string(to_string(f.fault.mode)));
    put(key + "t_start", num(f.fault.t_start));
    put(key + "detection_latency", f.latency ? num(*f.latency) : "undetected");
  }
  put("failures.false_alarms", num(r.failures.false_alarms));
  put("failures.false_alarms_per_minute", num(r.failures.false_alarms_per_minute));
  put("runtime.simulated_seconds", num(r.runtime.simulated_seconds));
  put("runtime.estimator_seconds", num(r.runtime.estimator_seconds));
  put("runtime.real_time_factor", num(r.runtime.real_time_factor));
  return std::move(w).str();
}

std::string export_csv(const EventLog& log, Stream stream) {
  switch (stream) {
    case Stream::kTruth: {
      CsvWriter w{"t", "x", "y", "theta", "vx", "vy", "r"};
      for (const auto& e : log) {
        if (e.stream != stream) continue;
        const auto& p = std::get<TruthRecord>(e.payload);
        w.row({num(e.t), num(p.pose.x()), num(p.pose.y()), num(p.pose.theta()), num(p.vel.vx), num(p.vel.vy),
               num(p.vel.r)});
      }
      return std::move(w).str();
    }
    case Stream::kLidarObs:
    case Stream::kCamObs: {
      CsvWriter w{"t",      "index",  "x",      "y",      "cov_xx",   "cov_xy",
                  "cov_yx", "cov_yy", "p_blue", "p_yellow", "p_orange", "p_unknown"};
      for (const auto& e : log) {
        if (e.stream != stream) continue;
        const auto& f = std::get<ConeFrame>(e.payload);
        for (std::size_t i = 0; i < f.cones.size(); ++i) {
          const auto& c = f.cones[i];
          w.row({num(e.t), std::to_string(i), num(c.pos_body.x()), num(c.pos_body.y()), cells(c.cov),
                 num(c.color_probs[0]), num(c.color_probs[1]), num(c.color_probs[2]), num(c.color_probs[3])});
        }
      }
      return std::move(w).str();
    }
    case Stream::kWheels: {
      CsvWriter w{"t",        "omega_fl", "omega_fr", "omega_rl", "omega_rr", "valid_fl",
                  "valid_fr", "valid_rl", "valid_rr", "steering"};
      for (const auto& e : log) {
        if (e.stream != stream) continue;
        const auto& s = std::get<WheelSpeeds>(e.payload);
        auto b = [](bool v) { return std::string_view(v ? "1" : "0"); };
        w.row({num(e.t), num(s.omegas[0]), num(s.omegas[1]), num(s.omegas[2]), num(s.omegas[3]), b(s.valid[0]),
               b(s.valid[1]), b(s.valid[2]), b(s.valid[3]), num(s.steering)});
      }
      return std::move(w).str();
    }
    case Stream::kImu: {
      CsvWriter w{"t", "ax", "ay", "gz"};
      for (const auto& e : log) {
        if (e.stream != stream) continue;
        const auto& s = std::get<ImuSample>(e.payload);
        w.row({num(e.t), num(s.ax), num(s.ay), num(s.gz)});
      }
      return std::move(w).str();
    }
    case Stream::kGss: {
      CsvWriter w{"t", "vx", "vy"};
      for (const auto& e : log) {
        if (e.stream != stream) continue;
        const auto& s = std::get<GssSample>(e.payload);
        w.row({num(e.t), num(s.vx), num(s.vy)});
      }
      return std::move(w).str();
    }
    case Stream::kVelEst: {
      CsvWriter w{"t",      "vx",     "vy",     "r",      "cov_00", "cov_01", "cov_02",
                  "cov_10", "cov_11", "cov_12", "cov_20", "cov_21", "cov_22"};
      for (const auto& e : log) {
        if (e.stream != stream) continue;
        const auto& b = std::get<VelBelief>(e.payload);
        w.row({num(e.t), num(b.mean.vx), num(b.mean.vy), num(b.mean.r), cells(b.cov)});
      }
      return std::move(w).str();
    }
    case Stream::kHealth: {
      CsvWriter w{"t", "sensor", "status", "fail_belief"};
      for (const auto& e : log) {
        if (e.stream != stream) continue;
        for (const auto& c : std::get<HealthRecord>(e.payload).channels)
          w.row({num(e.t), to_string(c.sensor), to_string(c.status), num(c.fail_belief)});
      }
      return std::move(w).str();
    }
    case Stream::kSlamPose: {
      CsvWriter w{"t", "x", "y", "theta", "ess", "n_particles", "mode"};
      for (const auto& e : log) {
        if (e.stream != stream) continue;
        const auto& p = std::get<SlamPoseRecord>(e.payload);
        w.row({num(e.t), num(p.pose.x()), num(p.pose.y()), num(p.pose.theta()), num(p.ess), num(p.n_particles),
               mode_name(p.mode)});
      }
      return std::move(w).str();
    }
    case Stream::kMap: {
      CsvWriter w{"t",          "reason", "laps",   "index",  "x",      "y",
                  "color",      "confidence", "cov_xx", "cov_xy", "cov_yx", "cov_yy"};
      for (const auto& e : log) {
        if (e.stream != stream) continue;
        const auto& m = std::get<MapRecord>(e.payload);
        for (std::size_t i = 0; i < m.cones.size(); ++i) {
          const auto& c = m.cones[i];
          w.row({num(e.t), m.reason == MapReason::kLap ? "lap" : "final", num(m.laps), std::to_string(i),
                 num(c.position.x()), num(c.position.y()), to_string(c.color), num(c.confidence), cells(c.cov)});
        }
      }
      return std::move(w).str();
    }
  }
  return {};
}

}  // namespace conestack
