#include "conestack/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace conestack {

namespace {

// Shortest augmenting path with row and column potentials; requires
// rows <= cols.
std::vector<int> hungarian_wide(const std::vector<double>& a, int n, int m) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a[(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= m; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

struct TruthTrack {
  std::vector<double> t;
  std::vector<TruthRecord> rec;

  // Linear interpolation, clamped at the ends.
  TruthRecord at(double time) const {
    const auto it = std::lower_bound(t.begin(), t.end(), time);
    if (it == t.begin()) return rec.front();
    if (it == t.end()) return rec.back();
    const auto i = static_cast<std::size_t>(it - t.begin());
    if (*it == time) return rec[i];
    const double w = (time - t[i - 1]) / (t[i] - t[i - 1]);
    const auto& a = rec[i - 1];
    const auto& b = rec[i];
    const Vec2 xy = (1.0 - w) * a.pose.translation() + w * b.pose.translation();
    const double th = a.pose.theta() + w * wrap_angle(b.pose.theta() - a.pose.theta());
    const Vec3 vel = (1.0 - w) * a.vel.as_vector() + w * b.vel.as_vector();
    return {Pose2D(xy, th), VelocityState::from_vector(vel)};
  }
};

double rms(double sum_sq, int n) { return n > 0 ? std::sqrt(sum_sq / n) : 0.0; }

}  // namespace

std::vector<int> hungarian(const std::vector<double>& cost, int rows, int cols) {
  if (rows < 0 || cols < 0 || cost.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
    throw std::invalid_argument("hungarian: cost size does not match rows x cols");
  for (double c : cost)
    if (!std::isfinite(c)) throw std::invalid_argument("hungarian: costs must be finite");
  if (rows == 0) return {};
  if (cols == 0) return std::vector<int>(rows, -1);
  if (rows <= cols) return hungarian_wide(cost, rows, cols);
  std::vector<double> transposed(cost.size());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) transposed[c * rows + r] = cost[r * cols + c];
  const auto col_to_row = hungarian_wide(transposed, cols, rows);
  std::vector<int> out(rows, -1);
  for (int c = 0; c < cols; ++c) out[col_to_row[c]] = c;
  return out;
}

double assignment_cost(const std::vector<double>& cost, int cols, const std::vector<int>& assignment) {
  double total = 0.0;
  for (std::size_t r = 0; r < assignment.size(); ++r)
    if (assignment[r] >= 0) total += cost[r * cols + assignment[r]];
  return total;
}

std::vector<ConeMatch> match_cones(const std::vector<Vec2>& estimated, const std::vector<Vec2>& truth, double gate) {
  if (!(gate > 0.0)) throw std::invalid_argument("match_cones: gate must be positive");
  const int ne = static_cast<int>(estimated.size());
  const int nt = static_cast<int>(truth.size());
  // Square (ne + nt) problem: real pairs, one private dummy per cone, and a
  // free dummy-dummy block.
  const int n = ne + nt;
  const double unmatched = 0.5 * gate * gate;
  const double forbidden = 4.0 * unmatched * (n + 1);
  std::vector<double> cost(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < ne; ++i) {
    for (int j = 0; j < nt; ++j) {
      const double d2 = (estimated[i] - truth[j]).squaredNorm();
      cost[i * n + j] = d2 <= gate * gate ? d2 : forbidden;
    }
    for (int k = 0; k < ne; ++k) cost[i * n + nt + k] = k == i ? unmatched : forbidden;
  }
  for (int k = 0; k < nt; ++k)
    for (int j = 0; j < nt; ++j) cost[(ne + k) * n + j] = k == j ? unmatched : forbidden;

  std::vector<ConeMatch> out;
  if (n == 0) return out;
  const auto assignment = hungarian(cost, n, n);
  for (int i = 0; i < ne; ++i) {
    const int j = assignment[i];
    if (j < nt && cost[i * n + j] < forbidden) out.push_back({i, j, (estimated[i] - truth[j]).norm()});
  }
  return out;
}

double FailureMetrics::max_latency() const {
  double worst = 0.0;
  for (const auto& f : faults)
    if (f.latency) worst = std::max(worst, *f.latency);
  return worst;
}

int FailureMetrics::detected() const {
  return static_cast<int>(std::count_if(faults.begin(), faults.end(), [](const auto& f) { return f.latency.has_value(); }));
}

MapMetrics evaluate_map(const ConeMap& map, const std::vector<Cone>& truth, double gate) {
  std::vector<Vec2> est_pos, true_pos;
  for (const auto& c : map) est_pos.push_back(c.position);
  for (const auto& c : truth) true_pos.push_back(c.position);
  const auto matches = match_cones(est_pos, true_pos, gate);

  MapMetrics m;
  m.n_truth = static_cast<int>(truth.size());
  m.n_estimated = static_cast<int>(map.size());
  m.matched = static_cast<int>(matches.size());
  m.missed = m.n_truth - m.matched;
  m.false_cones = m.n_estimated - m.matched;
  m.recall = m.n_truth > 0 ? static_cast<double>(m.matched) / m.n_truth : 0.0;
  m.precision = m.n_estimated > 0 ? static_cast<double>(m.matched) / m.n_estimated : 0.0;
  double sq = 0.0;
  int correct = 0;
  for (const auto& match : matches) {
    sq += match.distance * match.distance;
    const ConeColor c = map[match.estimated].color;
    if (c == ConeColor::kUnknown) continue;
    ++m.colored;
    correct += c == truth[match.truth].color;
  }
  m.position_rmse = rms(sq, m.matched);
  // Unknown colors abstain; with no colored match there is nothing to get wrong.
  m.color_accuracy = m.colored > 0 ? static_cast<double>(correct) / m.colored : 1.0;
  return m;
}

EvalReport evaluate(const EventLog& log, const TruthDoc& truth, const EvalOptions& options) {
  TruthTrack track;
  const MapRecord* last_map = nullptr;
  int n_vel = 0, n_pose = 0;
  for (const auto& e : log) {
    if (e.stream == Stream::kTruth) {
      track.t.push_back(e.t);
      track.rec.push_back(std::get<TruthRecord>(e.payload));
    } else if (e.stream == Stream::kMap) {
      last_map = &std::get<MapRecord>(e.payload);
    }
    n_vel += e.stream == Stream::kVelEst;
    n_pose += e.stream == Stream::kSlamPose;
  }
  std::vector<std::string> missing;
  if (track.t.empty()) missing.emplace_back("TRUTH");
  if (n_vel == 0) missing.emplace_back("VEL_EST");
  if (n_pose == 0) missing.emplace_back("SLAM_POSE");
  if (!last_map) missing.emplace_back("MAP");
  if (!missing.empty()) {
    std::string msg = "evaluate: log lacks stream(s)";
    for (const auto& s : missing) msg += " " + s;
    throw std::invalid_argument(msg);
  }
  if (!std::is_sorted(track.t.begin(), track.t.end()))
    throw std::invalid_argument("evaluate: TRUTH events out of time order");

  const Pose2D anchor = track.rec.front().pose;
  const Pose2D to_map = inverse(anchor);
  EvalReport report;

  std::vector<Cone> cones = truth.track.all_cones();
  for (auto& c : cones) c.position = to_body(anchor, c.position);
  report.map = evaluate_map(last_map->cones, cones, options.map_gate);

  double ate = 0.0, ate_loc = 0.0, vx = 0.0, vy = 0.0, r = 0.0;
  auto& tr = report.trajectory;
  auto& vel = report.velocity;
  auto& fm = report.failures;
  for (const auto& f : truth.failures) {
    if (std::find(kMonitoredSensors.begin(), kMonitoredSensors.end(), f.sensor) != kMonitoredSensors.end())
      fm.faults.push_back({f, std::nullopt});
  }
  std::array<HealthStatus, kMonitoredSensors.size()> status{};
  status.fill(HealthStatus::kHealthy);

  for (const auto& e : log) {
    if (e.stream == Stream::kSlamPose) {
      const auto& p = std::get<SlamPoseRecord>(e.payload);
      const Pose2D true_pose = compose(to_map, track.at(e.t).pose);
      const double err = (p.pose.translation() - true_pose.translation()).norm();
      ate += err * err;
      ++tr.n_poses;
      tr.max_err = std::max(tr.max_err, err);
      if (p.mode == SlamMode::kLocalization) {
        ate_loc += err * err;
        ++tr.n_localization;
      }
    } else if (e.stream == Stream::kVelEst) {
      const auto& b = std::get<VelBelief>(e.payload);
      const auto v = track.at(e.t).vel;
      vx += (b.mean.vx - v.vx) * (b.mean.vx - v.vx);
      vy += (b.mean.vy - v.vy) * (b.mean.vy - v.vy);
      r += (b.mean.r - v.r) * (b.mean.r - v.r);
      ++vel.n;
    } else if (e.stream == Stream::kHealth) {
      for (const auto& ch : std::get<HealthRecord>(e.payload).channels) {
        const auto it = std::find(kMonitoredSensors.begin(), kMonitoredSensors.end(), ch.sensor);
        if (it == kMonitoredSensors.end()) continue;
        auto& prev = status[static_cast<std::size_t>(it - kMonitoredSensors.begin())];
        if (ch.status == HealthStatus::kFailed) {
          bool attributed = false;
          for (auto& f : fm.faults) {
            if (f.fault.sensor != ch.sensor || e.t < f.fault.t_start) continue;
            if (!f.latency) f.latency = e.t - f.fault.t_start;
            attributed |= e.t <= f.fault.t_end + options.detection_grace;
          }
          if (prev != HealthStatus::kFailed && !attributed) ++fm.false_alarms;
        }
        prev = ch.status;
      }
    }
  }
  tr.ate_rmse = rms(ate, tr.n_poses);
  tr.localization_ate_rmse = rms(ate_loc, tr.n_localization);
  vel.vx_rmse = rms(vx, vel.n);
  vel.vy_rmse = rms(vy, vel.n);
  vel.r_rmse = rms(r, vel.n);
  const double minutes = (track.t.back() - track.t.front()) / 60.0;
  fm.false_alarms_per_minute = minutes > 0.0 ? fm.false_alarms / minutes : 0.0;
  return report;
}

}  // namespace conestack
