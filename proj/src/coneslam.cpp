#include "conestack/coneslam.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "conestack/stats.hpp"

namespace conestack {

bool Landmark::operator==(const Landmark& o) const {
  return mean == o.mean && cov == o.cov && color_counts == o.color_counts && n_obs == o.n_obs &&
         last_seen == o.last_seen;
}

bool MapCone::operator==(const MapCone& o) const {
  return position == o.position && color == o.color && confidence == o.confidence && cov == o.cov;
}

std::uint64_t content_hash(const ConeMap& map) {
  std::uint64_t h = 1469598103934665603ULL;
  const auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& c : map) {
    mix(c.position.data(), 2 * sizeof(double));
    const int color = static_cast<int>(c.color);
    mix(&color, sizeof color);
    mix(&c.confidence, sizeof(double));
    mix(c.cov.data(), 4 * sizeof(double));
  }
  return h;
}

// Proposal ----------------------------------------------------------------------------

Pose2D dead_reckon(const Pose2D& pose, const VelocityState& v, double dt) {
  const double mid = pose.theta() + 0.5 * v.r * dt;
  const Vec2 step = rotation(mid) * Vec2(v.vx, v.vy) * dt;
  return {pose.translation() + step, pose.theta() + v.r * dt};
}

void predict_particles(std::span<Particle> particles, const VelBelief& vel, double dt, Rng& rng,
                       const SlamParams& params) {
  if (!(dt > 0.0 && dt <= params.max_predict_dt))
    throw std::invalid_argument("predict_particles: dt must lie in (0, max_predict_dt]");
  Cov3 cov = vel.cov;
  cov.diagonal() += params.q_floor / dt;
  const Vec3 mean = vel.mean.as_vector();
  if (cov.isZero(0.0)) {
    for (auto& p : particles) p.pose = dead_reckon(p.pose, vel.mean, dt);
    return;
  }
  for (auto& p : particles)
    p.pose = dead_reckon(p.pose, VelocityState::from_vector(sample_gaussian<3>(rng, mean, cov)), dt);
}

// Association -------------------------------------------------------------------------

Innovation innovation(const Pose2D& pose, const Vec2& lm_mean, const Cov2& lm_cov, const ConeObservation& obs,
                      const SlamParams& params) {
  const Mat2 h = pose.rotation().transpose();
  const Vec2 predicted = h * (lm_mean - pose.translation());
  Innovation out;
  out.nu = obs.pos_body - predicted;
  const double range2 = predicted.squaredNorm();
  Mat2 inflation = params.pose_sigma_xy * params.pose_sigma_xy * Mat2::Identity();
  if (range2 > 0.0) {
    const Vec2 tangent = Vec2(-predicted.y(), predicted.x());  // length = range
    inflation += params.pose_sigma_theta * params.pose_sigma_theta * tangent * tangent.transpose();
  }
  out.s = h * lm_cov * h.transpose() + obs.cov + inflation;
  symmetrize(out.s);
  return out;
}

std::vector<Association> associate(const Pose2D& pose, std::span<const Landmark> landmarks,
                                   std::span<const ConeObservation> obs, const SlamParams& params) {
  struct Pair {
    double d2;
    std::size_t obs;
    std::size_t lm;
  };
  std::vector<Pair> pairs;
  std::vector<double> nearest(obs.size(), std::numeric_limits<double>::infinity());
  std::vector<Vec2> world(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) world[i] = to_world(pose, obs[i].pos_body);

  const double search2 = params.search_radius * params.search_radius;
  for (std::size_t j = 0; j < landmarks.size(); ++j) {
    for (std::size_t i = 0; i < obs.size(); ++i) {
      const double dist2 = (landmarks[j].mean - world[i]).squaredNorm();
      nearest[i] = std::min(nearest[i], dist2);
      if (dist2 > search2) continue;
      const auto inn = innovation(pose, landmarks[j].mean, landmarks[j].cov, obs[i], params);
      const double d2 = mahalanobis_squared(inn.nu, inn.s);
      if (d2 <= params.gate) pairs.push_back({d2, i, j});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.d2 != b.d2) return a.d2 < b.d2;
    return a.obs != b.obs ? a.obs < b.obs : a.lm < b.lm;
  });

  std::vector<Association> out(obs.size());
  std::vector<bool> obs_done(obs.size(), false), lm_taken(landmarks.size(), false);
  for (const auto& p : pairs) {
    if (obs_done[p.obs] || lm_taken[p.lm]) continue;
    obs_done[p.obs] = true;
    lm_taken[p.lm] = true;
    out[p.obs] = {AssociationKind::kMatched, p.lm, p.d2};
  }
  const double new2 = params.new_distance * params.new_distance;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (obs_done[i]) continue;
    out[i].kind = nearest[i] > new2 ? AssociationKind::kNew : AssociationKind::kClutter;
  }
  return out;
}

std::vector<Association> associate(const Particle& p, std::span<const ConeObservation> obs,
                                   const SlamParams& params) {
  return associate(p.pose, p.landmarks, obs, params);
}

// Landmarks ---------------------------------------------------------------------------

Landmark update_landmark(const Landmark& lm, const ConeObservation& obs, const Pose2D& pose) {
  const Mat2 h = pose.rotation().transpose();
  const Vec2 nu = obs.pos_body - h * (lm.mean - pose.translation());
  const Mat2 s = h * lm.cov * h.transpose() + obs.cov;
  const Mat2 k = lm.cov * h.transpose() * s.inverse();
  Landmark out = lm;
  out.mean = lm.mean + k * nu;
  const Mat2 ikh = Mat2::Identity() - k * h;
  out.cov = ikh * lm.cov * ikh.transpose() + k * obs.cov * k.transpose();
  symmetrize(out.cov);
  auto& counts = out.color_counts[static_cast<std::size_t>(obs.modality)];
  for (std::size_t c = 0; c < kNumColors; ++c) counts[c] += obs.color_probs[c];
  ++out.n_obs;
  out.last_seen = obs.timestamp;
  return out;
}

Landmark init_landmark(const ConeObservation& obs, const Pose2D& pose, const SlamParams& params) {
  Landmark lm;
  lm.mean = to_world(pose, obs.pos_body);
  const Mat2 rot = pose.rotation();
  const double range2 = obs.pos_body.squaredNorm();
  Mat2 body = obs.cov + params.pose_sigma_xy * params.pose_sigma_xy * Mat2::Identity();
  if (range2 > 0.0) {
    const Vec2 tangent(-obs.pos_body.y(), obs.pos_body.x());
    body += params.pose_sigma_theta * params.pose_sigma_theta * tangent * tangent.transpose();
  }
  lm.cov = rot * body * rot.transpose();
  symmetrize(lm.cov);
  lm.color_counts[static_cast<std::size_t>(obs.modality)] = obs.color_probs;
  lm.n_obs = 1;
  lm.last_seen = obs.timestamp;
  return lm;
}

void weight_and_fuse(Particle& p, std::span<const ConeObservation> obs, std::span<const Association> decisions,
                     const SlamParams& params) {
  const double log_new = std::log(params.p_new);
  const double log_clutter = std::log(params.p_clutter);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const auto& d = decisions[i];
    switch (d.kind) {
      case AssociationKind::kMatched: {
        auto& lm = p.landmarks[d.landmark];
        const auto inn = innovation(p.pose, lm.mean, lm.cov, obs[i], params);
        p.log_weight += gaussian_log_likelihood(inn.nu, inn.s);
        lm = update_landmark(lm, obs[i], p.pose);
        break;
      }
      case AssociationKind::kNew:
        p.log_weight += log_new;
        p.landmarks.push_back(init_landmark(obs[i], p.pose, params));
        break;
      case AssociationKind::kClutter:
        p.log_weight += log_clutter;
        break;
    }
  }
}

void prune_landmarks(Particle& p, double now, const SlamParams& params) {
  const double r2 = params.footprint_radius * params.footprint_radius;
  std::erase_if(p.landmarks, [&](const Landmark& lm) {
    return lm.n_obs < params.min_observations && now - lm.last_seen > params.prune_age &&
           (lm.mean - p.pose.translation()).squaredNorm() < r2;
  });
}

// Weights and resampling --------------------------------------------------------------

double normalize_weights(std::span<Particle> particles) {
  if (particles.empty()) return 0.0;
  double top = -std::numeric_limits<double>::infinity();
  for (const auto& p : particles) top = std::max(top, p.log_weight);
  double sum = 0.0;
  for (const auto& p : particles) sum += std::exp(p.log_weight - top);
  const double log_norm = top + std::log(sum);
  for (auto& p : particles) p.log_weight -= log_norm;
  return effective_sample_size(particles);
}

double effective_sample_size(std::span<const Particle> particles) {
  double sum2 = 0.0;
  for (const auto& p : particles) sum2 += std::exp(2.0 * p.log_weight);
  return sum2 > 0.0 ? 1.0 / sum2 : 0.0;
}

std::vector<std::size_t> systematic_indices(std::span<const double> weights, double u) {
  const std::size_t n = weights.size();
  std::vector<std::size_t> out;
  out.reserve(n);
  double cumulative = weights.empty() ? 0.0 : weights[0];
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double target = (static_cast<double>(i) + u) / static_cast<double>(n);
    while (target > cumulative && j + 1 < n) cumulative += weights[++j];
    out.push_back(j);
  }
  return out;
}

bool resample(std::vector<Particle>& particles, Rng& rng) {
  const double n = static_cast<double>(particles.size());
  if (particles.empty() || !(effective_sample_size(particles) < 0.5 * n)) return false;
  std::vector<double> w(particles.size());
  std::transform(particles.begin(), particles.end(), w.begin(), [](const Particle& p) { return std::exp(p.log_weight); });
  const auto idx = systematic_indices(w, rng.uniform());
  std::vector<Particle> next;
  next.reserve(particles.size());
  for (const auto i : idx) {
    next.push_back(particles[i]);
    next.back().log_weight = -std::log(n);
  }
  particles = std::move(next);
  return true;
}

// Map -------------------------------------------------------------------------------

LandmarkColor fused_color(const Landmark& lm, const SlamParams& params) {
  std::array<double, kKnownColors.size()> score{};
  for (std::size_t m = 0; m < 2; ++m)
    for (std::size_t c = 0; c < score.size(); ++c) score[c] += params.modality_weight[m] * lm.color_counts[m][c];
  double total = 0.0;
  for (double s : score) total += s;
  if (!(total > 0.0)) return {};
  const auto top = static_cast<std::size_t>(std::max_element(score.begin(), score.end()) - score.begin());
  const double confidence = score[top] / total;
  if (confidence < params.min_confidence) return {ConeColor::kUnknown, confidence};
  return {kKnownColors[top], confidence};
}

namespace {

Landmark merge(const Landmark& a, const Landmark& b) {
  const Mat2 ia = a.cov.inverse(), ib = b.cov.inverse();
  Landmark out;
  out.cov = (ia + ib).inverse();
  symmetrize(out.cov);
  out.mean = out.cov * (ia * a.mean + ib * b.mean);
  for (std::size_t m = 0; m < 2; ++m)
    for (std::size_t c = 0; c < kNumColors; ++c) out.color_counts[m][c] = a.color_counts[m][c] + b.color_counts[m][c];
  out.n_obs = a.n_obs + b.n_obs;
  out.last_seen = std::max(a.last_seen, b.last_seen);
  return out;
}

const Particle& heaviest(std::span<const Particle> particles) {
  if (particles.empty()) throw std::invalid_argument("empty particle set");
  return *std::max_element(particles.begin(), particles.end(),
                           [](const Particle& a, const Particle& b) { return a.log_weight < b.log_weight; });
}

}  // namespace

ConeMap extract_map(std::span<const Particle> particles, const SlamParams& params) {
  const auto& best = heaviest(particles);
  std::vector<Landmark> kept;
  const double max_var = params.max_map_sigma * params.max_map_sigma;
  for (const auto& lm : best.landmarks) {
    if (lm.n_obs < params.min_observations) continue;
    if (Eigen::SelfAdjointEigenSolver<Mat2>(lm.cov, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff() > max_var) continue;
    kept.push_back(lm);
  }

  const double merge2 = params.merge_distance * params.merge_distance;
  for (;;) {
    double closest = merge2;
    std::size_t ia = 0, ib = 0;
    for (std::size_t i = 0; i < kept.size(); ++i)
      for (std::size_t j = i + 1; j < kept.size(); ++j) {
        const double d2 = (kept[i].mean - kept[j].mean).squaredNorm();
        if (d2 < closest) {
          closest = d2;
          ia = i;
          ib = j;
        }
      }
    if (closest >= merge2) break;
    kept[ia] = merge(kept[ia], kept[ib]);
    kept.erase(kept.begin() + static_cast<std::ptrdiff_t>(ib));
  }

  ConeMap map;
  map.reserve(kept.size());
  for (const auto& lm : kept) {
    const auto color = fused_color(lm, params);
    map.push_back({lm.mean, color.color, color.confidence, lm.cov});
  }
  return map;
}

void localization_update(std::span<Particle> particles, std::span<const ConeObservation> obs, const ConeMap& map,
                         const SlamParams& params) {
  if (obs.empty()) return;
  std::vector<Landmark> fixed(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) {
    fixed[i].mean = map[i].position;
    fixed[i].cov = map[i].cov;
  }
  const double log_clutter = std::log(params.p_clutter);
  for (auto& p : particles) {
    const auto decisions = associate(p.pose, fixed, obs, params);
    for (std::size_t i = 0; i < obs.size(); ++i) {
      if (decisions[i].kind != AssociationKind::kMatched) {
        p.log_weight += log_clutter;
        continue;
      }
      const auto& lm = fixed[decisions[i].landmark];
      const auto inn = innovation(p.pose, lm.mean, lm.cov, obs[i], params);
      p.log_weight += gaussian_log_likelihood(inn.nu, inn.s);
    }
  }
}

// Lap closure -----------------------------------------------------------------------

LapDetector::LapDetector(const Pose2D& start, const SlamParams& params)
    : start_(start), radius_(params.lap_radius), heading_(params.lap_heading), departure_(params.lap_departure) {}

bool LapDetector::update(const Pose2D& pose) {
  const double dist = (pose.translation() - start_.translation()).norm();
  if (dist > departure_) armed_ = true;
  if (!armed_ || dist >= radius_) return false;
  if (std::abs(wrap_angle(pose.theta() - start_.theta())) >= heading_) return false;
  armed_ = false;
  ++laps_;
  return true;
}

bool detect_lap(std::span<const Pose2D> history, const Pose2D& start, const SlamParams& params) {
  LapDetector det(start, params);
  for (const auto& p : history)
    if (det.update(p)) return true;
  return false;
}

// Filter ----------------------------------------------------------------------------

ConeSlam::ConeSlam(const SlamParams& params, std::uint64_t seed, const Pose2D& start)
    : params_(params), rng_(seed), laps_(start, params) {
  if (params.n_particles < 1) throw std::invalid_argument("n_particles must be at least 1");
  Particle p;
  p.pose = start;
  p.log_weight = -std::log(static_cast<double>(params.n_particles));
  particles_.assign(static_cast<std::size_t>(params.n_particles), p);
}

void ConeSlam::predict_to(double t) {
  if (!started_) {
    time_ = t;
    started_ = true;
    return;
  }
  while (t - time_ > 1e-12) {
    const double dt = std::min(params_.max_predict_dt, t - time_);
    if (vel_) predict_particles(particles_, *vel_, dt, rng_, params_);
    time_ += dt;
  }
}

void ConeSlam::process(const VelBelief& vel) {
  predict_to(vel.timestamp);
  vel_ = vel;
}

void ConeSlam::process(const ConeFrame& frame) {
  predict_to(frame.timestamp);
  if (mode_ == SlamMode::kMapping) {
    for (auto& p : particles_) {
      const auto decisions = associate(p, frame.cones, params_);
      weight_and_fuse(p, frame.cones, decisions, params_);
      prune_landmarks(p, frame.timestamp, params_);
    }
  } else {
    localization_update(particles_, frame.cones, frozen_, params_);
  }
  normalize_weights(particles_);
  resample(particles_, rng_);

  if (mode_ == SlamMode::kMapping && params_.freeze_on_lap && laps_.update(estimate().pose)) {
    lap_time_ = frame.timestamp;
    freeze_map();
  }
}

void ConeSlam::freeze_map() {
  frozen_ = extract_map(particles_, params_);
  mode_ = SlamMode::kLocalization;
}

void ConeSlam::localize_in(ConeMap map) {
  frozen_ = std::move(map);
  mode_ = SlamMode::kLocalization;
}

const Particle& ConeSlam::best_particle() const { return heaviest(particles_); }

ConeMap ConeSlam::map() const {
  return mode_ == SlamMode::kLocalization ? frozen_ : extract_map(particles_, params_);
}

SlamEstimate ConeSlam::estimate() const {
  SlamEstimate e;
  e.timestamp = time_;
  e.mode = mode_;
  e.n_particles = static_cast<int>(particles_.size());
  e.ess = effective_sample_size(particles_);
  double wsum = 0.0, c = 0.0, s = 0.0;
  Vec2 xy = Vec2::Zero();
  for (const auto& p : particles_) {
    const double w = std::exp(p.log_weight);
    wsum += w;
    xy += w * p.pose.translation();
    c += w * std::cos(p.pose.theta());
    s += w * std::sin(p.pose.theta());
  }
  if (wsum > 0.0) e.pose = Pose2D(xy / wsum, std::atan2(s, c));
  return e;
}

}  // namespace conestack
