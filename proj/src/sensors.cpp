#include "conestack/sensors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace conestack {

std::string_view to_string(Modality m) { return m == Modality::kLidar ? "LIDAR" : "CAMERA"; }

Modality modality_from_string(std::string_view s) {
  if (s == "LIDAR") return Modality::kLidar;
  if (s == "CAMERA") return Modality::kCamera;
  throw std::invalid_argument("unknown modality '" + std::string(s) + "'");
}

bool operator==(const ConeObservation& a, const ConeObservation& b) {
  return a.pos_body == b.pos_body && a.cov == b.cov && a.color_probs == b.color_probs && a.modality == b.modality &&
         a.timestamp == b.timestamp;
}

bool operator==(const ConeFrame& a, const ConeFrame& b) {
  return a.timestamp == b.timestamp && a.modality == b.modality && a.cones == b.cones;
}

double lidar_sigma(const LidarModelParams& p, double range) { return p.sigma0 + p.sigma_k * range; }

double lidar_detection_probability(const LidarModelParams& p, double range) {
  if (range > p.range) return 0.0;
  if (range <= p.det_falloff_start) return p.p_det_near;
  const double f = (range - p.det_falloff_start) / std::max(1e-9, p.range - p.det_falloff_start);
  return p.p_det_near + f * (p.p_det_far - p.p_det_near);
}

double lidar_color_probability(const LidarModelParams& p, double range) {
  return std::clamp(1.0 - range / p.color_range, p.p_color_floor, p.p_color_ceil);
}

Cov2 camera_covariance(const CameraModelParams& p, const Vec2& pos_body) {
  const double r = pos_body.norm();
  const double sd = p.depth_coeff * r * r;
  const double st = p.tangential0 + p.tangential_k * r;
  const Mat2 rot = rotation(std::atan2(pos_body.y(), pos_body.x()));
  Cov2 cov = rot * Eigen::Vector2d(sd * sd, st * st).asDiagonal() * rot.transpose();
  symmetrize(cov);
  return cov;
}

ColorProbs reported_color_probs(ConeColor truth, double p_correct, Rng& rng) {
  ConeColor reported = truth;
  if (!rng.bernoulli(p_correct)) {
    // Uniform over the two other known colors.
    std::array<ConeColor, 2> others{};
    std::size_t n = 0;
    for (ConeColor c : kKnownColors)
      if (c != truth) others[n++] = c;
    reported = others[rng.uniform_index(2)];
  }
  ColorProbs probs{};
  for (ConeColor c : kKnownColors) at(probs, c) = (c == reported) ? p_correct : 0.5 * (1.0 - p_correct);
  return probs;
}

namespace {

ConeColor random_known_color(Rng& rng) { return kKnownColors[rng.uniform_index(kKnownColors.size())]; }

ConeObservation lidar_observation(const Vec2& body, ConeColor color, Rng& rng, const LidarModelParams& p, double t) {
  const double r = body.norm();
  const double sigma = lidar_sigma(p, r);
  ConeObservation obs;
  obs.pos_body = body + sigma * Vec2(rng.normal(), rng.normal());
  obs.cov = sigma * sigma * Cov2::Identity();
  obs.modality = Modality::kLidar;
  obs.timestamp = t;
  if (r < p.color_range) {
    obs.color_probs = reported_color_probs(color, lidar_color_probability(p, r), rng);
  } else {
    obs.color_probs = {0.0, 0.0, 0.0, 1.0};
  }
  return obs;
}

ConeObservation camera_observation(const Vec2& body, ConeColor color, Rng& rng, const CameraModelParams& p,
                                   double t) {
  const double r = body.norm();
  const double bearing = std::atan2(body.y(), body.x());
  const double sd = p.depth_coeff * r * r;
  const double st = p.tangential0 + p.tangential_k * r;
  const Vec2 radial(std::cos(bearing), std::sin(bearing));
  const Vec2 tangential(-radial.y(), radial.x());
  ConeObservation obs;
  obs.pos_body = body + sd * rng.normal() * radial + st * rng.normal() * tangential;
  obs.cov = camera_covariance(p, body);
  obs.modality = Modality::kCamera;
  obs.timestamp = t;
  obs.color_probs = reported_color_probs(color, p.p_color, rng);
  return obs;
}

bool in_camera_view(const Vec2& body, const CameraModelParams& p) {
  const double r = body.norm();
  return r <= p.range && body.x() > 0.0 && std::abs(std::atan2(body.y(), body.x())) <= p.half_fov;
}

}  // namespace

std::vector<ConeObservation> sample_lidar_cones(const VehicleState& truth, const TrackSpec& track, Rng& rng,
                                                const LidarModelParams& p) {
  std::vector<ConeObservation> out;
  if (!p.enabled) return out;
  const double t = truth.timestamp;
  for (const auto& cone : track.all_cones()) {
    const Vec2 body = to_body(truth.pose, cone.position);
    const double r = body.norm();
    if (r > p.range) continue;
    if (!rng.bernoulli(lidar_detection_probability(p, r))) continue;
    ConeObservation obs = lidar_observation(body, cone.color, rng, p, t);
    if (obs.pos_body.norm() <= p.range) out.push_back(std::move(obs));
  }
  const int n_fp = rng.poisson(p.fp_rate);
  for (int i = 0; i < n_fp; ++i) {
    const double rad = p.range * std::sqrt(rng.uniform());
    const double ang = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const Vec2 body = rad * Vec2(std::cos(ang), std::sin(ang));
    ConeObservation obs = lidar_observation(body, random_known_color(rng), rng, p, t);
    if (obs.pos_body.norm() <= p.range) out.push_back(std::move(obs));
  }
  return out;
}

std::vector<ConeObservation> sample_camera_cones(const VehicleState& truth, const TrackSpec& track, Rng& rng,
                                                 const CameraModelParams& p) {
  std::vector<ConeObservation> out;
  if (!p.enabled) return out;
  const double t = truth.timestamp;
  for (const auto& cone : track.all_cones()) {
    const Vec2 body = to_body(truth.pose, cone.position);
    if (!in_camera_view(body, p)) continue;
    if (!rng.bernoulli(p.p_det)) continue;
    ConeObservation obs = camera_observation(body, cone.color, rng, p, t);
    if (in_camera_view(obs.pos_body, p)) out.push_back(std::move(obs));
  }
  const int n_fp = rng.poisson(p.fp_rate);
  for (int i = 0; i < n_fp; ++i) {
    const double rad = p.range * std::sqrt(rng.uniform());
    const double ang = rng.uniform(-p.half_fov, p.half_fov);
    const Vec2 body = rad * Vec2(std::cos(ang), std::sin(ang));
    ConeObservation obs = camera_observation(body, random_known_color(rng), rng, p, t);
    if (in_camera_view(obs.pos_body, p)) out.push_back(std::move(obs));
  }
  return out;
}

WheelSpeeds sample_wheel_speeds(const VehicleState& truth, Rng& rng, const WheelModelParams& p) {
  WheelSpeeds w;
  w.timestamp = truth.timestamp;
  w.steering = truth.input.steering;
  for (int i = 0; i < 4; ++i) w.omegas[i] = truth.wheel_omegas[i] + p.sigma * rng.normal();
  return w;
}

ImuSample sample_imu(const VehicleState& truth, Rng& rng, const ImuModelParams& p) {
  ImuSample s;
  s.timestamp = truth.timestamp;
  s.ax = truth.accel.x() + p.bias_ax + p.sigma_accel * rng.normal();
  s.ay = truth.accel.y() + p.bias_ay + p.sigma_accel * rng.normal();
  s.gz = truth.vel.r + p.bias_gz + p.sigma_gyro * rng.normal();
  return s;
}

GssSample sample_gss(const VehicleState& truth, Rng& rng, const GssModelParams& p) {
  GssSample g;
  g.timestamp = truth.timestamp;
  g.vx = truth.vel.vx + p.sigma * rng.normal();
  g.vy = truth.vel.vy + p.sigma * rng.normal();
  return g;
}

bool observation_is_valid(const ConeObservation& obs, double max_range) {
  double sum = 0.0;
  for (double p : obs.color_probs) {
    if (!(p >= 0.0)) return false;
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) return false;
  if (!is_valid_covariance(obs.cov)) return false;
  return obs.pos_body.allFinite() && obs.pos_body.norm() <= max_range;
}

}  // namespace conestack
