#include "conestack/lidar.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>

namespace conestack::lidar {

double GroundPlane::height_at(double x, double y) const { return std::tan(pitch) * x + std::tan(roll) * y; }

std::array<double, 3> band_intensities(ConeColor c) {
  switch (c) {
    case ConeColor::kBlue:
      return {0.2, 0.8, 0.2};
    case ConeColor::kYellow:
      return {0.8, 0.2, 0.8};
    default:
      return {0.6, 0.6, 0.6};
  }
}

namespace {

struct CastCone {
  double cx, cy, base_z, height, slope;  // slope = radius / height
  double bearing, half_width;            // angular window seen from the sensor
  int label;
  ConeColor color;
};

// Nearest hit of the ray o + t*d with the lateral surface of a vertical cone.
std::optional<double> hit_cone(const Vec3& o, const Vec3& d, const CastCone& c) {
  const double apex = c.base_z + c.height;
  const double ux = o.x() - c.cx, uy = o.y() - c.cy, uz = o.z() - apex;
  const double k2 = c.slope * c.slope;
  const double a = d.x() * d.x() + d.y() * d.y() - k2 * d.z() * d.z();
  const double b = 2.0 * (ux * d.x() + uy * d.y() - k2 * uz * d.z());
  const double cc = ux * ux + uy * uy - k2 * uz * uz;
  const double disc = b * b - 4.0 * a * cc;
  if (disc < 0.0 || std::abs(a) < 1e-12) return std::nullopt;
  const double sq = std::sqrt(disc);
  double roots[2] = {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)};
  if (roots[0] > roots[1]) std::swap(roots[0], roots[1]);
  for (double t : roots) {
    if (t <= 0.0) continue;
    const double z = o.z() + t * d.z();
    if (z >= c.base_z && z <= apex) return t;
  }
  return std::nullopt;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

LabeledCloud synth_labeled(const Pose2D& sensor_pose, std::span<const Cone> cones, Rng& rng,
                           const ScanParams& p, const GroundPlane& ground) {
  LabeledCloud out;
  std::vector<CastCone> cast;
  for (std::size_t i = 0; i < cones.size(); ++i) {
    const Vec2 body = to_body(sensor_pose, cones[i].position);
    out.cones.push_back({body, cones[i].color});
    const double dist = body.norm();
    if (dist > p.max_range + 1.0) continue;
    const double h = p.cone.height_of(cones[i].color);
    const double radius = 0.5 * p.cone.base;
    const double half = dist > radius ? std::asin(radius / dist) : std::numbers::pi;
    cast.push_back({body.x(), body.y(), ground.height_at(body.x(), body.y()), h, radius / h,
                    std::atan2(body.y(), body.x()), half + p.res_h, static_cast<int>(i), cones[i].color});
  }

  const int n_az = static_cast<int>(std::lround(2.0 * std::numbers::pi / p.res_h));
  const Vec3 origin(0.0, 0.0, p.mount_height);
  const double gx = std::tan(ground.pitch), gy = std::tan(ground.roll);
  std::vector<const CastCone*> window;
  for (int a = 0; a < n_az; ++a) {
    const double az = -std::numbers::pi + (a + 0.5) * p.res_h;
    window.clear();
    for (const auto& c : cast)
      if (std::abs(wrap_angle(az - c.bearing)) <= c.half_width) window.push_back(&c);
    for (int k = 0; k < p.n_beams; ++k) {
      const double el = p.fov_low + k * p.res_v();
      const Vec3 dir(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
      double best = p.max_range;
      int label = -2;
      ConeColor color = ConeColor::kUnknown;
      double base_z = 0.0, height = 1.0;
      const double denom = gx * dir.x() + gy * dir.y() - dir.z();
      if (denom > 0.0) {
        const double t = p.mount_height / denom;
        if (t < best) {
          best = t;
          label = -1;
        }
      }
      for (const CastCone* c : window) {
        const auto t = hit_cone(origin, dir, *c);
        if (t && *t < best) {
          best = *t;
          label = c->label;
          color = c->color;
          base_z = c->base_z;
          height = c->height;
        }
      }
      if (label == -2) continue;
      const Vec3 hit = origin + best * dir;
      double intensity = p.ground_intensity;
      if (label >= 0) {
        const double rel = (hit.z() - base_z) / height;
        const auto bands = band_intensities(color);
        intensity = bands[rel < 1.0 / 3.0 ? 0 : rel < 2.0 / 3.0 ? 1 : 2];
      }
      const Vec3 noisy = origin + (best + p.sigma_range * rng.normal()) * dir;
      out.points.push_back({noisy.x(), noisy.y(), noisy.z(), clamp01(intensity + p.sigma_intensity * rng.normal())});
      out.labels.push_back(label);
    }
  }
  return out;
}

PointCloud synth_pointcloud(const VehicleState& truth, const TrackSpec& track, Rng& rng, const ScanParams& params,
                            const GroundPlane& ground) {
  const auto cones = track.all_cones();
  return synth_labeled(truth.pose, cones, rng, params, ground).points;
}

// Ground ------------------------------------------------------------------------

namespace {

int n_radial_cells(const GroundParams& p) { return static_cast<int>(std::ceil(p.max_range / p.cell_radial)); }

int sector_of(const GroundParams& p, double x, double y) {
  const double u = (std::atan2(y, x) + std::numbers::pi) / (2.0 * std::numbers::pi);
  return std::clamp(static_cast<int>(u * p.sector_count), 0, p.sector_count - 1);
}

}  // namespace

GroundModel::GroundModel(const GroundParams& params, std::vector<double> heights)
    : params_(params), n_radial_(n_radial_cells(params)), heights_(std::move(heights)) {
  if (heights_.size() != static_cast<std::size_t>(params_.sector_count * n_radial_))
    throw std::invalid_argument("GroundModel: grid size mismatch");
}

double GroundModel::height_at(double x, double y) const {
  const int s = sector_of(params_, x, y);
  const double u = std::hypot(x, y) / params_.cell_radial - 0.5;
  const int i0 = std::clamp(static_cast<int>(std::floor(u)), 0, n_radial_ - 1);
  const int i1 = std::min(i0 + 1, n_radial_ - 1);
  const double f = std::clamp(u - i0, 0.0, 1.0);
  const double* row = &heights_[static_cast<std::size_t>(s * n_radial_)];
  return (1.0 - f) * row[i0] + f * row[i1];
}

GroundModel estimate_ground(std::span<const LidarPoint> cloud, const GroundParams& p) {
  const int n_rad = n_radial_cells(p);
  const int n_cells = p.sector_count * n_rad;
  std::vector<std::vector<std::pair<double, double>>> cells(n_cells);  // (z, r)
  for (const auto& pt : cloud) {
    const double r = std::hypot(pt.x, pt.y);
    const int ring = static_cast<int>(r / p.cell_radial);
    if (ring >= n_rad) continue;
    cells[sector_of(p, pt.x, pt.y) * n_rad + ring].emplace_back(pt.z, r);
  }

  const double max_slope = std::tan(p.max_slope);
  std::vector<double> raw(n_cells, 0.0);
  for (int s = 0; s < p.sector_count; ++s) {
    // The sensor stands on the ground at the origin.
    double z_prev = 0.0, r_prev = 0.0, slope = 0.0;
    for (int i = 0; i < n_rad; ++i) {
      auto& cell = cells[s * n_rad + i];
      const double center = (i + 0.5) * p.cell_radial;
      if (!cell.empty()) {
        const auto q = static_cast<std::size_t>(p.quantile * static_cast<double>(cell.size() - 1));
        std::nth_element(cell.begin(), cell.begin() + static_cast<std::ptrdiff_t>(q), cell.end());
        const auto [z_c, r_c] = cell[q];
        const double dr = std::max(0.0, r_c - r_prev);
        const double z_pred = z_prev + slope * dr;
        if (z_c - z_pred <= p.gate + p.gate_per_m * dr) {
          if (dr > 0.3) slope = 0.5 * slope + 0.5 * std::clamp((z_c - z_prev) / dr, -max_slope, max_slope);
          z_prev = z_c;
          r_prev = r_c;
        }
      }
      raw[s * n_rad + i] = z_prev + slope * (center - r_prev);
    }
  }

  std::vector<double> smooth(n_cells, 0.0);
  for (int s = 0; s < p.sector_count; ++s) {
    for (int i = 0; i < n_rad; ++i) {
      double sum = 0.0;
      int n = 0;
      for (int ds = -1; ds <= 1; ++ds) {
        const int ss = (s + ds + p.sector_count) % p.sector_count;
        for (int di = -1; di <= 1; ++di) {
          const int ii = i + di;
          if (ii < 0 || ii >= n_rad) continue;
          sum += raw[ss * n_rad + ii];
          ++n;
        }
      }
      smooth[s * n_rad + i] = sum / n;
    }
  }
  return GroundModel(p, std::move(smooth));
}

PointCloud remove_ground(std::span<const LidarPoint> cloud, const GroundModel& ground, double z_margin) {
  PointCloud out;
  for (const auto& pt : cloud)
    if (pt.z >= ground.height_at(pt.x, pt.y) + z_margin) out.push_back(pt);
  return out;
}

PointCloud remove_ground(std::span<const LidarPoint> cloud, const GroundParams& params) {
  if (cloud.empty()) return {};
  return remove_ground(cloud, estimate_ground(cloud, params), params.z_margin);
}

// Clustering ----------------------------------------------------------------------

std::vector<Cluster> cluster(std::span<const LidarPoint> cloud, double eps, int min_pts) {
  if (!(eps > 0.0)) throw std::invalid_argument("cluster: eps must be positive");
  std::vector<Cluster> out;
  if (cloud.empty()) return out;

  auto key = [](std::int64_t cx, std::int64_t cy) { return (cx << 32) ^ (cy & 0xffffffff); };
  std::unordered_map<std::int64_t, std::vector<std::size_t>> grid;
  auto cell_of = [eps](double v) { return static_cast<std::int64_t>(std::floor(v / eps)); };
  for (std::size_t i = 0; i < cloud.size(); ++i) grid[key(cell_of(cloud[i].x), cell_of(cloud[i].y))].push_back(i);

  const double eps2 = eps * eps;
  auto neighbours = [&](std::size_t i, std::vector<std::size_t>& nb) {
    nb.clear();
    const auto cx = cell_of(cloud[i].x), cy = cell_of(cloud[i].y);
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        const auto it = grid.find(key(cx + dx, cy + dy));
        if (it == grid.end()) continue;
        for (std::size_t j : it->second) {
          const double ex = cloud[j].x - cloud[i].x, ey = cloud[j].y - cloud[i].y;
          if (ex * ex + ey * ey <= eps2) nb.push_back(j);
        }
      }
    }
  };

  constexpr int kUnvisited = -2, kNoise = -1;
  std::vector<int> label(cloud.size(), kUnvisited);
  std::vector<std::size_t> nb, frontier;
  int next_id = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (label[i] != kUnvisited) continue;
    neighbours(i, nb);
    if (static_cast<int>(nb.size()) < min_pts) {
      label[i] = kNoise;
      continue;
    }
    const int id = next_id++;
    label[i] = id;
    frontier.assign(nb.begin(), nb.end());
    while (!frontier.empty()) {
      const std::size_t j = frontier.back();
      frontier.pop_back();
      if (label[j] == kNoise) label[j] = id;  // border point
      if (label[j] != kUnvisited) continue;
      label[j] = id;
      neighbours(j, nb);
      if (static_cast<int>(nb.size()) >= min_pts) frontier.insert(frontier.end(), nb.begin(), nb.end());
    }
  }

  out.resize(static_cast<std::size_t>(next_id));
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (label[i] >= 0) out[static_cast<std::size_t>(label[i])].indices.push_back(i);
  for (auto& c : out) {
    Vec3 lo = Vec3::Constant(1e300), hi = Vec3::Constant(-1e300), sum = Vec3::Zero();
    for (std::size_t i : c.indices) {
      const Vec3 v(cloud[i].x, cloud[i].y, cloud[i].z);
      sum += v;
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
    c.centroid = sum / static_cast<double>(c.indices.size());
    c.extent = hi - lo;
  }
  return out;
}

// Filtering and color -----------------------------------------------------------

double expected_points(double d, const ScanParams& scan) {
  const double rows = scan.cone.height / (2.0 * d * std::tan(scan.res_v() / 2.0));
  const double cols = scan.cone.base / (2.0 * d * std::tan(scan.res_h / 2.0));
  return 0.5 * rows * cols;
}

std::vector<ConeCandidate> filter_cones(std::span<const Cluster> clusters, std::span<const LidarPoint> cloud,
                                        const ScanParams& scan, const FilterParams& params,
                                        const GroundModel* ground) {
  std::vector<ConeCandidate> out;
  const double max_xy = params.extent_factor * scan.cone.base;
  const double max_z = params.extent_factor * std::max(scan.cone.height, scan.cone.big_height);
  const int k = params.n_bands;
  for (const auto& c : clusters) {
    const Vec2 xy = c.centroid.head<2>();
    const double d = xy.norm();
    const double n = static_cast<double>(c.indices.size());
    const double expected = expected_points(d, scan);
    if (n < params.beta_lo * expected || n > params.beta_hi * expected) continue;
    if (c.extent.x() > max_xy || c.extent.y() > max_xy || c.extent.z() > max_z) continue;

    std::vector<double> sum(k, 0.0);
    std::vector<int> count(k, 0);
    double depth = 0.0;
    for (std::size_t i : c.indices) {
      const auto& pt = cloud[i];
      const double rel = pt.z - (ground ? ground->height_at(pt.x, pt.y) : 0.0);
      const int band = std::clamp(static_cast<int>(std::floor(rel / scan.cone.height * k)), 0, k - 1);
      sum[band] += pt.intensity;
      ++count[band];
      // Visible surface points sit on average pi/4 of the local radius in front of the axis.
      depth += std::numbers::pi / 4.0 * 0.5 * scan.cone.base * std::max(0.0, 1.0 - rel / scan.cone.height);
    }
    double filled = 0.0;
    int n_filled = 0;
    for (int b = 0; b < k; ++b) {
      if (count[b] == 0) continue;
      sum[b] /= count[b];
      filled += sum[b];
      ++n_filled;
    }
    const double fill = filled / n_filled;
    for (int b = 0; b < k; ++b)
      if (count[b] == 0) sum[b] = fill;

    ConeCandidate cand;
    cand.pos_sensor = d > 1e-9 ? Vec2(xy + (depth / n) * xy / d) : xy;
    cand.n_points = static_cast<int>(c.indices.size());
    cand.intensity_profile = std::move(sum);
    out.push_back(std::move(cand));
  }
  return out;
}

ColorProbs classify_color(std::span<const double> profile, int n_points, const ColorParams& params) {
  const int k = static_cast<int>(profile.size());
  if (k < 3) throw std::invalid_argument("classify_color: profile needs at least 3 bands");
  for (double v : profile)
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("classify_color: band value outside [0, 1]");
  constexpr double third = 1.0 / 3.0;
  if (n_points < 2 * k) return {third, third, third, 0.0};

  double mid_sum = 0.0, mid_w = 0.0, out_sum = 0.0, out_w = 0.0, mean = 0.0;
  for (int b = 0; b < k; ++b) {
    const double lo = static_cast<double>(b) / k, hi = static_cast<double>(b + 1) / k;
    const double w_mid = std::max(0.0, std::min(hi, 2.0 * third) - std::max(lo, third)) * k;
    mid_sum += w_mid * profile[b];
    mid_w += w_mid;
    out_sum += (1.0 - w_mid) * profile[b];
    out_w += 1.0 - w_mid;
    mean += profile[b];
  }
  mean /= k;
  double var = 0.0;
  for (double v : profile) var += (v - mean) * (v - mean);
  var /= k;

  const double contrast = mid_sum / mid_w - out_sum / out_w;
  const double s = 1.0 / (1.0 + std::exp(-contrast / params.tau));
  const double p_orange = params.flat_max * std::exp(-var / params.flat_variance);
  ColorProbs probs{s * (1.0 - p_orange), (1.0 - s) * (1.0 - p_orange), p_orange, 0.0};
  const double total = probs[0] + probs[1] + probs[2];
  for (double& v : probs) v /= total;
  return probs;
}

bool is_uniform(const ColorProbs& probs) {
  return std::abs(probs[0] - probs[1]) < 1e-12 && std::abs(probs[1] - probs[2]) < 1e-12;
}

ConeObservation to_observation(const ConeCandidate& c, double timestamp, const LidarModelParams& noise,
                               const ColorParams& color) {
  ConeObservation obs;
  obs.pos_body = c.pos_sensor;
  const double sigma = lidar_sigma(noise, c.pos_sensor.norm());
  obs.cov = sigma * sigma * Cov2::Identity();
  obs.color_probs = classify_color(c.intensity_profile, c.n_points, color);
  obs.modality = Modality::kLidar;
  obs.timestamp = timestamp;
  return obs;
}

std::vector<ConeObservation> process_scan(std::span<const LidarPoint> cloud, double timestamp,
                                          const PipelineParams& params, const LidarModelParams& noise) {
  std::vector<ConeObservation> out;
  if (cloud.empty()) return out;
  const GroundModel ground = estimate_ground(cloud, params.ground);
  const PointCloud above = remove_ground(cloud, ground, params.ground.z_margin);
  const auto clusters = cluster(above, params.eps, params.min_pts);
  for (const auto& cand : filter_cones(clusters, above, params.scan, params.filter, &ground)) {
    if (cand.pos_sensor.norm() > noise.range) continue;
    out.push_back(to_observation(cand, timestamp, noise, params.color));
  }
  return out;
}

}  // namespace conestack::lidar

namespace conestack::lidar {

DetectionTally& DetectionTally::operator+=(const DetectionTally& o) {
  cones_in_range += o.cones_in_range;
  cones_found += o.cones_found;
  detections_in_range += o.detections_in_range;
  detections_matched += o.detections_matched;
  color_in_range += o.color_in_range;
  color_decisive += o.color_decisive;
  color_correct += o.color_correct;
  return *this;
}

double DetectionTally::recall() const {
  return cones_in_range == 0 ? 1.0 : static_cast<double>(cones_found) / cones_in_range;
}
double DetectionTally::precision() const {
  return detections_in_range == 0 ? 1.0 : static_cast<double>(detections_matched) / detections_in_range;
}
double DetectionTally::color_accuracy() const {
  return color_decisive == 0 ? 1.0 : static_cast<double>(color_correct) / color_decisive;
}

DetectionTally tally_detections(std::span<const ConeObservation> detections, std::span<const Cone> truth,
                                double detect_radius, double color_radius, double match_radius) {
  DetectionTally t;
  auto nearest = [&](const Vec2& p) {
    std::ptrdiff_t best = -1;
    double best_d = match_radius;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const double d = (truth[i].position - p).norm();
      if (d <= best_d) {
        best_d = d;
        best = static_cast<std::ptrdiff_t>(i);
      }
    }
    return best;
  };
  std::vector<bool> found(truth.size(), false);
  for (const auto& obs : detections) {
    const auto idx = nearest(obs.pos_body);
    if (idx >= 0) found[static_cast<std::size_t>(idx)] = true;
    if (obs.pos_body.norm() > detect_radius) continue;
    ++t.detections_in_range;
    if (idx < 0) continue;
    ++t.detections_matched;
    const Cone& cone = truth[static_cast<std::size_t>(idx)];
    if (cone.position.norm() > color_radius) continue;
    ++t.color_in_range;
    if (is_uniform(obs.color_probs)) continue;
    ++t.color_decisive;
    const auto best = std::max_element(obs.color_probs.begin(), obs.color_probs.end()) - obs.color_probs.begin();
    t.color_correct += static_cast<ConeColor>(best) == cone.color;
  }
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i].position.norm() > detect_radius) continue;
    ++t.cones_in_range;
    t.cones_found += found[i];
  }
  return t;
}

}  // namespace conestack::lidar
