#include "conestack/track.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace conestack {

std::string_view to_string(ConeColor c) {
  switch (c) {
    case ConeColor::kBlue:
      return "BLUE";
    case ConeColor::kYellow:
      return "YELLOW";
    case ConeColor::kOrange:
      return "ORANGE";
    case ConeColor::kUnknown:
      return "UNKNOWN";
  }
  return "UNKNOWN";
}

ConeColor cone_color_from_string(std::string_view s) {
  if (s == "BLUE") return ConeColor::kBlue;
  if (s == "YELLOW") return ConeColor::kYellow;
  if (s == "ORANGE") return ConeColor::kOrange;
  if (s == "UNKNOWN") return ConeColor::kUnknown;
  throw std::invalid_argument("unknown cone color '" + std::string(s) + "'");
}

std::vector<Cone> TrackSpec::all_cones() const {
  std::vector<Cone> out = left_cones;
  out.insert(out.end(), right_cones.begin(), right_cones.end());
  return out;
}

double TrackSpec::centerline_length() const {
  double len = 0.0;
  for (std::size_t i = 1; i < centerline.size(); ++i) len += (centerline[i] - centerline[i - 1]).norm();
  return len;
}

namespace {

bool same_points(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

bool same_cones(const std::vector<Cone>& a, const std::vector<Cone>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].position != b[i].position || a[i].color != b[i].color) return false;
  return true;
}

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

struct Harmonic {
  int order;
  double amplitude;
  double phase;
};

// Closed curve r(phi) = R (1 + sum a_k cos(k phi + psi_k)), traversed with
// decreasing phi so the motion is clockwise.
struct RadialCurve {
  double radius;
  std::vector<Harmonic> harmonics;

  double r(double phi) const {
    double v = 1.0;
    for (const auto& h : harmonics) v += h.amplitude * std::cos(h.order * phi + h.phase);
    return radius * v;
  }
  double dr(double phi) const {
    double v = 0.0;
    for (const auto& h : harmonics) v -= h.amplitude * h.order * std::sin(h.order * phi + h.phase);
    return radius * v;
  }
  Vec2 point(double phi) const { return r(phi) * Vec2(std::cos(phi), std::sin(phi)); }
  // Unit direction of travel (phi decreasing).
  Vec2 tangent(double phi) const {
    const Vec2 d = dr(phi) * Vec2(std::cos(phi), std::sin(phi)) + r(phi) * Vec2(-std::sin(phi), std::cos(phi));
    return -d.normalized();
  }
};

std::vector<Cone> place_cones(const std::vector<Vec2>& closed, double spacing, ConeColor color) {
  ClosedPath path(closed);
  const double len = path.length();
  const auto n = static_cast<std::size_t>(std::ceil(len / spacing - 1e-12));
  std::vector<Cone> cones;
  cones.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = len * static_cast<double>(i) / static_cast<double>(n);
    cones.push_back({path.point_at(s), i == 0 ? ConeColor::kOrange : color});
  }
  return cones;
}

}  // namespace

bool operator==(const TrackSpec& a, const TrackSpec& b) {
  return same_points(a.centerline, b.centerline) && same_cones(a.left_cones, b.left_cones) &&
         same_cones(a.right_cones, b.right_cones) && a.start_pose == b.start_pose &&
         a.track_width == b.track_width;
}

TrackSpec generate_track(Rng& rng, const TrackParams& params) {
  if (!(params.track_width >= params.min_width))
    throw std::invalid_argument("generate_track: track_width " + std::to_string(params.track_width) +
                                " below minimum " + std::to_string(params.min_width));
  if (!(params.cone_spacing > 0.5 && params.cone_spacing <= 5.0 && params.cone_spacing <= params.max_spacing))
    throw std::invalid_argument("generate_track: cone_spacing must lie in (0.5, min(5, max_spacing)]");
  if (params.n_waypoints < 8) throw std::invalid_argument("generate_track: n_waypoints must be >= 8");
  if (!(params.mean_radius > 0.0)) throw std::invalid_argument("generate_track: mean_radius must be positive");
  if (!(params.irregularity >= 0.0 && params.irregularity <= 1.0))
    throw std::invalid_argument("generate_track: irregularity must lie in [0, 1]");

  RadialCurve curve{params.mean_radius, {}};
  const int n_harmonics = 3 + static_cast<int>(rng.uniform_index(4));
  for (int j = 0; j < n_harmonics; ++j) {
    const int order = j + 2;
    const double amplitude = params.irregularity * 0.12 * rng.uniform(0.4, 1.0) / order;
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    curve.harmonics.push_back({order, amplitude, phase});
  }

  const double half_width = 0.5 * params.track_width;
  const int dense = std::max(4 * params.n_waypoints, 2000);
  const Pose2D start(curve.point(0.0), std::atan2(curve.tangent(0.0).y(), curve.tangent(0.0).x()));
  const Pose2D to_start = inverse(start);
  auto to_track_frame = [&](const Vec2& p) { return to_world(to_start, p); };

  std::vector<Vec2> left;
  std::vector<Vec2> right;
  left.reserve(dense + 1);
  right.reserve(dense + 1);
  for (int i = 0; i < dense; ++i) {
    const double phi = -2.0 * std::numbers::pi * i / dense;
    const Vec2 c = curve.point(phi);
    const Vec2 t = curve.tangent(phi);
    const Vec2 n(-t.y(), t.x());
    left.push_back(to_track_frame(c + half_width * n));
    right.push_back(to_track_frame(c - half_width * n));
  }
  left.push_back(left.front());
  right.push_back(right.front());

  // Offsetting by more than the local radius of curvature folds the boundary.
  for (int i = 0; i < dense; ++i) {
    const double phi = -2.0 * std::numbers::pi * i / dense;
    const double h = 1e-4;
    const Vec2 t0 = curve.tangent(phi + h);
    const Vec2 t1 = curve.tangent(phi - h);
    const double ds = (curve.point(phi - h) - curve.point(phi + h)).norm();
    const double kappa = std::abs(cross(t0, t1)) / ds;
    if (kappa * half_width >= 0.9) {
      std::ostringstream msg;
      msg << "generate_track: infeasible parameters: radius of curvature " << 1.0 / kappa << " m at phi=" << phi
          << " is below the half track width " << half_width << " m";
      throw std::runtime_error(msg.str());
    }
  }
  if (closed_polyline_self_intersects(left) || closed_polyline_self_intersects(right))
    throw std::runtime_error("generate_track: infeasible parameters: offset boundary self-intersects");

  TrackSpec track;
  track.track_width = params.track_width;
  track.start_pose = Pose2D::identity();
  track.centerline.reserve(params.n_waypoints + 1);
  for (int i = 0; i < params.n_waypoints; ++i) {
    const double phi = -2.0 * std::numbers::pi * i / params.n_waypoints;
    track.centerline.push_back(to_track_frame(curve.point(phi)));
  }
  track.centerline[0] = Vec2::Zero();
  track.centerline.push_back(track.centerline.front());
  track.left_cones = place_cones(left, params.cone_spacing, ConeColor::kBlue);
  track.right_cones = place_cones(right, params.cone_spacing, ConeColor::kYellow);
  return track;
}

TrackCheck validate_track(const TrackSpec& track, const TrackParams& params) {
  TrackCheck check;
  auto fail = [&](std::string msg) {
    check.ok = false;
    check.problems.push_back(std::move(msg));
  };
  if (track.centerline.size() < 4) fail("centerline has fewer than 4 points");
  else if ((track.centerline.front() - track.centerline.back()).norm() > 1e-6) fail("centerline not closed");
  else if (closed_polyline_self_intersects(track.centerline)) fail("centerline self-intersects");
  if (!(track.track_width >= params.min_width)) fail("track width below minimum");

  auto check_side = [&](const std::vector<Cone>& cones, ConeColor expected, const char* side) {
    if (cones.size() < 3) {
      fail(std::string(side) + " boundary has fewer than 3 cones");
      return;
    }
    bool has_orange = false;
    for (std::size_t i = 0; i < cones.size(); ++i) {
      const auto& c = cones[i];
      if (c.color == ConeColor::kOrange) has_orange = true;
      else if (c.color != expected) fail(std::string(side) + " cone " + std::to_string(i) + " has wrong color");
      const auto& next = cones[(i + 1) % cones.size()];
      if ((next.position - c.position).norm() > params.max_spacing + 1e-9)
        fail(std::string(side) + " cone spacing exceeds maximum at index " + std::to_string(i));
    }
    if (!has_orange) fail(std::string(side) + " boundary has no start-line cone");
    std::vector<Vec2> loop;
    for (const auto& c : cones) loop.push_back(c.position);
    loop.push_back(loop.front());
    if (closed_polyline_self_intersects(loop)) fail(std::string(side) + " cone boundary self-intersects");
  };
  check_side(track.left_cones, ConeColor::kBlue, "left");
  check_side(track.right_cones, ConeColor::kYellow, "right");
  return check;
}

// ClosedPath ------------------------------------------------------------------

ClosedPath::ClosedPath(std::vector<Vec2> points) : points_(std::move(points)) {
  if (points_.size() < 3) throw std::invalid_argument("ClosedPath: need at least 3 points");
  if ((points_.front() - points_.back()).norm() > 1e-9) points_.push_back(points_.front());
  cumulative_.resize(points_.size(), 0.0);
  for (std::size_t i = 1; i < points_.size(); ++i)
    cumulative_[i] = cumulative_[i - 1] + (points_[i] - points_[i - 1]).norm();
}

double ClosedPath::wrap_s(double s) const {
  const double len = length();
  s = std::fmod(s, len);
  if (s < 0.0) s += len;
  return s;
}

std::size_t ClosedPath::segment_of(double s) const {
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
  std::size_t idx = it == cumulative_.begin() ? 0 : static_cast<std::size_t>(it - cumulative_.begin()) - 1;
  return std::min(idx, points_.size() - 2);
}

Vec2 ClosedPath::point_at(double s) const {
  s = wrap_s(s);
  const std::size_t i = segment_of(s);
  const double seg = cumulative_[i + 1] - cumulative_[i];
  const double f = seg > 0.0 ? (s - cumulative_[i]) / seg : 0.0;
  return points_[i] + f * (points_[i + 1] - points_[i]);
}

double ClosedPath::heading_at(double s) const {
  const std::size_t i = segment_of(wrap_s(s));
  const Vec2 d = points_[i + 1] - points_[i];
  return std::atan2(d.y(), d.x());
}

double ClosedPath::curvature_at(double s, double ds) const {
  const Vec2 a = point_at(s - ds);
  const Vec2 b = point_at(s);
  const Vec2 c = point_at(s + ds);
  const double area2 = cross(b - a, c - a);
  const double denom = (b - a).norm() * (c - b).norm() * (c - a).norm();
  return denom > 0.0 ? 2.0 * area2 / denom : 0.0;
}

double ClosedPath::project(const Vec2& q, std::size_t* segment_hint) const {
  const std::size_t n_seg = points_.size() - 1;
  auto project_segment = [&](std::size_t i, double& best_d2, double& best_s, std::size_t& best_i) {
    const Vec2 a = points_[i];
    const Vec2 d = points_[i + 1] - a;
    const double len2 = d.squaredNorm();
    const double f = len2 > 0.0 ? std::clamp((q - a).dot(d) / len2, 0.0, 1.0) : 0.0;
    const double d2 = (a + f * d - q).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best_s = cumulative_[i] + f * std::sqrt(len2);
      best_i = i;
    }
  };
  double best_d2 = std::numeric_limits<double>::infinity();
  double best_s = 0.0;
  std::size_t best_i = 0;
  if (segment_hint != nullptr && *segment_hint < n_seg) {
    const std::size_t window = std::min<std::size_t>(n_seg, 24);
    for (std::size_t k = 0; k < window; ++k) {
      project_segment((*segment_hint + n_seg - 4 + k) % n_seg, best_d2, best_s, best_i);
    }
  } else {
    for (std::size_t i = 0; i < n_seg; ++i) project_segment(i, best_d2, best_s, best_i);
  }
  if (segment_hint != nullptr) *segment_hint = best_i;
  return best_s;
}

bool segments_intersect(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
  const double d1 = cross(q2 - q1, p1 - q1);
  const double d2 = cross(q2 - q1, p2 - q1);
  const double d3 = cross(p2 - p1, q1 - p1);
  const double d4 = cross(p2 - p1, q2 - p1);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

bool closed_polyline_self_intersects(const std::vector<Vec2>& closed) {
  const std::size_t n_seg = closed.size() - 1;
  struct Box {
    double x0, x1, y0, y1;
  };
  std::vector<Box> boxes(n_seg);
  for (std::size_t i = 0; i < n_seg; ++i) {
    const auto& a = closed[i];
    const auto& b = closed[i + 1];
    boxes[i] = {std::min(a.x(), b.x()), std::max(a.x(), b.x()), std::min(a.y(), b.y()), std::max(a.y(), b.y())};
  }
  for (std::size_t i = 0; i < n_seg; ++i) {
    for (std::size_t j = i + 2; j < n_seg; ++j) {
      if (i == 0 && j == n_seg - 1) continue;  // adjacent through the closure
      const auto& bi = boxes[i];
      const auto& bj = boxes[j];
      if (bi.x1 < bj.x0 || bj.x1 < bi.x0 || bi.y1 < bj.y0 || bj.y1 < bi.y0) continue;
      if (segments_intersect(closed[i], closed[i + 1], closed[j], closed[j + 1])) return true;
    }
  }
  return false;
}

}  // namespace conestack
