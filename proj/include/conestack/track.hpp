#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "conestack/geom.hpp"
#include "conestack/rng.hpp"

namespace conestack {

enum class ConeColor { kBlue = 0, kYellow = 1, kOrange = 2, kUnknown = 3 };

inline constexpr std::size_t kNumColors = 4;
inline constexpr std::array<ConeColor, 3> kKnownColors = {ConeColor::kBlue, ConeColor::kYellow,
                                                          ConeColor::kOrange};

std::string_view to_string(ConeColor c);
ConeColor cone_color_from_string(std::string_view s);

/// Probability (or soft count) per ConeColor, indexed by the enum value.
using ColorProbs = std::array<double, kNumColors>;

inline double& at(ColorProbs& p, ConeColor c) { return p[static_cast<std::size_t>(c)]; }
inline double at(const ColorProbs& p, ConeColor c) { return p[static_cast<std::size_t>(c)]; }

struct Cone {
  Vec2 position = Vec2::Zero();
  ConeColor color = ConeColor::kUnknown;
};

/// Physical cone dimensions shared by the simulator and the LiDAR pipeline.
struct ConeGeometry {
  double base = 0.23;
  double height = 0.31;
  double big_height = 0.45;  // start-line orange cones

  double height_of(ConeColor c) const { return c == ConeColor::kOrange ? big_height : height; }
};

struct TrackParams {
  int n_waypoints = 200;
  double mean_radius = 48.0;
  double irregularity = 0.5;
  double track_width = 3.0;
  double cone_spacing = 4.0;
  double min_width = 3.0;
  double max_spacing = 5.0;
};

/// Closed track in the frame of its start pose (start_pose is the identity).
/// The car drives clockwise: left boundary (BLUE) is the outer one on a circle.
struct TrackSpec {
  std::vector<Vec2> centerline;  // closed: front() == back()
  std::vector<Cone> left_cones;
  std::vector<Cone> right_cones;
  Pose2D start_pose;
  double track_width = 0.0;

  std::vector<Cone> all_cones() const;
  double centerline_length() const;
};

bool operator==(const TrackSpec& a, const TrackSpec& b);

/// Procedural closed-loop track: radial Fourier perturbation of a circle,
/// boundaries by normal offset, cones by arc-length resampling.
/// Throws std::invalid_argument on bad parameters and std::runtime_error when
/// the offset boundaries self-intersect.
TrackSpec generate_track(Rng& rng, const TrackParams& params);

struct TrackCheck {
  bool ok = true;
  std::vector<std::string> problems;
};

/// Verifies every TrackSpec invariant.
TrackCheck validate_track(const TrackSpec& track, const TrackParams& params);

// Polyline helpers shared with the path follower.

/// Closed polyline with cumulative arc length; last point repeats the first.
class ClosedPath {
 public:
  explicit ClosedPath(std::vector<Vec2> points);

  double length() const { return cumulative_.back(); }
  std::size_t size() const { return points_.size(); }
  const std::vector<Vec2>& points() const { return points_; }
  double arc_at(std::size_t i) const { return cumulative_[i]; }

  Vec2 point_at(double s) const;
  double heading_at(double s) const;
  /// Signed curvature from three points spaced `ds` apart around s.
  double curvature_at(double s, double ds = 1.0) const;

  /// Arc length of the closest point, searching segments near `hint` first.
  double project(const Vec2& q, std::size_t* segment_hint = nullptr) const;

 private:
  std::size_t segment_of(double s) const;
  double wrap_s(double s) const;

  std::vector<Vec2> points_;
  std::vector<double> cumulative_;
};

bool segments_intersect(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2);

/// True if any two non-adjacent segments of the closed polyline cross.
bool closed_polyline_self_intersects(const std::vector<Vec2>& closed);

}  // namespace conestack
