#pragma once

#include <array>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "conestack/geom.hpp"
#include "conestack/rng.hpp"
#include "conestack/sensors.hpp"
#include "conestack/track.hpp"
#include "conestack/vehicle.hpp"

namespace conestack::lidar {

constexpr double kDeg = std::numbers::pi / 180.0;

/// One return in the sensor frame: body-frame x/y axes, origin on the ground
/// directly below the sensor, z up.
struct LidarPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;
  bool operator==(const LidarPoint&) const = default;
};

using PointCloud = std::vector<LidarPoint>;

struct ScanParams {
  int n_beams = 16;
  double fov_low = -15.0 * kDeg;
  double fov_high = 15.0 * kDeg;
  double res_h = 0.2 * kDeg;
  double mount_height = 0.235;  // m above the ground at the vehicle origin
  double max_range = 30.0;
  double sigma_range = 0.01;
  double sigma_intensity = 0.05;
  double ground_intensity = 0.3;
  ConeGeometry cone;

  double res_v() const { return (fov_high - fov_low) / (n_beams - 1); }
};

/// Ground plane in the sensor frame: z = tan(pitch) * x + tan(roll) * y.
struct GroundPlane {
  double pitch = 0.0;
  double roll = 0.0;
  double height_at(double x, double y) const;
};

/// Band intensities (bottom, middle, top) of the painted cone pattern.
std::array<double, 3> band_intensities(ConeColor c);

struct LabeledCloud {
  PointCloud points;
  std::vector<int> labels;  // -1 for ground, otherwise index into the scene's cone list
  std::vector<Cone> cones;  // scene cones in the sensor frame (x, y only)
};

/// Ray-casts a spinning multi-beam scan against the ground and the cones of
/// `track`. Cones are vertical right circular cones standing on the ground.
LabeledCloud synth_labeled(const Pose2D& sensor_pose, std::span<const Cone> cones, Rng& rng,
                           const ScanParams& params, const GroundPlane& ground = {});
PointCloud synth_pointcloud(const VehicleState& truth, const TrackSpec& track, Rng& rng,
                            const ScanParams& params, const GroundPlane& ground = {});

// Ground removal ---------------------------------------------------------------

struct GroundParams {
  int sector_count = 64;
  double cell_radial = 1.0;   // m
  double z_margin = 0.09;     // m above the ground estimate
  double quantile = 0.05;
  double gate = 0.04;         // m, residual allowed against the radial prediction
  double gate_per_m = 0.01;   // extra allowance per metre since the last ground cell
  double max_slope = 10.0 * kDeg;
  double max_range = 30.0;
};

/// Ground height estimate on a polar grid.
class GroundModel {
 public:
  GroundModel(const GroundParams& params, std::vector<double> heights);
  double height_at(double x, double y) const;

 private:
  GroundParams params_;
  int n_radial_;
  std::vector<double> heights_;  // sector-major
};

/// Per cell p5 height, accepted as ground when it agrees with the radial
/// sweep's extrapolation; rejected and empty cells take the prediction.
/// The grid is then smoothed by a 3x3 neighbour average.
GroundModel estimate_ground(std::span<const LidarPoint> cloud, const GroundParams& params);

/// Points at least z_margin above the estimated ground.
PointCloud remove_ground(std::span<const LidarPoint> cloud, const GroundParams& params);
PointCloud remove_ground(std::span<const LidarPoint> cloud, const GroundModel& ground, double z_margin);

// Clustering ------------------------------------------------------------------

struct Cluster {
  std::vector<std::size_t> indices;
  Vec3 centroid = Vec3::Zero();
  Vec3 extent = Vec3::Zero();  // bounding box size
};

/// Density-connected components in the x-y projection (DBSCAN; core points
/// have at least min_pts neighbours within eps, counting themselves).
std::vector<Cluster> cluster(std::span<const LidarPoint> cloud, double eps = 0.3, int min_pts = 3);

// Cone filtering and color -----------------------------------------------------

struct FilterParams {
  double beta_lo = 0.3;
  double beta_hi = 3.0;
  double extent_factor = 1.5;
  int n_bands = 8;
};

struct ConeCandidate {
  Vec2 pos_sensor = Vec2::Zero();
  int n_points = 0;
  std::vector<double> intensity_profile;  // bottom to top; empty bands take the mean of the others
};

/// Visibility estimate of the number of returns from a standard cone at distance d.
double expected_points(double d, const ScanParams& scan);

std::vector<ConeCandidate> filter_cones(std::span<const Cluster> clusters, std::span<const LidarPoint> cloud,
                                        const ScanParams& scan, const FilterParams& params = {},
                                        const GroundModel* ground = nullptr);

struct ColorParams {
  double tau = 0.05;
  double flat_variance = 0.004;
  double flat_max = 0.8;
};

/// Band-contrast color rule. Throws std::invalid_argument on an empty profile
/// or values outside [0, 1]. Fewer than 2K points gives a uniform belief.
ColorProbs classify_color(std::span<const double> profile, int n_points, const ColorParams& params = {});

/// True when the classifier abstained (uniform over the known colors).
bool is_uniform(const ColorProbs& probs);

ConeObservation to_observation(const ConeCandidate& c, double timestamp, const LidarModelParams& noise,
                               const ColorParams& color = {});

struct PipelineParams {
  ScanParams scan;
  GroundParams ground;
  double eps = 0.3;
  int min_pts = 3;
  FilterParams filter;
  ColorParams color;
};

/// Ground removal, clustering, filtering and classification of one scan.
std::vector<ConeObservation> process_scan(std::span<const LidarPoint> cloud, double timestamp,
                                          const PipelineParams& params, const LidarModelParams& noise = {});

}  // namespace conestack::lidar

namespace conestack::lidar {

/// Counts of a scan's detections against labeled cones in the sensor frame.
struct DetectionTally {
  int cones_in_range = 0;      // true cones within the detection radius
  int cones_found = 0;         // of those, matched by an observation
  int detections_in_range = 0;
  int detections_matched = 0;  // detections within match_radius of a true cone
  int color_in_range = 0;      // matched detections inside the color radius
  int color_decisive = 0;      // of those, not uniform
  int color_correct = 0;       // of the decisive ones, argmax equals truth

  DetectionTally& operator+=(const DetectionTally& o);
  double recall() const;
  double precision() const;
  double color_accuracy() const;  // over decisive classifications
};

DetectionTally tally_detections(std::span<const ConeObservation> detections, std::span<const Cone> truth,
                                double detect_radius = 8.0, double color_radius = 6.0, double match_radius = 0.5);

}  // namespace conestack::lidar
