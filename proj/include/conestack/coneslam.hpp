#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "conestack/geom.hpp"
#include "conestack/rng.hpp"
#include "conestack/sensors.hpp"
#include "conestack/velest.hpp"

namespace conestack {

struct Landmark {
  Vec2 mean = Vec2::Zero();  // world frame
  Cov2 cov = Cov2::Identity();
  std::array<ColorProbs, 2> color_counts{};  // soft counts, indexed by Modality
  int n_obs = 1;
  double last_seen = 0.0;
  bool operator==(const Landmark& o) const;
};

struct Particle {
  Pose2D pose;
  double log_weight = 0.0;
  std::vector<Landmark> landmarks;
  bool operator==(const Particle& o) const = default;
};

struct MapCone {
  Vec2 position = Vec2::Zero();
  ConeColor color = ConeColor::kUnknown;
  double confidence = 0.0;
  Cov2 cov = Cov2::Zero();  // position uncertainty, used by localization
  bool operator==(const MapCone& o) const;
};

using ConeMap = std::vector<MapCone>;

/// FNV-1a over the raw bytes of every field.
std::uint64_t content_hash(const ConeMap& map);

struct SlamParams {
  int n_particles = 100;
  // Floor noise density added to the velocity belief when sampling the
  // proposal, per (vx, vy, r). Divided by dt, so pose spread grows with time
  // and not with the call rate. Kept small: wider proposals let particles
  // build self-consistent but drifted maps.
  Vec3 q_floor = Vec3(1.0e-6, 1.0e-6, 1.0e-7);
  double max_predict_dt = 0.2;
  // Pose uncertainty folded into the association covariance.
  double pose_sigma_xy = 0.05;    // m
  double pose_sigma_theta = 0.005;  // rad, scaled by range
  double gate = 9.21;             // chi2(0.99, 2)
  double search_radius = 3.0;     // m, landmarks farther than this are not scored
  double new_distance = 1.5;      // m
  double p_new = 1e-3;
  double p_clutter = 1e-4;
  // Map extraction
  int min_observations = 3;
  // Landmarks still this uncertain (largest axis, m) are left out of the map;
  // long-range camera detections otherwise leave ghosts next to real cones.
  double max_map_sigma = 0.3;
  std::array<double, 2> modality_weight{1.0, 1.0};  // lidar, camera
  double min_confidence = 0.6;
  double merge_distance = 0.5;
  // Pruning of tentative landmarks that stay unseen inside the footprint.
  double prune_age = 5.0;         // s
  double footprint_radius = 10.0; // m
  // Lap detection
  double lap_radius = 3.0;
  double lap_heading = 0.25 * 3.141592653589793;
  double lap_departure = 15.0;
  bool freeze_on_lap = true;
};

// Particle operations -----------------------------------------------------------

/// Samples a velocity per particle from N(mean, cov + q_floor / dt) and
/// dead-reckons the pose over dt with a midpoint heading. Throws
/// std::invalid_argument unless dt lies in (0, max_predict_dt].
void predict_particles(std::span<Particle> particles, const VelBelief& vel, double dt, Rng& rng,
                       const SlamParams& params);

/// Single-particle form of the proposal with an explicit velocity draw.
Pose2D dead_reckon(const Pose2D& pose, const VelocityState& v, double dt);

enum class AssociationKind { kMatched, kNew, kClutter };

struct Association {
  AssociationKind kind = AssociationKind::kNew;
  std::size_t landmark = 0;  // valid when matched
  double d2 = 0.0;           // Mahalanobis distance when matched
  bool operator==(const Association&) const = default;
};

/// Predicted body-frame position of a landmark and the innovation covariance
/// for an observation with covariance `obs_cov`.
struct Innovation {
  Vec2 nu = Vec2::Zero();
  Mat2 s = Mat2::Identity();
};

Innovation innovation(const Pose2D& pose, const Vec2& lm_mean, const Cov2& lm_cov, const ConeObservation& obs,
                      const SlamParams& params);

/// Greedy best-first one-to-one gated assignment of observations to
/// landmarks. Unmatched observations become NEW when no landmark lies within
/// new_distance, otherwise CLUTTER.
std::vector<Association> associate(const Pose2D& pose, std::span<const Landmark> landmarks,
                                   std::span<const ConeObservation> obs, const SlamParams& params);
std::vector<Association> associate(const Particle& p, std::span<const ConeObservation> obs,
                                   const SlamParams& params);

/// EKF update with the observation's own covariance and H = R(-theta).
Landmark update_landmark(const Landmark& lm, const ConeObservation& obs, const Pose2D& pose);

/// New landmark at the world projection of `obs`.
Landmark init_landmark(const ConeObservation& obs, const Pose2D& pose, const SlamParams& params);

/// Scores the frame, updates matched landmarks and inserts new ones.
void weight_and_fuse(Particle& p, std::span<const ConeObservation> obs, std::span<const Association> decisions,
                     const SlamParams& params);

/// Shifts log weights so that the weights sum to one. Returns the ESS.
double normalize_weights(std::span<Particle> particles);
double effective_sample_size(std::span<const Particle> particles);

/// Systematic resampling when ESS < N/2. Returns true if it resampled.
bool resample(std::vector<Particle>& particles, Rng& rng);

/// Indices chosen by systematic resampling for normalized weights and a
/// single uniform draw u in [0, 1).
std::vector<std::size_t> systematic_indices(std::span<const double> weights, double u);

/// Drops tentative landmarks that went unseen for prune_age while inside
/// the footprint around the particle.
void prune_landmarks(Particle& p, double now, const SlamParams& params);

// Map -------------------------------------------------------------------------------

struct LandmarkColor {
  ConeColor color = ConeColor::kUnknown;
  double confidence = 0.0;
};

/// Modality-weighted soft counts over the known colors.
LandmarkColor fused_color(const Landmark& lm, const SlamParams& params);

/// Map from the highest-weight particle. Throws std::invalid_argument on an
/// empty set.
ConeMap extract_map(std::span<const Particle> particles, const SlamParams& params);

/// Scores observations against a frozen map. Unmatched observations count
/// as clutter; the map is never modified.
void localization_update(std::span<Particle> particles, std::span<const ConeObservation> obs, const ConeMap& map,
                         const SlamParams& params);

// Lap closure -----------------------------------------------------------------------

/// Fires once each time the pose re-enters the start disc heading the same
/// way after having left the departure radius.
class LapDetector {
 public:
  LapDetector(const Pose2D& start, const SlamParams& params);

  /// Returns true on the update that completes a lap.
  bool update(const Pose2D& pose);
  int laps() const { return laps_; }

 private:
  Pose2D start_;
  double radius_;
  double heading_;
  double departure_;
  bool armed_ = false;
  int laps_ = 0;
};

bool detect_lap(std::span<const Pose2D> history, const Pose2D& start, const SlamParams& params = {});

// Filter ----------------------------------------------------------------------------

enum class SlamMode { kMapping, kLocalization };

struct SlamEstimate {
  double timestamp = 0.0;
  Pose2D pose;  // weighted mean
  double ess = 0.0;
  int n_particles = 0;
  SlamMode mode = SlamMode::kMapping;
};

/// Full SLAM loop. Velocity beliefs are held between records and the pose
/// proposal is stepped up to each frame's timestamp.
class ConeSlam {
 public:
  ConeSlam(const SlamParams& params, std::uint64_t seed, const Pose2D& start = {});

  void process(const VelBelief& vel);
  void process(const ConeFrame& frame);

  /// Switches to localization against the current map.
  void freeze_map();
  /// Switches to localization against a given map.
  void localize_in(ConeMap map);

  SlamEstimate estimate() const;
  const std::vector<Particle>& particles() const { return particles_; }
  const Particle& best_particle() const;
  ConeMap map() const;  // frozen map in localization, otherwise extracted
  SlamMode mode() const { return mode_; }
  int laps() const { return laps_.laps(); }
  std::optional<double> lap_time() const { return lap_time_; }
  const SlamParams& params() const { return params_; }

 private:
  void predict_to(double t);

  SlamParams params_;
  Rng rng_;
  std::vector<Particle> particles_;
  std::optional<VelBelief> vel_;
  double time_ = 0.0;
  bool started_ = false;
  SlamMode mode_ = SlamMode::kMapping;
  ConeMap frozen_;
  LapDetector laps_;
  std::optional<double> lap_time_;
};

}  // namespace conestack
