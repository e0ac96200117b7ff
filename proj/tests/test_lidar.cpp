#include <cmath>
#include <cstdio>

#include "conestack/lidar.hpp"
#include "doctest.h"

using namespace conestack;
using namespace conestack::lidar;

namespace {

ScanParams noiseless() {
  ScanParams p;
  p.sigma_range = 0.0;
  p.sigma_intensity = 0.0;
  return p;
}

struct Split {
  int cone_total = 0, cone_kept = 0, ground_total = 0, ground_kept = 0;
};

Split retention(const LabeledCloud& scene, const GroundParams& gp) {
  const GroundModel g = estimate_ground(scene.points, gp);
  Split s;
  for (std::size_t i = 0; i < scene.points.size(); ++i) {
    const auto& pt = scene.points[i];
    const bool kept = pt.z >= g.height_at(pt.x, pt.y) + gp.z_margin;
    if (scene.labels[i] >= 0) {
      ++s.cone_total;
      s.cone_kept += kept;
    } else {
      ++s.ground_total;
      s.ground_kept += kept;
    }
  }
  return s;
}

std::vector<Cone> cones_at(std::initializer_list<Vec2> positions, ConeColor c = ConeColor::kBlue) {
  std::vector<Cone> out;
  for (const auto& p : positions) out.push_back({p, c});
  return out;
}

}  // namespace

TEST_CASE("synthetic scan") {
  SUBCASE("ground only stays on the plane") {
    Rng rng(1);
    const ScanParams p;
    const auto scene = synth_labeled({}, {}, rng, p);
    REQUIRE(!scene.points.empty());
    for (const auto& pt : scene.points) {
      CHECK(std::abs(pt.z) < 5.0 * p.sigma_range);
      CHECK(pt.intensity >= 0.0);
      CHECK(pt.intensity <= 1.0);
    }
  }
  SUBCASE("cone return count at 5 m matches the visibility estimate") {
    // The count at a single mount height depends on where the beams cut the
    // cone; averaging over one beam period recovers the visibility estimate.
    ScanParams p = noiseless();
    const double period = 5.0 * std::tan(p.res_v());
    const int phases = 40;
    double total = 0.0;
    for (int k = 0; k < phases; ++k) {
      p.mount_height = 0.2 + period * (k + 0.5) / phases;
      Rng rng(2);
      const auto scene = synth_labeled({}, cones_at({{5.0, 0.0}}), rng, p);
      total += static_cast<double>(std::count(scene.labels.begin(), scene.labels.end(), 0));
    }
    const double mean = total / phases;
    // Independent evaluation of the visibility formula.
    const double rows = 0.31 / (2 * 5.0 * std::tan(std::numbers::pi / 180.0));
    const double cols = 0.23 / (2 * 5.0 * std::tan(0.1 * std::numbers::pi / 180.0));
    const double expected = 0.5 * rows * cols;
    CHECK(expected_points(5.0, ScanParams{}) == doctest::Approx(expected).epsilon(1e-12));
    MESSAGE("mean cone returns at 5 m " << mean << " expected " << expected);
    CHECK(mean >= 0.8 * expected);
    CHECK(mean <= 1.2 * expected);
  }
  SUBCASE("determinism") {
    TrackParams tp;
    Rng tr(3);
    const TrackSpec track = generate_track(tr, tp);
    VehicleState s;
    Rng a(11), b(11);
    CHECK(synth_pointcloud(s, track, a, {}) == synth_pointcloud(s, track, b, {}));
  }
}

TEST_CASE("ground removal") {
  const GroundParams gp;
  SUBCASE("empty cloud") { CHECK(remove_ground(PointCloud{}, gp).empty()); }
  SUBCASE("flat noiseless ground is removed entirely") {
    Rng rng(1);
    const auto scene = synth_labeled({}, {}, rng, noiseless());
    CHECK(remove_ground(scene.points, gp).empty());
  }
  SUBCASE("one cone at 5 m on flat and tilted ground") {
    for (double pitch_deg : {0.0, 2.0, -2.0}) {
      for (double bearing : {0.0, std::numbers::pi}) {
        CAPTURE(pitch_deg);
        CAPTURE(bearing);
        Rng rng(2);
        GroundPlane plane;
        plane.pitch = pitch_deg * kDeg;
        const auto scene =
            synth_labeled({}, cones_at({5.0 * Vec2(std::cos(bearing), std::sin(bearing))}), rng, noiseless(), plane);
        const Split s = retention(scene, gp);
        REQUIRE(s.cone_total > 0);
        CHECK(s.cone_kept >= 0.9 * s.cone_total);
        CHECK(s.ground_total - s.ground_kept >= 0.99 * s.ground_total);
      }
    }
  }
  SUBCASE("returns clear of the margin survive in every direction") {
    // Oracle: cone returns whose true height above the plane exceeds the
    // margin (with 2 cm slack) must be retained.
    const auto ring = cones_at({{5, 0}, {0, 5}, {-5, 0}, {0, -5}, {3.5, 3.5}, {-3.5, -3.5}, {2, -2.5}, {-6, 4}});
    for (const GroundPlane plane : {GroundPlane{2.0 * kDeg, 0.0}, GroundPlane{0.0, 2.0 * kDeg},
                                    GroundPlane{-1.5 * kDeg, 1.5 * kDeg}}) {
      Rng rng(3);
      const auto scene = synth_labeled({}, ring, rng, noiseless(), plane);
      const GroundModel g = estimate_ground(scene.points, gp);
      int clear = 0, kept = 0, ground = 0, ground_removed = 0;
      for (std::size_t i = 0; i < scene.points.size(); ++i) {
        const auto& pt = scene.points[i];
        const bool is_kept = pt.z >= g.height_at(pt.x, pt.y) + gp.z_margin;
        if (scene.labels[i] < 0) {
          ++ground;
          ground_removed += !is_kept;
        } else if (pt.z - plane.height_at(pt.x, pt.y) >= gp.z_margin + 0.02) {
          ++clear;
          kept += is_kept;
        }
      }
      CHECK(kept >= 0.9 * clear);
      CHECK(ground_removed >= 0.99 * ground);
    }
  }
  SUBCASE("never removes points far above the true ground") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
      TrackParams tp;
      const TrackSpec track = generate_track(rng, tp);
      const Vec2 c = track.centerline[rng.uniform_index(track.centerline.size())];
      GroundPlane plane{rng.uniform(-2.0, 2.0) * kDeg, rng.uniform(-2.0, 2.0) * kDeg};
      const auto cones = track.all_cones();
      const auto scene = synth_labeled(Pose2D(c, rng.uniform(-3.0, 3.0)), cones, rng, ScanParams{}, plane);
      const GroundModel g = estimate_ground(scene.points, gp);
      for (const auto& pt : scene.points) {
        const bool removed = pt.z < g.height_at(pt.x, pt.y) + gp.z_margin;
        if (removed) CHECK(pt.z - plane.height_at(pt.x, pt.y) <= 0.5);
      }
    }
  }
}

TEST_CASE("clustering") {
  CHECK(cluster(PointCloud{}).empty());
  CHECK_THROWS_AS(cluster(PointCloud{}, 0.0), std::invalid_argument);

  SUBCASE("two cones 3 m apart") {
    Rng rng(5);
    const auto cones = cones_at({{5.0, -1.5}, {5.0, 1.5}});
    const auto scene = synth_labeled({}, cones, rng, ScanParams{});
    const auto above = remove_ground(scene.points, GroundParams{});
    const auto clusters = cluster(above);
    REQUIRE(clusters.size() == 2);
    for (const auto& c : clusters) {
      double best = 1e9;
      for (const auto& cone : cones) best = std::min(best, (c.centroid.head<2>() - cone.position).norm());
      CHECK(best < 0.1);
      CHECK(!c.indices.empty());
    }
  }
  SUBCASE("a single cone never splits") {
    for (double d = 1.5; d <= 10.0; d += 0.5) {
      CAPTURE(d);
      Rng rng(6);
      const auto scene = synth_labeled({}, cones_at({{d * std::cos(0.3 * d), d * std::sin(0.3 * d)}}), rng,
                                       ScanParams{});
      PointCloud cone_pts;
      for (std::size_t i = 0; i < scene.points.size(); ++i)
        if (scene.labels[i] == 0) cone_pts.push_back(scene.points[i]);
      REQUIRE(cone_pts.size() >= 3);
      const auto clusters = cluster(cone_pts);
      REQUIRE(clusters.size() == 1);
      CHECK(clusters[0].indices.size() == cone_pts.size());
    }
  }
  SUBCASE("centroid is the member mean") {
    const PointCloud pts{{0, 0, 0, 0}, {0.1, 0, 0.2, 0}, {0.2, 0.1, 0.1, 0}, {5, 5, 0, 0}};
    const auto clusters = cluster(pts, 0.3, 3);
    REQUIRE(clusters.size() == 1);
    CHECK((clusters[0].centroid - Vec3(0.1, 0.1 / 3, 0.1)).norm() < 1e-12);
  }
}

TEST_CASE("cone filtering") {
  const ScanParams scan;
  CHECK(filter_cones({}, {}, scan).empty());

  SUBCASE("cone at 5 m is accepted") {
    Rng rng(7);
    const auto scene = synth_labeled({}, cones_at({{5.0, 0.0}}), rng, scan);
    const GroundModel g = estimate_ground(scene.points, GroundParams{});
    const auto above = remove_ground(scene.points, g, 0.09);
    const auto clusters = cluster(above);
    REQUIRE(clusters.size() == 1);
    const auto cands = filter_cones(clusters, above, scan, {}, &g);
    REQUIRE(cands.size() == 1);
    CHECK((cands[0].pos_sensor - Vec2(5.0, 0.0)).norm() < 0.05);
    CHECK(cands[0].intensity_profile.size() == 8);
  }
  SUBCASE("wall segment is rejected on count and extent") {
    PointCloud wall;
    for (int i = 0; i < 40; ++i)
      for (int j = 0; j < 5; ++j) wall.push_back({5.0, -1.0 + 2.0 * i / 39.0, 0.1 + 0.05 * j, 0.5});
    const auto clusters = cluster(wall);
    REQUIRE(clusters.size() == 1);
    CHECK(clusters[0].indices.size() == 200);
    CHECK(200 > 3.0 * expected_points(clusters[0].centroid.head<2>().norm(), scan));
    CHECK(clusters[0].extent.y() > 1.5 * scan.cone.base);
    CHECK(filter_cones(clusters, wall, scan).empty());
  }
}

TEST_CASE("color classification") {
  const std::vector<double> blue{0.2, 0.2, 0.2, 0.8, 0.8, 0.2, 0.2, 0.2};
  const std::vector<double> yellow{0.8, 0.8, 0.8, 0.2, 0.2, 0.8, 0.8, 0.8};
  const std::vector<double> orange(8, 0.6);
  CHECK(at(classify_color(blue, 100), ConeColor::kBlue) > 0.95);
  CHECK(at(classify_color(yellow, 100), ConeColor::kYellow) > 0.95);
  const auto o = classify_color(orange, 100);
  CHECK(std::max_element(o.begin(), o.end()) - o.begin() == static_cast<long>(ConeColor::kOrange));
  CHECK(is_uniform(classify_color(blue, 15)));
  CHECK_FALSE(is_uniform(classify_color(blue, 16)));
  CHECK_THROWS_AS(classify_color(std::vector<double>{}, 100), std::invalid_argument);
  CHECK_THROWS_AS(classify_color(std::vector<double>{0.1, 1.2, 0.3}, 100), std::invalid_argument);

  SUBCASE("always a probability vector") {
    Rng rng(8);
    for (int i = 0; i < 2000; ++i) {
      std::vector<double> prof(3 + rng.uniform_index(10));
      for (double& v : prof) v = rng.uniform();
      const auto p = classify_color(prof, static_cast<int>(rng.uniform_index(60)));
      double sum = 0.0;
      for (double v : p) {
        CHECK(v >= 0.0);
        sum += v;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(at(p, ConeColor::kUnknown) == 0.0);
    }
  }
}

TEST_CASE("pipeline on track scenes") {
  Rng rng(9);
  DetectionTally total;
  PipelineParams pp;
  for (int scene = 0; scene < 20; ++scene) {
    TrackParams tp;
    const TrackSpec track = generate_track(rng, tp);
    const std::size_t k = rng.uniform_index(track.centerline.size());
    const Pose2D pose(track.centerline[k], rng.uniform(-3.0, 3.0));
    const auto cones = track.all_cones();
    const auto labeled = synth_labeled(pose, cones, rng, pp.scan);
    const auto obs = process_scan(labeled.points, 0.0, pp);
    for (const auto& o : obs) CHECK(observation_is_valid(o, LidarModelParams{}.range));
    total += tally_detections(obs, labeled.cones);
  }
  MESSAGE("recall " << total.recall() << " precision " << total.precision() << " color " << total.color_accuracy()
                    << " decisive " << total.color_decisive << "/" << total.color_in_range);
  CHECK(total.recall() >= 0.9);
  CHECK(total.precision() >= 0.9);
  CHECK(total.color_accuracy() >= 0.9);
}
