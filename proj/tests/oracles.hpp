#pragma once

// Slow, obviously-correct reference implementations shared by the unit tests
// and the acceptance suite.

#include <algorithm>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "conestack/coneslam.hpp"

namespace conestack::oracle {

inline Cov2 random_cov(Rng& rng, double scale) {
  Mat2 a;
  a << rng.normal(), rng.normal(), rng.normal(), rng.normal();
  return scale * scale * (a * a.transpose() + 0.1 * Mat2::Identity());
}

/// Minimum total cost over all injections of the smaller side into the
/// larger one, by permutation enumeration.
inline double min_assignment_cost(const std::vector<double>& cost, int rows, int cols) {
  const bool wide = rows <= cols;
  const int small = wide ? rows : cols;
  const int large = wide ? cols : rows;
  std::vector<int> perm(large);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (int i = 0; i < small; ++i) c += wide ? cost[i * cols + perm[i]] : cost[perm[i] * cols + i];
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// Association by exhaustive search: minimum over all partial one-to-one
/// assignments of the summed d2 plus the gate value per unmatched
/// observation. d2 is evaluated in the world frame, independently of the
/// body-frame code path, and returned through `d2`.
inline std::vector<int> exhaustive_association(const Pose2D& pose, std::span<const Landmark> lms,
                                               std::span<const ConeObservation> obs, const SlamParams& params,
                                               std::vector<std::vector<double>>& d2) {
  const Mat2 rot = pose.rotation();
  d2.assign(obs.size(), std::vector<double>(lms.size(), 0.0));
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const Vec2 zw = pose.translation() + rot * obs[i].pos_body;
    const Mat2 infl = params.pose_sigma_xy * params.pose_sigma_xy * Mat2::Identity();
    for (std::size_t j = 0; j < lms.size(); ++j) {
      const Vec2 pred = rot.transpose() * (lms[j].mean - pose.translation());
      const Vec2 tangent(-pred.y(), pred.x());
      const Mat2 infl_j = infl + params.pose_sigma_theta * params.pose_sigma_theta * tangent * tangent.transpose();
      const Mat2 s_world = lms[j].cov + rot * (obs[i].cov + infl_j) * rot.transpose();
      const Vec2 nu = zw - lms[j].mean;
      d2[i][j] = nu.dot(s_world.inverse() * nu);
    }
  }
  std::vector<int> best(obs.size(), -1), cur(obs.size(), -1);
  double best_cost = std::numeric_limits<double>::infinity();
  std::vector<bool> taken(lms.size(), false);
  const auto recurse = [&](auto&& self, std::size_t i, double cost) -> void {
    if (cost >= best_cost) return;
    if (i == obs.size()) {
      best_cost = cost;
      best = cur;
      return;
    }
    cur[i] = -1;
    self(self, i + 1, cost + params.gate);
    for (std::size_t j = 0; j < lms.size(); ++j) {
      if (taken[j] || d2[i][j] > params.gate) continue;
      taken[j] = true;
      cur[i] = static_cast<int>(j);
      self(self, i + 1, cost + d2[i][j]);
      taken[j] = false;
      cur[i] = -1;
    }
  };
  recurse(recurse, 0, 0.0);
  return best;
}

struct WlsPoint {
  Vec2 mean;
  Cov2 cov;
};

/// Closed-form weighted least squares for a static point seen from a known
/// pose: information-weighted mean of the world-frame observations.
inline WlsPoint weighted_least_squares(const Pose2D& pose, std::span<const ConeObservation> obs) {
  const Mat2 rot = pose.rotation();
  Mat2 info = Mat2::Zero();
  Vec2 acc = Vec2::Zero();
  for (const auto& o : obs) {
    const Mat2 w = (rot * o.cov * rot.transpose()).inverse();
    info += w;
    acc += w * to_world(pose, o.pos_body);
  }
  return {info.ldlt().solve(acc), info.inverse()};
}

}  // namespace conestack::oracle
