#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "msglmb/common.hpp"
#include "msglmb/glmb.hpp"

namespace msglmb::metrics {

struct OspaParams {
  double cutoff = 100.0;  ///< c, meters
  double order = 1.0;     ///< p
  int window = 10;        ///< trailing scans for the trajectory metric

  void validate() const;
};

/// Minimum-cost assignment of every row to a distinct column (rows <= cols).
/// Returns the column of each row.
[[nodiscard]] std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

/// OSPA distance between two finite point sets.
[[nodiscard]] double ospa(std::span<const Eigen::Vector2d> X, std::span<const Eigen::Vector2d> Y,
                          const OspaParams& params);

/// 2-D positions of one trajectory, one per scan from `start`.
struct PositionTrack {
  Label label;
  int start = 0;
  std::vector<Eigen::Vector2d> positions;

  [[nodiscard]] int end() const { return start + static_cast<int>(positions.size()) - 1; }
  [[nodiscard]] bool exists(int scan) const { return scan >= start && scan <= end(); }
  [[nodiscard]] const Eigen::Vector2d& at(int scan) const {
    return positions[static_cast<std::size_t>(scan - start)];
  }
};

/// Position components [px, py] of [px, vx, py, vy] states.
[[nodiscard]] std::vector<PositionTrack> position_tracks(
    std::span<const rfs::TrajectorySegment> segments);

/// Points of every track that exists at `scan`.
[[nodiscard]] std::vector<Eigen::Vector2d> points_at(std::span<const PositionTrack> tracks, int scan);

/// Time-averaged cutoff distance over scans first..last where either track exists;
/// a scan where only one exists costs the cutoff.
[[nodiscard]] double trajectory_distance(const PositionTrack& a, const PositionTrack& b, int first,
                                         int last, const OspaParams& params);

/// OSPA over the tracks that exist in the trailing window ending at scan k,
/// with trajectory_distance as the base distance.
[[nodiscard]] double ospa2(std::span<const PositionTrack> estimate,
                           std::span<const PositionTrack> truth, int k, const OspaParams& params);

struct Crossing {
  Label a;
  Label b;
  Eigen::Vector2d point;
};

/// Intersections of the polyline paths of distinct tracks that fall within
/// `radius` of `center`.
[[nodiscard]] std::vector<Crossing> crossings_in_region(std::span<const PositionTrack> tracks,
                                                        const Eigen::Vector2d& center,
                                                        double radius);

}  // namespace msglmb::metrics
