#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "msglmb/metrics.hpp"

namespace msglmb::metrics {
namespace {

using Points = std::vector<Eigen::Vector2d>;

double permutation_ospa(const Points& X, const Points& Y, const OspaParams& p) {
  const Points& small = X.size() <= Y.size() ? X : Y;
  const Points& large = X.size() <= Y.size() ? Y : X;
  if (large.empty()) {
    return 0.0;
  }
  std::vector<int> perm(large.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < small.size(); ++i) {
      s += std::pow(std::min((small[i] - large[static_cast<std::size_t>(perm[i])]).norm(), p.cutoff),
                    p.order);
    }
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  const double n = static_cast<double>(large.size());
  return std::pow((best + std::pow(p.cutoff, p.order) * (n - static_cast<double>(small.size()))) / n,
                  1.0 / p.order);
}

Points random_points(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-150.0, 150.0);
  Points out;
  for (std::size_t i = 0; i < n; ++i) {
    out.emplace_back(u(rng), u(rng));
  }
  return out;
}

TEST(Ospa, EmptySetsAreAtZeroDistance) {
  EXPECT_EQ(ospa(Points{}, Points{}, OspaParams{}), 0.0);
}

TEST(Ospa, OneEmptySetCostsTheCutoff) {
  const Points X{{0.0, 0.0}, {5.0, 5.0}};
  EXPECT_DOUBLE_EQ(ospa(X, Points{}, OspaParams{}), 100.0);
}

TEST(Ospa, IdenticalSetsAreAtZeroDistance) {
  const Points X{{1.0, 2.0}, {3.0, -4.0}, {10.0, 0.0}};
  Points Y{X[2], X[0], X[1]};
  EXPECT_NEAR(ospa(X, Y, OspaParams{}), 0.0, 1e-12);
}

TEST(Ospa, IsSymmetric) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    const Points X = random_points(t % 5, rng);
    const Points Y = random_points((t / 5) % 6, rng);
    EXPECT_DOUBLE_EQ(ospa(X, Y, OspaParams{}), ospa(Y, X, OspaParams{}));
  }
}

TEST(Ospa, MatchesPermutationOracleForSeveralOrders) {
  std::mt19937_64 rng(11);
  for (double order : {1.0, 2.0, 3.5}) {
    const OspaParams p{60.0, order, 10};
    for (int t = 0; t < 100; ++t) {
      const Points X = random_points(static_cast<std::size_t>(t % 6), rng);
      const Points Y = random_points(static_cast<std::size_t>((t * 7) % 6), rng);
      EXPECT_NEAR(ospa(X, Y, p), permutation_ospa(X, Y, p), 1e-12);
    }
  }
}

TEST(Ospa, RejectsInvalidParameters) {
  EXPECT_THROW((void)ospa(Points{}, Points{}, OspaParams{0.0, 1.0, 10}), InvalidInputError);
  EXPECT_THROW((void)ospa(Points{}, Points{}, OspaParams{10.0, 0.5, 10}), InvalidInputError);
}

TEST(Assignment, MatchesPermutationMinimum) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int t = 0; t < 200; ++t) {
    const int n = 1 + t % 5;
    const int m = n + (t / 5) % 3;
    Eigen::MatrixXd c(n, m);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < m; ++j) {
        c(i, j) = u(rng);
      }
    }
    const auto cols = solve_assignment(c);
    double got = 0.0;
    for (int i = 0; i < n; ++i) {
      got += c(i, cols[static_cast<std::size_t>(i)]);
    }
    std::vector<int> perm(static_cast<std::size_t>(m));
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        s += c(i, perm[static_cast<std::size_t>(i)]);
      }
      best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_NEAR(got, best, 1e-12);
    std::vector<int> sorted = cols;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(std::adjacent_find(sorted.begin(), sorted.end()), sorted.end());
  }
}

TEST(Assignment, RejectsMoreRowsThanColumns) {
  EXPECT_THROW((void)solve_assignment(Eigen::MatrixXd::Zero(3, 2)), InvalidInputError);
}

PositionTrack track(int start, std::vector<Eigen::Vector2d> ps) {
  return PositionTrack{Label{start, 0}, start, std::move(ps)};
}

TEST(TrajectoryDistance, AveragesOverScansWhereEitherExists) {
  const OspaParams p{100.0, 1.0, 10};
  const PositionTrack a = track(1, {{0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}});
  const PositionTrack b = track(2, {{3.0, 4.0}, {6.0, 8.0}, {0.0, 1.0}});
  // Scans 1..4: only a, then 5, then 10, then only b.
  EXPECT_NEAR(trajectory_distance(a, b, 1, 4, p), (100.0 + 5.0 + 10.0 + 100.0) / 4.0, 1e-12);
  EXPECT_EQ(trajectory_distance(a, b, 10, 20, p), 0.0);
}

TEST(Ospa2, ReducesToOspaForSingleScanWindows) {
  std::mt19937_64 rng(9);
  const OspaParams p{100.0, 1.0, 1};
  for (int t = 0; t < 30; ++t) {
    const Points X = random_points(static_cast<std::size_t>(t % 4), rng);
    const Points Y = random_points(static_cast<std::size_t>((t / 4) % 4), rng);
    std::vector<PositionTrack> ex;
    std::vector<PositionTrack> ey;
    for (const auto& x : X) {
      ex.push_back(track(3, {x}));
    }
    for (const auto& y : Y) {
      ey.push_back(track(3, {y}));
    }
    EXPECT_NEAR(ospa2(ex, ey, 3, p), ospa(X, Y, p), 1e-12);
  }
}

TEST(Crossings, FindsIntersectionInsideRegionOnly) {
  const std::vector<PositionTrack> tracks{
      PositionTrack{Label{1, 0}, 1, {{-10.0, -10.0}, {10.0, 10.0}}},
      PositionTrack{Label{1, 1}, 1, {{-10.0, 10.0}, {10.0, -10.0}}},
  };
  const auto inside = crossings_in_region(tracks, Eigen::Vector2d::Zero(), 5.0);
  ASSERT_EQ(inside.size(), 1u);
  EXPECT_NEAR(inside[0].point.norm(), 0.0, 1e-12);
  EXPECT_TRUE(crossings_in_region(tracks, Eigen::Vector2d(100.0, 0.0), 5.0).empty());
}

TEST(Crossings, ParallelTracksNeverCross) {
  const std::vector<PositionTrack> tracks{
      PositionTrack{Label{1, 0}, 1, {{0.0, 0.0}, {10.0, 0.0}, {20.0, 0.0}}},
      PositionTrack{Label{1, 1}, 1, {{0.0, 1.0}, {10.0, 1.0}, {20.0, 1.0}}},
  };
  EXPECT_TRUE(crossings_in_region(tracks, Eigen::Vector2d::Zero(), 1e3).empty());
}

}  // namespace
}  // namespace msglmb::metrics
