#include "msglmb/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace msglmb::metrics {

namespace {

double cut(double d, const OspaParams& params) {
  return std::pow(std::min(d, params.cutoff), params.order);
}

/// OSPA given the cutoff-p cost matrix between the smaller and larger set.
double ospa_from_costs(const Eigen::MatrixXd& cost, std::size_t small, std::size_t large,
                       const OspaParams& params) {
  if (large == 0) {
    return 0.0;
  }
  double total = std::pow(params.cutoff, params.order) * static_cast<double>(large - small);
  if (small > 0) {
    const std::vector<int> cols = solve_assignment(cost);
    for (std::size_t i = 0; i < small; ++i) {
      total += cost(static_cast<Eigen::Index>(i), cols[i]);
    }
  }
  return std::pow(total / static_cast<double>(large), 1.0 / params.order);
}

bool segment_intersection(const Eigen::Vector2d& p, const Eigen::Vector2d& p2,
                          const Eigen::Vector2d& q, const Eigen::Vector2d& q2,
                          Eigen::Vector2d& out) {
  const Eigen::Vector2d r = p2 - p;
  const Eigen::Vector2d s = q2 - q;
  const double denom = r.x() * s.y() - r.y() * s.x();
  if (denom == 0.0) {
    return false;
  }
  const Eigen::Vector2d qp = q - p;
  const double t = (qp.x() * s.y() - qp.y() * s.x()) / denom;
  const double u = (qp.x() * r.y() - qp.y() * r.x()) / denom;
  if (t < 0.0 || t > 1.0 || u < 0.0 || u > 1.0) {
    return false;
  }
  out = p + t * r;
  return true;
}

}  // namespace

void OspaParams::validate() const {
  if (!(cutoff > 0.0) || !(order >= 1.0) || window < 1) {
    throw InvalidInputError("OSPA needs c > 0, p >= 1 and a positive window");
  }
}

std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
  const auto n = static_cast<int>(cost.rows());
  const auto m = static_cast<int>(cost.cols());
  if (n > m) {
    throw InvalidInputError("assignment needs no more rows than columns");
  }
  if (n == 0) {
    return {};
  }
  // Shortest augmenting path with potentials, 1-based with a virtual column 0.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(m) + 1, 0.0);
  std::vector<int> match(static_cast<std::size_t>(m) + 1, 0);
  std::vector<int> way(static_cast<std::size_t>(m) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(m) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = match[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          continue;
        }
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                           v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(match[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> out(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= m; ++j) {
    if (match[static_cast<std::size_t>(j)] > 0) {
      out[static_cast<std::size_t>(match[static_cast<std::size_t>(j)] - 1)] = j - 1;
    }
  }
  return out;
}

double ospa(std::span<const Eigen::Vector2d> X, std::span<const Eigen::Vector2d> Y,
            const OspaParams& params) {
  params.validate();
  if (X.size() > Y.size()) {
    std::swap(X, Y);
  }
  Eigen::MatrixXd cost(static_cast<Eigen::Index>(X.size()), static_cast<Eigen::Index>(Y.size()));
  for (std::size_t i = 0; i < X.size(); ++i) {
    for (std::size_t j = 0; j < Y.size(); ++j) {
      cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cut((X[i] - Y[j]).norm(), params);
    }
  }
  return ospa_from_costs(cost, X.size(), Y.size(), params);
}

std::vector<PositionTrack> position_tracks(std::span<const rfs::TrajectorySegment> segments) {
  std::vector<PositionTrack> out;
  for (const auto& s : segments) {
    PositionTrack t{s.label, s.start, {}};
    for (const auto& x : s.states) {
      if (x.size() < 3) {
        throw InvalidInputError("trajectory states lack position components");
      }
      t.positions.emplace_back(x(0), x(2));
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<Eigen::Vector2d> points_at(std::span<const PositionTrack> tracks, int scan) {
  std::vector<Eigen::Vector2d> out;
  for (const auto& t : tracks) {
    if (t.exists(scan)) {
      out.push_back(t.at(scan));
    }
  }
  return out;
}

double trajectory_distance(const PositionTrack& a, const PositionTrack& b, int first, int last,
                           const OspaParams& params) {
  double total = 0.0;
  int scans = 0;
  for (int t = first; t <= last; ++t) {
    const bool ea = a.exists(t);
    const bool eb = b.exists(t);
    if (!ea && !eb) {
      continue;
    }
    ++scans;
    total += ea && eb ? cut((a.at(t) - b.at(t)).norm(), params)
                      : std::pow(params.cutoff, params.order);
  }
  if (scans == 0) {
    return 0.0;
  }
  return std::pow(total / scans, 1.0 / params.order);
}

double ospa2(std::span<const PositionTrack> estimate, std::span<const PositionTrack> truth, int k,
             const OspaParams& params) {
  params.validate();
  const int first = k - params.window + 1;
  auto present = [&](std::span<const PositionTrack> tracks) {
    std::vector<const PositionTrack*> out;
    for (const auto& t : tracks) {
      if (t.start <= k && t.end() >= first) {
        out.push_back(&t);
      }
    }
    return out;
  };
  std::vector<const PositionTrack*> X = present(estimate);
  std::vector<const PositionTrack*> Y = present(truth);
  if (X.size() > Y.size()) {
    std::swap(X, Y);
  }
  Eigen::MatrixXd cost(static_cast<Eigen::Index>(X.size()), static_cast<Eigen::Index>(Y.size()));
  for (std::size_t i = 0; i < X.size(); ++i) {
    for (std::size_t j = 0; j < Y.size(); ++j) {
      cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          cut(trajectory_distance(*X[i], *Y[j], first, k, params), params);
    }
  }
  return ospa_from_costs(cost, X.size(), Y.size(), params);
}

std::vector<Crossing> crossings_in_region(std::span<const PositionTrack> tracks,
                                          const Eigen::Vector2d& center, double radius) {
  std::vector<Crossing> out;
  for (std::size_t a = 0; a < tracks.size(); ++a) {
    for (std::size_t b = a + 1; b < tracks.size(); ++b) {
      const auto& pa = tracks[a].positions;
      const auto& pb = tracks[b].positions;
      for (std::size_t i = 0; i + 1 < pa.size(); ++i) {
        for (std::size_t j = 0; j + 1 < pb.size(); ++j) {
          Eigen::Vector2d hit;
          if (segment_intersection(pa[i], pa[i + 1], pb[j], pb[j + 1], hit) &&
              (hit - center).norm() <= radius) {
            out.push_back(Crossing{tracks[a].label, tracks[b].label, hit});
          }
        }
      }
    }
  }
  return out;
}

}  // namespace msglmb::metrics
