#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "msglmb/gibbs.hpp"
#include "msglmb/glmb.hpp"
#include "msglmb/recursion.hpp"

namespace msglmb::smoothing {

enum class Strategy {
  SfaThenUa,          ///< joint densities kept inside a window, marginalized at window starts
  JointSfaUa,         ///< marginalized after every update
  StandardMultiscan,  ///< independent dynamics, marginalized after every update
};

[[nodiscard]] std::string to_string(Strategy s);
/// Accepts "sfa-then-ua", "joint-sfa-ua" and "standard".
[[nodiscard]] Strategy strategy_from_string(std::string_view text);
[[nodiscard]] recursion::Retention retention_for(Strategy s);
/// The model a strategy runs with; the standard baseline drops the interaction.
[[nodiscard]] recursion::Model model_for(Strategy s, recursion::Model model);

/// Scans j..k of one window; scans j..m are final once the window is done.
struct Window {
  int j = 1;
  int m = 1;
  int k = 1;

  auto operator<=>(const Window&) const = default;
};

struct WindowPlan {
  std::vector<Window> windows;
  bool overlapping = false;

  /// Windows of `length` scans, each starting `length - overlap` after the previous.
  static WindowPlan overlapping_plan(int duration, int length = 10, int overlap = 5);
  static WindowPlan non_overlapping_plan(int duration, int length = 5);
  static WindowPlan single(int duration);

  [[nodiscard]] int duration() const { return windows.empty() ? 0 : windows.back().k; }
  void validate() const;
};

struct SmootherConfig {
  std::size_t max_hypotheses = 200;  ///< H
  int gibbs_iterations = 10;         ///< T
  double weight_floor = 1e-5;
  Strategy strategy = Strategy::JointSfaUa;
  WindowPlan plan;
  /// Total factor samples per scan; 0 means max_hypotheses.
  int sample_budget = 0;
  /// Candidates kept per hypothesis after factor sampling.
  std::size_t candidates_per_hypothesis = 3;

  void validate() const;
};

/// Largest-remainder split of `total` samples proportional to the weights,
/// at least one each. The result sums to max(total, weights.size()).
[[nodiscard]] std::vector<int> allocate_budget(std::span<const double> log_weights, int total);

/// Gibbs refinement of one history over the window after `root`; every
/// visited state replayed into a node. Falls back to the initial history if
/// its factor weight vanishes.
[[nodiscard]] std::vector<recursion::NodePtr> refine(recursion::Engine& engine,
                                                     const recursion::NodePtr& root,
                                                     const gibbs::History& history, int sweeps,
                                                     gibbs::Rng& rng);

struct ScanStats {
  int scan = 0;
  std::size_t hypotheses = 0;
  double discarded_mass = 0.0;
  double seconds = 0.0;
};

/// Current hypothesis of a running smoother.
struct Track {
  recursion::NodePtr node;
  recursion::NodePtr root;  ///< window root
  double log_weight = 0.0;  ///< normalized
};

/// Smoothing-while-filtering over a window plan.
class Smoother {
 public:
  Smoother(recursion::Engine& engine, SmootherConfig config, std::uint64_t seed);

  /// Processes the next scan.
  void step();
  void run();

  [[nodiscard]] int scan() const { return scan_; }
  [[nodiscard]] const std::vector<Track>& tracks() const { return tracks_; }
  [[nodiscard]] const std::vector<ScanStats>& stats() const { return stats_; }
  /// Current hypotheses as a multi-scan GLMB over every processed scan.
  [[nodiscard]] rfs::MultiScanGlmb posterior() const;

 private:
  void rebase(int root_scan);
  void sfa(int k);

  recursion::Engine& engine_;
  SmootherConfig config_;
  gibbs::Rng rng_;
  int scan_ = 0;
  std::size_t window_ = 0;
  std::vector<Track> tracks_;
  std::vector<ScanStats> stats_;
};

/// Splits a multi-scan GLMB at scan m into its head (first..m) and tail
/// (m+1..last) marginals: weights summed over the other part's histories,
/// per-label densities moment matched within each group.
[[nodiscard]] std::pair<rfs::MultiScanGlmb, rfs::MultiScanGlmb> window_marginalize(
    const rfs::MultiScanGlmb& g, int m);

using MultiObjectTrajectory = std::vector<rfs::TrajectorySegment>;

/// Means of the trajectories of the highest-weight hypothesis; ties go to the
/// smallest history key.
[[nodiscard]] MultiObjectTrajectory extract_estimates(const rfs::MultiScanGlmb& g);

/// Estimates of the best current hypothesis of a smoother.
[[nodiscard]] MultiObjectTrajectory extract_estimates(const Smoother& smoother);

}  // namespace msglmb::smoothing
