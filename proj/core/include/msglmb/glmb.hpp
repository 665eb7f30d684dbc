#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msglmb/association.hpp"
#include "msglmb/common.hpp"
#include "msglmb/densities.hpp"

namespace msglmb::rfs {

/// Concrete attribute sequence of one labeled trajectory.
struct TrajectorySegment {
  Label label;
  int start = 0;
  std::vector<Eigen::VectorXd> states;  ///< one per scan from `start`

  [[nodiscard]] int end() const { return start + static_cast<int>(states.size()) - 1; }
};

/// Gauss-Markov density of one trajectory: per-scan marginals plus lag-one
/// cross-covariances Cov(x_t, x_{t+1}).
struct TrajectoryDensity {
  int start = 0;
  std::vector<densities::Gaussian> marginals;
  std::vector<Eigen::MatrixXd> lag_cross;  ///< size marginals.size() - 1

  [[nodiscard]] int end() const { return start + static_cast<int>(marginals.size()) - 1; }
  [[nodiscard]] int length() const { return static_cast<int>(marginals.size()); }
  [[nodiscard]] bool covers(int scan) const { return scan >= start && scan <= end(); }
  [[nodiscard]] const densities::Gaussian& at(int scan) const;
  /// Joint Gaussian over the stacked attributes of every scan.
  [[nodiscard]] densities::Gaussian joint() const;
  /// Restriction to scans [first, last].
  [[nodiscard]] TrajectoryDensity restrict(int first, int last) const;
  void validate() const;

  bool operator==(const TrajectoryDensity& other) const;
};

/// Label sets I_j..I_k of a scan window.
struct LabelSetSequence {
  int first_scan = 0;
  std::vector<LabelSet> sets;

  [[nodiscard]] int last_scan() const { return first_scan + static_cast<int>(sets.size()) - 1; }
  /// Union of all label sets.
  [[nodiscard]] LabelSet all_labels() const;
  /// Throws InvalidInputError unless labels are distinct, contiguous and born in time.
  void validate() const;

  auto operator<=>(const LabelSetSequence&) const = default;
};

struct GlmbHypothesis {
  int first_scan = 0;
  std::vector<ExtendedAssociationMap> history;  ///< gamma for scans first_scan..
  double log_weight = 0.0;
  std::map<Label, TrajectoryDensity> trajectories;

  [[nodiscard]] int last_scan() const { return first_scan + static_cast<int>(history.size()) - 1; }
  [[nodiscard]] LabelSetSequence label_sets() const;
  /// Canonical text of the association history; the hypothesis identity.
  [[nodiscard]] std::string history_key() const;
  /// Checks label-set/density consistency.
  void validate() const;
};

struct MultiScanGlmb {
  int first_scan = 0;
  int last_scan = 0;
  std::vector<GlmbHypothesis> hypotheses;
  bool normalized = false;
};

using CardinalityDistribution = std::vector<double>;

/// Product of h over the trajectories; 1 for an empty collection.
[[nodiscard]] double multiscan_exponential(
    const std::function<double(const TrajectorySegment&)>& h,
    std::span<const TrajectorySegment> trajectories);

/// Unnormalized Gaussian factor exp(-(x - c)' A (x - c) / 2) applied to every
/// scan of every trajectory.
struct GaussianKernel {
  Eigen::VectorXd center;
  Eigen::MatrixXd precision;
};

/// Sum over hypotheses with label sets `labels` of weight times the attribute
/// integral. Without a kernel the integral is 1.
[[nodiscard]] double joint_label_marginal(const MultiScanGlmb& f, const LabelSetSequence& labels,
                                          const std::optional<GaussianKernel>& kernel = {});

[[nodiscard]] double joint_existence_weight(const MultiScanGlmb& pi,
                                            const LabelSetSequence& labels);

[[nodiscard]] CardinalityDistribution trajectory_cardinality_distribution(const MultiScanGlmb& pi);

[[nodiscard]] MultiScanGlmb normalize(const MultiScanGlmb& pi);

struct TruncationResult {
  MultiScanGlmb glmb;
  double discarded_mass = 0.0;
};

/// Keeps at most `max_hypotheses` largest weights at or above `weight_floor`
/// and renormalizes. If every weight is below the floor the best one is kept.
[[nodiscard]] TruncationResult truncate(const MultiScanGlmb& pi, std::size_t max_hypotheses,
                                        double weight_floor);

/// Collapses hypotheses with identical histories, keeping the first.
[[nodiscard]] std::vector<GlmbHypothesis> merge_unique(std::vector<GlmbHypothesis> hs);

[[nodiscard]] std::string to_text(const MultiScanGlmb& pi);
[[nodiscard]] MultiScanGlmb glmb_from_text(const std::string& text);

}  // namespace msglmb::rfs
