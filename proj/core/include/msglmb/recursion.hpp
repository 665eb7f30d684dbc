#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "msglmb/association.hpp"
#include "msglmb/common.hpp"
#include "msglmb/densities.hpp"
#include "msglmb/dynamics.hpp"
#include "msglmb/gibbs.hpp"
#include "msglmb/glmb.hpp"
#include "msglmb/measurement.hpp"

namespace msglmb::recursion {

/// Merged-measurement settings; objects within `gate_cells` cells of each
/// other form a cluster whose members may share one measurement.
struct MergedModel {
  bool enabled = false;
  measurement::CellPartition cells;
  int gate_cells = 3;
  int partition_cap = 6;
};

struct Model {
  dynamics::BirthModel birth;
  dynamics::SurvivalModel survival;
  dynamics::SocialForceParams dynamics;
  measurement::SensorModel sensor;
  measurement::ClutterModel clutter;
  double detection_probability = 0.7;
  densities::UtParams ut;
  /// Mahalanobis gate on factor-table detections; <= 0 disables gating.
  double gate = 6.0;
  MergedModel merged;

  void validate() const;
};

/// What a node keeps of its updated joint density.
enum class Retention {
  Joint,     ///< full joint across labels
  Marginal,  ///< per-label marginals only (block diagonal)
};

/// Prediction of every label alive at a node to the next scan.
struct Prediction {
  LabelSet labels;
  densities::JointTrajectoryDensity predicted;
  Eigen::MatrixXd cross;  ///< Cov(current stacked, predicted stacked)
};

/// One scan of one association history. Immutable once built, apart from
/// lazily computed caches.
class Node {
 public:
  int id = 0;
  int scan = 0;
  ExtendedAssociationMap gamma;  ///< empty at a root
  std::shared_ptr<const Node> parent;
  std::shared_ptr<const Prediction> parent_prediction;
  densities::JointTrajectoryDensity posterior;  ///< over labels alive at `scan`
  double log_transition = 0.0;
  double log_likelihood = 0.0;
  double log_weight = 0.0;         ///< cumulative exact weight
  double log_factor_weight = 0.0;  ///< cumulative factor-table weight

  [[nodiscard]] const LabelSet& alive() const { return posterior.labels(); }
  [[nodiscard]] bool is_root() const { return parent == nullptr; }

 private:
  friend class Engine;
  mutable std::shared_ptr<const Prediction> prediction_;
  mutable std::shared_ptr<const gibbs::FactorTable> factors_;
};

using NodePtr = std::shared_ptr<const Node>;

/// Builds and memoizes nodes. Not thread safe; use one engine per thread.
class Engine {
 public:
  Engine(Model model, Retention retention, std::vector<measurement::ScanMeasurements> scans);

  [[nodiscard]] const Model& model() const { return model_; }
  [[nodiscard]] Retention retention() const { return retention_; }
  [[nodiscard]] const std::vector<Eigen::VectorXd>& measurements(int scan) const;
  [[nodiscard]] bool has_measurements(int scan) const;

  [[nodiscard]] NodePtr root(int scan, densities::JointTrajectoryDensity initial,
                             double log_weight = 0.0);
  /// Block-diagonal copy of `node` that keeps its ancestry.
  [[nodiscard]] NodePtr reroot(const NodePtr& node);
  /// Child of `parent` for the next scan. Throws InvalidInputError for an invalid gamma.
  [[nodiscard]] NodePtr extend(const NodePtr& parent, const ExtendedAssociationMap& gamma);

  [[nodiscard]] std::shared_ptr<const Prediction> prediction(const Node& node);
  /// Factors of the scan after `node`.
  [[nodiscard]] std::shared_ptr<const gibbs::FactorTable> factors(const Node& node);

  /// Drops memoized nodes nobody else references.
  void collect_garbage();
  [[nodiscard]] std::size_t memo_size() const { return memo_.size(); }

 private:
  struct Key {
    int parent = 0;
    ExtendedAssociationMap gamma;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept {
      return k.gamma.hash() * 1000003u ^ static_cast<std::size_t>(k.parent);
    }
  };

  [[nodiscard]] NodePtr build(const NodePtr& parent, const ExtendedAssociationMap& gamma);

  Model model_;
  Retention retention_;
  std::map<int, std::vector<Eigen::VectorXd>> scans_;
  std::unordered_map<Key, NodePtr, KeyHash> memo_;
  int next_id_ = 0;
};

/// Association context over the scans after `root`, backed by an engine.
class NodeContext : public gibbs::AssociationContext {
 public:
  NodeContext(Engine& engine, NodePtr root, int last_scan);

  [[nodiscard]] int first_scan() const override { return root_->scan + 1; }
  [[nodiscard]] int last_scan() const override { return last_scan_; }
  [[nodiscard]] double log_initial_weight() const override { return root_->log_factor_weight; }
  [[nodiscard]] std::shared_ptr<const gibbs::FactorTable> factors(
      std::span<const ExtendedAssociationMap> prefix) override;

  /// Node reached by replaying `history` from the root.
  [[nodiscard]] NodePtr replay(std::span<const ExtendedAssociationMap> history);

 private:
  Engine& engine_;
  NodePtr root_;
  int last_scan_;
  std::vector<NodePtr> chain_;  ///< last replayed chain, chain_[0] = root
};

struct ExactHypothesis {
  NodePtr node;
  double log_weight = 0.0;
};

/// Hypotheses of the exact posterior at one scan; weights normalized.
struct ExactPosterior {
  int scan = 0;
  std::vector<ExactHypothesis> hypotheses;
};

struct PredictedHypothesis {
  NodePtr parent;
  LabelSet labels;  ///< I_k
  double log_weight = 0.0;
};

struct PredictedPosterior {
  int scan = 0;
  std::vector<PredictedHypothesis> hypotheses;
};

[[nodiscard]] ExactPosterior initial_posterior(Engine& engine, int scan,
                                               densities::JointTrajectoryDensity initial = {});

/// Every survivor subset times every birth subset of every hypothesis.
[[nodiscard]] PredictedPosterior predict(const ExactPosterior& posterior, Engine& engine);

/// Exact update over every association map; normalized. Dispatches to
/// update_merged when the model has merged measurements enabled.
[[nodiscard]] ExactPosterior update(const PredictedPosterior& predicted, Engine& engine,
                                    int map_cap = 1'000'000);

[[nodiscard]] ExactPosterior update_merged(const PredictedPosterior& predicted, Engine& engine,
                                           int map_cap = 1'000'000);

/// Multi-scan GLMB whose hypotheses carry per-trajectory smoothed marginals.
[[nodiscard]] rfs::MultiScanGlmb approximate_cardinality_matched(const ExactPosterior& exact);

[[nodiscard]] rfs::MultiScanGlmb approximate_prediction(const PredictedPosterior& predicted,
                                                        Engine& engine);

/// Exhaustive enumeration of extended association histories over scans
/// initial.scan + 1 .. last_scan. Throws SizeError past `cap` hypotheses.
[[nodiscard]] ExactPosterior brute_force_posterior(Engine& engine, const ExactPosterior& initial,
                                                   int last_scan, std::size_t cap = 1'000'000);

/// Every extended map over `domain` with values in -1..M and positive 1-1.
[[nodiscard]] std::vector<ExtendedAssociationMap> enumerate_extended_maps(const LabelSet& domain,
                                                                          int M, std::size_t cap);

/// Chain of nodes from the root to `leaf`.
[[nodiscard]] std::vector<NodePtr> chain_of(const NodePtr& leaf);

/// Smoothed hypothesis for the chain ending at `leaf`. Trajectories cover
/// scans after the chain root; labels that die are frozen at their last scan.
[[nodiscard]] rfs::GlmbHypothesis materialize(const NodePtr& leaf, double log_weight);

}  // namespace msglmb::recursion
