#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "msglmb/association.hpp"
#include "msglmb/common.hpp"

namespace msglmb::gibbs {

using Rng = std::mt19937_64;
using History = std::vector<ExtendedAssociationMap>;

/// Per-label log eta factors of one scan. Column u + 1 holds assignment u,
/// so column 0 is death (or no birth) and column 1 is misdetection.
struct FactorTable {
  int scan = 0;
  int num_measurements = 0;
  LabelSet labels;
  std::vector<char> is_birth;
  Eigen::MatrixXd log_eta;
  /// Merge cluster per label; labels in one cluster may share a measurement.
  std::vector<int> cluster;

  [[nodiscard]] std::size_t size() const { return labels.size(); }
  [[nodiscard]] double at(std::size_t i, int u) const { return log_eta(static_cast<Eigen::Index>(i), u + 1); }
  [[nodiscard]] std::optional<std::size_t> index(const Label& l) const;
  [[nodiscard]] bool may_share(std::size_t i, std::size_t j) const;
  /// Indicator and factor product of gamma in log domain; -inf when gamma is
  /// not a valid assignment over exactly these labels.
  [[nodiscard]] double log_product(const ExtendedAssociationMap& gamma) const;
};

/// Source of factor tables for histories that start after a fixed prefix.
class AssociationContext {
 public:
  virtual ~AssociationContext() = default;
  [[nodiscard]] virtual int first_scan() const = 0;
  [[nodiscard]] virtual int last_scan() const = 0;
  [[nodiscard]] virtual double log_initial_weight() const = 0;
  /// Factors of scan first_scan() + prefix.size(), given the maps of the earlier scans.
  [[nodiscard]] virtual std::shared_ptr<const FactorTable> factors(
      std::span<const ExtendedAssociationMap> prefix) = 0;
};

/// eta_j^(i)(u) of the label at `index` for the scan following `prefix`.
[[nodiscard]] double eta_factor(AssociationContext& ctx, std::span<const ExtendedAssociationMap> prefix,
                                std::size_t index, int u);

/// log of the ranked-assignment weight of a history covering first..last scan.
[[nodiscard]] double joint_weight(std::span<const ExtendedAssociationMap> history,
                                  AssociationContext& ctx);

/// Draws one-scan extensions label by label, masking taken measurements.
[[nodiscard]] std::vector<ExtendedAssociationMap> factor_sampling(const FactorTable& table,
                                                                  int samples, Rng& rng);

enum class Conditioning {
  Prefix,  ///< conditionals from the scan's own factors
  Full,    ///< exact conditionals of the whole-history weight
};

struct GibbsOptions {
  Conditioning conditioning = Conditioning::Prefix;
};

/// Runs `sweeps` sweeps over every scan of the context; returns the initial
/// state followed by the state after each sweep.
[[nodiscard]] std::vector<History> ms_gibbs(const History& initial, int sweeps,
                                            AssociationContext& ctx, Rng& rng,
                                            const GibbsOptions& options = {});

}  // namespace msglmb::gibbs
