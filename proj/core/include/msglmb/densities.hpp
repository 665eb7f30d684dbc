#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "msglmb/common.hpp"

namespace msglmb::densities {

struct Gaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;

  Gaussian() = default;
  Gaussian(Eigen::VectorXd m, Eigen::MatrixXd p);

  [[nodiscard]] int dim() const { return static_cast<int>(mean.size()); }
  [[nodiscard]] double log_pdf(const Eigen::VectorXd& x) const;
};

/// Scaled unscented transform parameters. `kappa` defaults to 3 - d.
struct UtParams {
  double alpha = 0.1;
  double beta = 2.0;
  std::optional<double> kappa;

  [[nodiscard]] double kappa_for(int dim) const { return kappa ? *kappa : 3.0 - dim; }
  void validate() const;
};

struct SigmaPoints {
  Eigen::MatrixXd points;  ///< one column per sigma point
  Eigen::VectorXd mean_weights;
  Eigen::VectorXd cov_weights;
};

using VectorMap = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct Transformed {
  Gaussian output;
  Eigen::MatrixXd cross_covariance;  ///< Cov(input, output)
};

struct UpdateResult {
  Gaussian posterior;
  double log_likelihood = 0.0;  ///< log N(z; predicted measurement, S)
  Eigen::VectorXd innovation;
  Eigen::MatrixXd innovation_covariance;
  double mahalanobis = 0.0;
};

[[nodiscard]] Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m);

/// Clamps negative eigenvalues to zero in place. Returns true if anything changed.
bool repair_psd(Eigen::MatrixXd& m);

[[nodiscard]] SigmaPoints sigma_points(const Gaussian& g, const UtParams& params);

/// Unscented transform. Output components listed in `angular` are unwrapped
/// around the central sigma point before averaging.
[[nodiscard]] Transformed unscented_transform(const Gaussian& g, const VectorMap& f,
                                              const UtParams& params,
                                              std::span<const int> angular = {});

[[nodiscard]] Gaussian unscented_propagate(const Gaussian& joint, const VectorMap& f,
                                           const UtParams& params,
                                           const Eigen::MatrixXd& additive_noise);

/// UT-linearized Bayes update with measurement likelihood N(z; h(x), R).
[[nodiscard]] UpdateResult conditional_update(const Gaussian& prior, const VectorMap& h,
                                              const Eigen::VectorXd& z,
                                              const Eigen::MatrixXd& R, const UtParams& params,
                                              std::span<const int> angular = {});

/// log N(r; 0, S) for an innovation r.
[[nodiscard]] double log_normal_density(const Eigen::VectorXd& r, const Eigen::MatrixXd& S);

/// Closed-form KL(p || q).
[[nodiscard]] double kl_divergence(const Gaussian& p, const Gaussian& q);

/// Joint Gaussian over stacked per-label blocks laid out in label order.
class JointTrajectoryDensity {
 public:
  struct Block {
    int offset = 0;
    int length = 0;
  };

  JointTrajectoryDensity() = default;
  /// `layout` lists (label, block length) pairs; labels must be sorted and distinct.
  JointTrajectoryDensity(const std::vector<std::pair<Label, int>>& layout, Gaussian joint);

  static JointTrajectoryDensity independent(const std::vector<std::pair<Label, Gaussian>>& parts);

  [[nodiscard]] const LabelSet& labels() const { return labels_; }
  [[nodiscard]] bool has(const Label& l) const;
  [[nodiscard]] Block block(const Label& l) const;
  [[nodiscard]] const Gaussian& joint() const { return joint_; }
  [[nodiscard]] int dim() const { return joint_.dim(); }
  [[nodiscard]] bool empty() const { return labels_.empty(); }

  [[nodiscard]] Gaussian marginal(const Label& l) const;
  /// Marginal over a sorted subset of labels.
  [[nodiscard]] JointTrajectoryDensity slice(const LabelSet& keep) const;
  /// Adds independent blocks; result stays in label order.
  [[nodiscard]] JointTrajectoryDensity with_independent(
      const std::vector<std::pair<Label, Gaussian>>& extra) const;
  /// Product of the per-label marginals.
  [[nodiscard]] JointTrajectoryDensity block_diagonal() const;
  /// Index positions of the given labels' blocks in the stacked vector.
  [[nodiscard]] std::vector<int> indices(const LabelSet& subset) const;
  /// Connected components of labels linked by cross-covariance above `tolerance`.
  [[nodiscard]] std::vector<LabelSet> correlated_groups(double tolerance = 0.0) const;

 private:
  LabelSet labels_;
  std::vector<Block> blocks_;
  Gaussian joint_;
};

/// Gaussian over one label's block (mean slice and covariance sub-block).
[[nodiscard]] Gaussian marginalize_to_label(const JointTrajectoryDensity& joint, const Label& l);

/// Fixture text: dimension, mean, then row-major covariance on one line.
[[nodiscard]] std::string to_fixture(const Gaussian& g);
[[nodiscard]] Gaussian gaussian_from_fixture(const std::string& text);

}  // namespace msglmb::densities
