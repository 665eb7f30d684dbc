#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "msglmb/common.hpp"
#include "msglmb/densities.hpp"

namespace msglmb::dynamics {

/// State layout [px, vx, py, vy].
inline constexpr int kStateDim = 4;

struct LabeledState {
  Eigen::VectorXd attribute;
  Label label;
};

struct BirthComponent {
  double probability = 0.0;
  densities::Gaussian density;
};

/// Static LMB birth; component i yields label (k, i + 1) at an active scan k.
struct BirthModel {
  std::vector<BirthComponent> components;
  std::vector<int> active_scans;  ///< empty means every scan

  [[nodiscard]] bool active(int scan) const;
  [[nodiscard]] LabelSet labels(int scan) const;
  [[nodiscard]] const BirthComponent& component(const Label& l) const;
  void validate() const;
};

struct SurvivalModel {
  double probability = 0.99;

  void validate() const;
};

struct SocialForceParams {
  double V = 550.0;
  double alpha = 30.0;
  double dt = 1.0;
  double interaction_radius = 50.0;  ///< objects closer than this repel each other
  double process_noise_sigma = 1.0;
  int substeps = 10;

  [[nodiscard]] bool interacting() const { return V > 0.0; }
  [[nodiscard]] bool in_range(const Eigen::Vector2d& p, const Eigen::Vector2d& q) const {
    return (p - q).norm() <= interaction_radius;
  }
  void validate() const;
};

[[nodiscard]] Eigen::Vector2d position(const Eigen::VectorXd& x);
[[nodiscard]] Eigen::Vector2d velocity(const Eigen::VectorXd& x);

[[nodiscard]] Eigen::Vector2d repulsive_force(const Eigen::Vector2d& p_rel,
                                              const Eigen::Vector2d& v_other,
                                              const SocialForceParams& params);

/// Sum of repulsive forces on `subject` from every other object within the
/// interaction radius.
[[nodiscard]] Eigen::Vector2d total_force(const Label& subject, std::span<const LabeledState> states,
                                          const SocialForceParams& params);

/// One sample period of the social force ODE for stacked states.
[[nodiscard]] Eigen::VectorXd social_force_step(const Eigen::VectorXd& stacked,
                                                const SocialForceParams& params);

[[nodiscard]] std::vector<LabeledState> social_force_predict(std::span<const LabeledState> states,
                                                             const SocialForceParams& params);

struct JointPrediction {
  densities::JointTrajectoryDensity predicted;
  Eigen::MatrixXd cross_covariance;  ///< Cov(previous stacked, predicted stacked)
};

/// Predicts the `surviving` blocks of a joint density, one unscented transform
/// per cluster of labels that are correlated or may interact.
[[nodiscard]] JointPrediction predict_joint(const densities::JointTrajectoryDensity& joint,
                                            const LabelSet& surviving,
                                            const SocialForceParams& params,
                                            const densities::UtParams& ut);

[[nodiscard]] densities::JointTrajectoryDensity joint_transition_predict(
    const densities::JointTrajectoryDensity& joint, const LabelSet& surviving,
    const SocialForceParams& params, const densities::UtParams& ut);

/// log of eta = w_B(births in I_next) w_S(I_prev and I_next); -inf when I_next
/// contains a label that is neither in I_prev nor a birth label.
[[nodiscard]] double log_transition_weight(const LabelSet& prev, const LabelSet& next, int scan,
                                           const BirthModel& birth, const SurvivalModel& survival);

[[nodiscard]] double transition_weight(const LabelSet& prev, const LabelSet& next, int scan,
                                       const BirthModel& birth, const SurvivalModel& survival);

}  // namespace msglmb::dynamics
