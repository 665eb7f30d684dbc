#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "msglmb/association.hpp"
#include "msglmb/common.hpp"
#include "msglmb/densities.hpp"
#include "msglmb/dynamics.hpp"

namespace msglmb::measurement {

using Rng = std::mt19937_64;

enum class SensorKind {
  BearingRange,       ///< static sensor at the origin, z = [bearing, range]
  BearingOnlyMoving,  ///< z = bearing from a sensor on a fixed orbit
  Position,           ///< z = [px, py], linear
};

/// Position of the moving bearing-only sensor at a scan.
[[nodiscard]] Eigen::Vector2d orbit_position(int scan);

struct SensorModel {
  SensorKind kind = SensorKind::BearingRange;
  Eigen::MatrixXd R;

  static SensorModel bearing_range(double sigma_bearing, double sigma_range);
  static SensorModel bearing_only_moving(double sigma_bearing);
  static SensorModel position(double sigma);

  [[nodiscard]] int dim() const { return static_cast<int>(R.rows()); }
  [[nodiscard]] Eigen::Vector2d sensor_position(int scan) const;
  /// Noise-free measurement of a single state.
  [[nodiscard]] Eigen::VectorXd h(const Eigen::VectorXd& x, int scan) const;
  /// Indices of angular measurement components.
  [[nodiscard]] std::vector<int> angular() const;
  /// Short tag used in measurement files ("br", "b" or "xy").
  [[nodiscard]] std::string tag() const;
  void validate() const;
};

/// Bearing from `sensor` to `p`, measured from the y axis, in [0, 2pi).
[[nodiscard]] double bearing(const Eigen::Vector2d& p, const Eigen::Vector2d& sensor);

/// Poisson clutter, uniform over the observation region.
struct ClutterModel {
  double rate = 10.0;
  double max_range = 2000.0;  ///< bearing-range region radius
  Eigen::Vector2d xy_low{-2000.0, -2000.0};
  Eigen::Vector2d xy_high{2000.0, 2000.0};

  [[nodiscard]] double volume(const SensorModel& sensor) const;
  /// Clutter intensity at z; zero outside the region.
  [[nodiscard]] double intensity(const Eigen::VectorXd& z, const SensorModel& sensor) const;
  [[nodiscard]] Eigen::VectorXd sample(const SensorModel& sensor, Rng& rng) const;
  void validate() const;
};

/// Equal-width bearing cells covering [0, 2pi).
struct CellPartition {
  double width = std::numbers::pi / 90.0;

  [[nodiscard]] int cell_of(double bearing) const;
  [[nodiscard]] int count() const;
};

struct ScanMeasurements {
  int scan = 0;
  std::vector<Eigen::VectorXd> z;
};

/// Predicted measurement of one Gaussian state.
struct PredictedMeasurement {
  Eigen::VectorXd mean;
  Eigen::MatrixXd S;  ///< innovation covariance (includes R)
  Eigen::LLT<Eigen::MatrixXd> llt;
  double log_det = 0.0;
};

[[nodiscard]] PredictedMeasurement predict_measurement(const densities::Gaussian& x,
                                                       const SensorModel& sensor, int scan,
                                                       const densities::UtParams& ut);

/// Innovation (angular components wrapped) and Mahalanobis distance.
[[nodiscard]] Eigen::VectorXd innovation(const PredictedMeasurement& pm, const Eigen::VectorXd& z,
                                         const SensorModel& sensor);
[[nodiscard]] double mahalanobis(const PredictedMeasurement& pm, const Eigen::VectorXd& z,
                                 const SensorModel& sensor);
/// log N(z; predicted mean, S).
[[nodiscard]] double log_likelihood(const PredictedMeasurement& pm, const Eigen::VectorXd& z,
                                    const SensorModel& sensor);

struct DetectionContext {
  const SensorModel& sensor;
  const ClutterModel& clutter;
  double detection_probability;
  int scan;
  densities::UtParams ut;
};

/// log psi(x, j): j = 0 gives log(1 - P_D); j > 0 gives
/// log(P_D g(z_j | x) / kappa(z_j)) with the UT marginal likelihood for a Gaussian x.
[[nodiscard]] double log_psi(const densities::Gaussian& x, int j, std::span<const Eigen::VectorXd> Z,
                             const DetectionContext& ctx);
[[nodiscard]] double psi(const densities::Gaussian& x, int j, std::span<const Eigen::VectorXd> Z,
                         const DetectionContext& ctx);

/// Mean bearing of a group, averaged on the circle relative to the first member.
[[nodiscard]] double group_bearing(std::span<const double> bearings);

/// Stacked map from a group's joint state to its mean bearing.
[[nodiscard]] Eigen::VectorXd group_measurement(const Eigen::VectorXd& stacked,
                                                const SensorModel& sensor, int scan);

/// log of the group factor: j = 0 gives log(1 - P_D); j > 0 gives
/// log(P_D g~(z_j | group) / kappa(z_j)) with g~ Gaussian in the group-mean bearing.
[[nodiscard]] double log_merged_psi(const densities::Gaussian& group_joint, int j,
                                    std::span<const Eigen::VectorXd> Z, const DetectionContext& ctx);
[[nodiscard]] double merged_psi(const densities::Gaussian& group_joint, int j,
                                std::span<const Eigen::VectorXd> Z, const DetectionContext& ctx);

[[nodiscard]] std::vector<AssociationMap> enumerate_association_maps(const LabelSet& labels, int M,
                                                                     int cap);

using Partition = std::vector<LabelSet>;

/// Every set partition, blocks and partitions in canonical order.
[[nodiscard]] std::vector<Partition> enumerate_partitions(const LabelSet& labels, int cap);

[[nodiscard]] std::vector<Eigen::VectorXd> simulate_standard_measurements(
    std::span<const dynamics::LabeledState> truth, const SensorModel& sensor,
    const ClutterModel& clutter, double detection_probability, int scan, Rng& rng);

/// Objects sharing a bearing cell produce at most one measurement at their mean bearing.
[[nodiscard]] std::vector<Eigen::VectorXd> simulate_merged_measurements(
    std::span<const dynamics::LabeledState> truth, const SensorModel& sensor,
    const CellPartition& cells, const ClutterModel& clutter, double detection_probability,
    int scan, Rng& rng);

/// One line per scan: "<scan> <count>" then "<tag> <values...>" per measurement.
void write_measurements(std::ostream& out, std::span<const ScanMeasurements> scans,
                        const SensorModel& sensor);
[[nodiscard]] std::vector<ScanMeasurements> read_measurements(std::istream& in,
                                                              const SensorModel& sensor);

}  // namespace msglmb::measurement
