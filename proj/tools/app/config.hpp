#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "msglmb/common.hpp"
#include "msglmb/metrics.hpp"
#include "msglmb/recursion.hpp"
#include "msglmb/smoothing.hpp"

namespace msglmb::app {

/// Configuration rejected at load time; the message carries the line number.
class ConfigError : public InvalidInputError {
 public:
  using InvalidInputError::InvalidInputError;
};

/// Declarative experiment description. Defaults give the bearing-range
/// social-force scenario.
struct ScenarioConfig {
  int duration_scans = 100;
  std::uint64_t seed = 1;
  int runs = 1;
  int threads = 1;
  bool truth_process_noise = false;

  double birth_probability = 0.01;
  double birth_std = 10.0;
  std::vector<int> birth_active_scans;  ///< empty means every scan
  std::vector<Eigen::Vector4d> birth_means{
      {-500.0, 10.0, 0.0, 10.0},
      {500.0, -10.0, 0.0, 10.0},
      {-750.0, 15.0, 0.0, 10.0},
      {750.0, -15.0, 0.0, 10.0},
  };
  double survival_probability = 0.99;

  double force_strength = 550.0;
  double force_range_m = 30.0;
  double period_s = 1.0;
  double interaction_range_m = 50.0;
  double process_noise_std = 1.0;
  int substeps = 10;

  std::string sensor_kind = "bearing-range";  ///< bearing-range, bearing-only or position
  double bearing_std_deg = 2.0;
  double range_std_m = 10.0;
  double position_std_m = 10.0;
  double detection_probability = 0.7;
  double clutter_rate = 10.0;
  double clutter_max_range_m = 2000.0;

  bool merged_enabled = false;
  double merged_cell_width_deg = 2.0;
  int merged_gate_cells = 3;
  int merged_partition_cap = 6;
  int merged_first_scan = 45;
  int merged_last_scan = 55;

  double ut_alpha = 0.1;
  double ut_beta = 2.0;

  std::string strategy = "joint-sfa-ua";
  int max_hypotheses = 200;
  int gibbs_iterations = 10;
  double weight_floor = 1e-5;
  int sample_budget = 0;
  int candidates_per_hypothesis = 3;
  double gate_mahalanobis = 6.0;
  std::string window = "overlapping";  ///< overlapping, non-overlapping or single
  int window_length_scans = 10;
  int window_overlap_scans = 5;

  double ospa_cutoff_m = 100.0;
  double ospa_order = 1.0;
  int ospa2_window_scans = 10;
  Eigen::Vector2d crossing_center_m{0.0, 500.0};  ///< where the tracks meet
  double crossing_radius_m = 50.0;

  bool operator==(const ScenarioConfig&) const = default;
};

/// Bearing-range scenario whose tracks meet near (0, 500).
[[nodiscard]] ScenarioConfig standard_scenario();
/// Bearing-only moving-sensor scenario with merged measurements around the meeting.
[[nodiscard]] ScenarioConfig merged_scenario();

/// Throws ConfigError naming the offending line.
[[nodiscard]] ScenarioConfig parse_config(const std::string& text);
[[nodiscard]] ScenarioConfig load_config(const std::string& path);
[[nodiscard]] std::string to_yaml(const ScenarioConfig& config);
/// Throws ConfigError on out-of-range values.
void validate(const ScenarioConfig& config);

[[nodiscard]] recursion::Model build_model(const ScenarioConfig& config);
[[nodiscard]] smoothing::SmootherConfig build_smoother(const ScenarioConfig& config,
                                                       smoothing::Strategy strategy);
[[nodiscard]] metrics::OspaParams build_metrics(const ScenarioConfig& config);

}  // namespace msglmb::app
