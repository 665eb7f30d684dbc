#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "app/config.hpp"
#include "msglmb/measurement.hpp"
#include "msglmb/smoothing.hpp"

namespace msglmb::app {

using Rng = measurement::Rng;

/// Seed of one stream of one Monte Carlo run; independent of the strategy.
[[nodiscard]] std::uint64_t stream_seed(std::uint64_t seed, int run, int stream);

/// Objects born at scan 1 at the birth means and propagated by the social
/// force model; process noise only if configured.
[[nodiscard]] smoothing::MultiObjectTrajectory generate_truth(const ScenarioConfig& config, Rng& rng);

/// Measurements for scans 1..duration; merged ones inside the configured scan
/// range when merged mode is on.
[[nodiscard]] std::vector<measurement::ScanMeasurements> simulate_measurements(
    const ScenarioConfig& config, const smoothing::MultiObjectTrajectory& truth, Rng& rng);

struct RunResult {
  int run = 0;
  bool ok = false;
  std::string error;
  smoothing::MultiObjectTrajectory truth;
  smoothing::MultiObjectTrajectory estimates;
  std::vector<double> ospa;   ///< per scan 1..duration
  std::vector<double> ospa2;  ///< per scan 1..duration
  std::vector<smoothing::ScanStats> stats;
  std::size_t crossings = 0;  ///< estimate crossings inside the crossing circle
  double seconds = 0.0;
};

struct RunReport {
  ScenarioConfig config;
  smoothing::Strategy strategy = smoothing::Strategy::JointSfaUa;
  std::vector<RunResult> runs;

  [[nodiscard]] std::size_t failures() const;
  /// Per-scan means over successful runs.
  [[nodiscard]] std::vector<double> mean_ospa() const;
  [[nodiscard]] std::vector<double> mean_ospa2() const;
};

/// Tracks the given measurements and scores the estimates against truth.
[[nodiscard]] RunResult track_run(const ScenarioConfig& config, smoothing::Strategy strategy,
                                  smoothing::MultiObjectTrajectory truth,
                                  std::vector<measurement::ScanMeasurements> scans,
                                  std::uint64_t seed);

/// Per-scan OSPA and OSPA2 of estimates against truth, scans 1..duration.
void score(const ScenarioConfig& config, RunResult& result);

/// Truth, measurements, tracking and metrics for every run; runs spread over
/// config.threads workers. Failed runs are recorded, not thrown.
[[nodiscard]] RunReport run_experiment(const ScenarioConfig& config, smoothing::Strategy strategy);

/// Mean of values[first-1 .. last-1], clamped to the available scans.
[[nodiscard]] double mean_over(const std::vector<double>& per_scan, int first, int last);

/// Writes truth.csv, estimates.csv, metrics.csv, summary.csv, runs.csv and
/// timing.csv into `dir`. Everything but timing.csv is deterministic.
void emit_plot_data(const RunReport& report, const std::filesystem::path& dir);

void write_trajectories(std::ostream& out, const std::vector<RunResult>& runs, bool estimates);
/// Reads one run's trajectories from the truth.csv / estimates.csv format.
[[nodiscard]] smoothing::MultiObjectTrajectory read_trajectories(std::istream& in, int run);

}  // namespace msglmb::app
