#include "app/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <istream>
#include <map>
#include <array>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include "msglmb/dynamics.hpp"
#include "msglmb/metrics.hpp"
#include "msglmb/recursion.hpp"

namespace msglmb::app {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error("cannot write '" + path.string() + "'");
  }
  return out;
}

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, delim)) {
    out.push_back(cell);
  }
  return out;
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t seed, int run, int stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(run), static_cast<std::uint32_t>(stream)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

smoothing::MultiObjectTrajectory generate_truth(const ScenarioConfig& config, Rng& rng) {
  const recursion::Model model = build_model(config);
  std::vector<dynamics::LabeledState> states;
  smoothing::MultiObjectTrajectory out;
  for (std::size_t i = 0; i < config.birth_means.size(); ++i) {
    const Label label{1, static_cast<int>(i) + 1};
    states.push_back(dynamics::LabeledState{config.birth_means[i], label});
    out.push_back(rfs::TrajectorySegment{label, 1, {config.birth_means[i]}});
  }
  std::normal_distribution<double> noise(0.0, config.process_noise_std);
  for (int k = 2; k <= config.duration_scans; ++k) {
    states = dynamics::social_force_predict(states, model.dynamics);
    for (std::size_t i = 0; i < states.size(); ++i) {
      if (config.truth_process_noise) {
        for (Eigen::Index d = 0; d < states[i].attribute.size(); ++d) {
          states[i].attribute(d) += noise(rng);
        }
      }
      out[i].states.push_back(states[i].attribute);
    }
  }
  return out;
}

std::vector<measurement::ScanMeasurements> simulate_measurements(
    const ScenarioConfig& config, const smoothing::MultiObjectTrajectory& truth, Rng& rng) {
  const recursion::Model model = build_model(config);
  std::vector<measurement::ScanMeasurements> out;
  for (int k = 1; k <= config.duration_scans; ++k) {
    std::vector<dynamics::LabeledState> present;
    for (const auto& t : truth) {
      if (k >= t.start && k <= t.end()) {
        present.push_back(dynamics::LabeledState{t.states[static_cast<std::size_t>(k - t.start)],
                                                 t.label});
      }
    }
    const bool merged =
        config.merged_enabled && k >= config.merged_first_scan && k <= config.merged_last_scan;
    measurement::ScanMeasurements scan{k, {}};
    scan.z = merged ? measurement::simulate_merged_measurements(present, model.sensor,
                                                                model.merged.cells, model.clutter,
                                                                model.detection_probability, k, rng)
                    : measurement::simulate_standard_measurements(
                          present, model.sensor, model.clutter, model.detection_probability, k, rng);
    out.push_back(std::move(scan));
  }
  return out;
}

std::size_t RunReport::failures() const {
  return static_cast<std::size_t>(
      std::count_if(runs.begin(), runs.end(), [](const RunResult& r) { return !r.ok; }));
}

namespace {

std::vector<double> per_scan_mean(const RunReport& report, std::vector<double> RunResult::*field) {
  std::vector<double> sum(static_cast<std::size_t>(report.config.duration_scans), 0.0);
  int n = 0;
  for (const auto& r : report.runs) {
    if (!r.ok) {
      continue;
    }
    ++n;
    const auto& v = r.*field;
    for (std::size_t i = 0; i < sum.size() && i < v.size(); ++i) {
      sum[i] += v[i];
    }
  }
  if (n > 0) {
    for (double& s : sum) {
      s /= n;
    }
  }
  return sum;
}

}  // namespace

std::vector<double> RunReport::mean_ospa() const { return per_scan_mean(*this, &RunResult::ospa); }
std::vector<double> RunReport::mean_ospa2() const { return per_scan_mean(*this, &RunResult::ospa2); }

void score(const ScenarioConfig& config, RunResult& result) {
  const metrics::OspaParams params = build_metrics(config);
  const auto est = metrics::position_tracks(result.estimates);
  const auto truth = metrics::position_tracks(result.truth);
  result.ospa.clear();
  result.ospa2.clear();
  for (int k = 1; k <= config.duration_scans; ++k) {
    const auto X = metrics::points_at(est, k);
    const auto Y = metrics::points_at(truth, k);
    result.ospa.push_back(metrics::ospa(X, Y, params));
    result.ospa2.push_back(metrics::ospa2(est, truth, k, params));
  }
  result.crossings =
      metrics::crossings_in_region(est, config.crossing_center_m, config.crossing_radius_m).size();
}

RunResult track_run(const ScenarioConfig& config, smoothing::Strategy strategy,
                    smoothing::MultiObjectTrajectory truth,
                    std::vector<measurement::ScanMeasurements> scans, std::uint64_t seed) {
  const auto started = std::chrono::steady_clock::now();
  RunResult result;
  result.truth = std::move(truth);
  recursion::Engine engine(smoothing::model_for(strategy, build_model(config)),
                           smoothing::retention_for(strategy), std::move(scans));
  smoothing::Smoother smoother(engine, build_smoother(config, strategy), seed);
  smoother.run();
  result.estimates = smoothing::extract_estimates(smoother);
  result.stats = smoother.stats();
  score(config, result);
  result.ok = true;
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

RunReport run_experiment(const ScenarioConfig& config, smoothing::Strategy strategy) {
  validate(config);
  RunReport report{config, strategy, std::vector<RunResult>(static_cast<std::size_t>(config.runs))};
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < config.runs; r = next++) {
      RunResult& slot = report.runs[static_cast<std::size_t>(r)];
      try {
        Rng truth_rng(stream_seed(config.seed, r, 0));
        auto truth = generate_truth(config, truth_rng);
        Rng meas_rng(stream_seed(config.seed, r, 1));
        auto scans = simulate_measurements(config, truth, meas_rng);
        slot = track_run(config, strategy, std::move(truth), std::move(scans),
                         stream_seed(config.seed, r, 2));
      } catch (const std::exception& e) {
        slot = RunResult{};
        slot.error = e.what();
      }
      slot.run = r;
    }
  };
  const int threads = std::max(1, std::min(config.threads, config.runs));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) {
    pool.emplace_back(worker);
  }
  worker();
  for (auto& t : pool) {
    t.join();
  }
  return report;
}

double mean_over(const std::vector<double>& per_scan, int first, int last) {
  first = std::max(first, 1);
  last = std::min(last, static_cast<int>(per_scan.size()));
  if (first > last) {
    return 0.0;
  }
  double sum = 0.0;
  for (int k = first; k <= last; ++k) {
    sum += per_scan[static_cast<std::size_t>(k - 1)];
  }
  return sum / (last - first + 1);
}

void write_trajectories(std::ostream& out, const std::vector<RunResult>& runs, bool estimates) {
  out << "run,birth_time,birth_index,scan,px,vx,py,vy\n";
  for (const auto& r : runs) {
    for (const auto& t : estimates ? r.estimates : r.truth) {
      for (std::size_t i = 0; i < t.states.size(); ++i) {
        out << r.run << ',' << t.label.birth_time << ',' << t.label.birth_index << ','
            << t.start + static_cast<int>(i);
        for (Eigen::Index d = 0; d < t.states[i].size(); ++d) {
          out << ',' << format_double(t.states[i](d));
        }
        out << '\n';
      }
    }
  }
}

smoothing::MultiObjectTrajectory read_trajectories(std::istream& in, int run) {
  std::string line;
  if (!std::getline(in, line)) {
    throw InvalidInputError("trajectory file is empty");
  }
  std::map<Label, rfs::TrajectorySegment> tracks;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    const auto cells = split(line, ',');
    if (cells.size() != 8) {
      throw InvalidInputError("line " + std::to_string(line_no) + ": expected 8 columns");
    }
    try {
      if (std::stoi(cells[0]) != run) {
        continue;
      }
      const Label label{std::stoi(cells[1]), std::stoi(cells[2])};
      const int scan = std::stoi(cells[3]);
      Eigen::VectorXd x(4);
      for (int d = 0; d < 4; ++d) {
        x(d) = parse_double(cells[static_cast<std::size_t>(4 + d)]);
      }
      auto [it, inserted] = tracks.try_emplace(label, rfs::TrajectorySegment{label, scan, {}});
      if (it->second.end() + 1 != scan) {
        throw InvalidInputError("line " + std::to_string(line_no) + ": scans of " +
                                to_string(label) + " are not consecutive");
      }
      it->second.states.push_back(std::move(x));
    } catch (const std::logic_error&) {
      throw InvalidInputError("line " + std::to_string(line_no) + ": malformed number");
    }
  }
  smoothing::MultiObjectTrajectory out;
  for (auto& [label, t] : tracks) {
    out.push_back(std::move(t));
  }
  return out;
}

void emit_plot_data(const RunReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_out(dir / "truth.csv");
    write_trajectories(out, report.runs, false);
  }
  {
    auto out = open_out(dir / "estimates.csv");
    write_trajectories(out, report.runs, true);
  }
  {
    auto out = open_out(dir / "metrics.csv");
    out << "run,scan,ospa,ospa2,hypotheses,discarded_mass\n";
    for (const auto& r : report.runs) {
      for (std::size_t i = 0; i < r.ospa.size(); ++i) {
        out << r.run << ',' << i + 1 << ',' << format_double(r.ospa[i]) << ','
            << format_double(r.ospa2[i]);
        if (i < r.stats.size()) {
          out << ',' << r.stats[i].hypotheses << ',' << format_double(r.stats[i].discarded_mass);
        } else {
          out << ",,";
        }
        out << '\n';
      }
    }
  }
  {
    auto out = open_out(dir / "summary.csv");
    out << "scan,mean_ospa,mean_ospa2\n";
    if (report.runs.size() > report.failures()) {
      const auto a = report.mean_ospa();
      const auto b = report.mean_ospa2();
      for (std::size_t i = 0; i < a.size(); ++i) {
        out << i + 1 << ',' << format_double(a[i]) << ',' << format_double(b[i]) << '\n';
      }
    }
  }
  {
    auto out = open_out(dir / "runs.csv");
    out << "run,strategy,status,mean_ospa,mean_ospa2,crossings,error\n";
    for (const auto& r : report.runs) {
      std::string error = r.error;
      std::replace(error.begin(), error.end(), ',', ';');
      std::replace(error.begin(), error.end(), '\n', ' ');
      out << r.run << ',' << smoothing::to_string(report.strategy) << ','
          << (r.ok ? "ok" : "failed") << ','
          << format_double(mean_over(r.ospa, 1, static_cast<int>(r.ospa.size()))) << ','
          << format_double(mean_over(r.ospa2, 1, static_cast<int>(r.ospa2.size()))) << ','
          << r.crossings << ',' << error << '\n';
    }
  }
  {
    auto out = open_out(dir / "timing.csv");
    out << "run,scan,seconds\n";
    for (const auto& r : report.runs) {
      for (const auto& s : r.stats) {
        out << r.run << ',' << s.scan << ',' << format_double(s.seconds) << '\n';
      }
    }
  }
}

}  // namespace msglmb::app
