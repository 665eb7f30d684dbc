#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "app/config.hpp"
#include "app/experiment.hpp"

namespace fs = std::filesystem;
using namespace msglmb;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRunFailure = 2;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> runs;
  std::optional<int> threads;
  std::string strategy;
  std::string out_dir = "out";
  std::string input;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "YAML scenario file");
  cmd->add_option("--seed", o.seed, "base RNG seed");
  cmd->add_option("--runs", o.runs, "Monte Carlo runs");
  cmd->add_option("--threads", o.threads, "worker threads");
  cmd->add_option("--out-dir", o.out_dir, "output directory");
}

app::ScenarioConfig resolve(const Options& o, app::ScenarioConfig base) {
  app::ScenarioConfig c = o.config.empty() ? std::move(base) : app::load_config(o.config);
  if (o.seed) {
    c.seed = *o.seed;
  }
  if (o.runs) {
    c.runs = *o.runs;
  }
  if (o.threads) {
    c.threads = *o.threads;
  }
  if (!o.strategy.empty()) {
    c.strategy = o.strategy;
  }
  app::validate(c);
  return c;
}

fs::path measurement_file(const fs::path& dir, int run) {
  return dir / ("measurements_" + std::to_string(run) + ".txt");
}

void write_config(const app::ScenarioConfig& c, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream(dir / "config.yaml") << app::to_yaml(c);
}

int simulate(const Options& o) {
  const app::ScenarioConfig c = resolve(o, app::standard_scenario());
  const fs::path dir = o.out_dir;
  write_config(c, dir);
  const recursion::Model model = app::build_model(c);
  std::vector<app::RunResult> runs;
  for (int r = 0; r < c.runs; ++r) {
    app::Rng truth_rng(app::stream_seed(c.seed, r, 0));
    app::RunResult run;
    run.run = r;
    run.truth = app::generate_truth(c, truth_rng);
    app::Rng meas_rng(app::stream_seed(c.seed, r, 1));
    const auto scans = app::simulate_measurements(c, run.truth, meas_rng);
    std::ofstream out(measurement_file(dir, r));
    measurement::write_measurements(out, scans, model.sensor);
    runs.push_back(std::move(run));
  }
  std::ofstream truth(dir / "truth.csv");
  app::write_trajectories(truth, runs, false);
  std::cout << "simulated " << c.runs << " run(s) into " << dir.string() << '\n';
  return kOk;
}

int finish(const app::RunReport& report, const fs::path& dir) {
  app::emit_plot_data(report, dir);
  for (const auto& r : report.runs) {
    if (!r.ok) {
      std::cerr << "run " << r.run << " failed: " << r.error << '\n';
    }
  }
  std::cout << smoothing::to_string(report.strategy) << ": " << report.runs.size() - report.failures()
            << "/" << report.runs.size() << " run(s) ok, mean OSPA2 "
            << format_double(app::mean_over(report.mean_ospa2(), 1, report.config.duration_scans))
            << '\n';
  return report.failures() > 0 ? kRunFailure : kOk;
}

int track(const Options& o) {
  const app::ScenarioConfig c = resolve(o, app::standard_scenario());
  const fs::path in = o.input.empty() ? fs::path(o.out_dir) : fs::path(o.input);
  const fs::path dir = o.out_dir;
  write_config(c, dir);
  const recursion::Model model = app::build_model(c);
  const auto strategy = smoothing::strategy_from_string(c.strategy);
  app::RunReport report{c, strategy, {}};
  for (int r = 0; r < c.runs; ++r) {
    app::RunResult result;
    try {
      std::ifstream mf(measurement_file(in, r));
      if (!mf) {
        throw InvalidInputError("missing " + measurement_file(in, r).string());
      }
      auto scans = measurement::read_measurements(mf, model.sensor);
      smoothing::MultiObjectTrajectory truth;
      if (std::ifstream tf(in / "truth.csv"); tf) {
        truth = app::read_trajectories(tf, r);
      }
      result = app::track_run(c, strategy, std::move(truth), std::move(scans),
                              app::stream_seed(c.seed, r, 2));
    } catch (const std::exception& e) {
      result = app::RunResult{};
      result.error = e.what();
    }
    result.run = r;
    report.runs.push_back(std::move(result));
  }
  return finish(report, dir);
}

int evaluate(const Options& o) {
  const app::ScenarioConfig c = resolve(o, app::standard_scenario());
  const fs::path in = o.input.empty() ? fs::path(o.out_dir) : fs::path(o.input);
  app::RunReport report{c, smoothing::strategy_from_string(c.strategy), {}};
  for (int r = 0; r < c.runs; ++r) {
    app::RunResult result;
    result.run = r;
    try {
      std::ifstream tf(in / "truth.csv");
      std::ifstream ef(in / "estimates.csv");
      if (!tf || !ef) {
        throw InvalidInputError("truth.csv and estimates.csv are required in " + in.string());
      }
      result.truth = app::read_trajectories(tf, r);
      result.estimates = app::read_trajectories(ef, r);
      app::score(c, result);
      result.ok = true;
    } catch (const std::exception& e) {
      result.error = e.what();
    }
    report.runs.push_back(std::move(result));
  }
  return finish(report, o.out_dir);
}

int reproduce(const Options& o, app::ScenarioConfig preset, int default_runs) {
  if (!o.runs) {
    preset.runs = default_runs;
  }
  const app::ScenarioConfig c = resolve(o, std::move(preset));
  std::vector<smoothing::Strategy> strategies;
  if (o.strategy.empty()) {
    strategies = {smoothing::Strategy::SfaThenUa, smoothing::Strategy::JointSfaUa,
                  smoothing::Strategy::StandardMultiscan};
  } else {
    strategies = {smoothing::strategy_from_string(o.strategy)};
  }
  const fs::path dir = o.out_dir;
  write_config(c, dir);
  std::ofstream cmp(dir / "comparison.csv");
  cmp << "strategy,run,status,mean_ospa2_40_60,crossings\n";
  int status = kOk;
  for (auto s : strategies) {
    const app::RunReport report = app::run_experiment(c, s);
    status = std::max(status, finish(report, dir / smoothing::to_string(s)));
    for (const auto& r : report.runs) {
      cmp << smoothing::to_string(s) << ',' << r.run << ',' << (r.ok ? "ok" : "failed") << ','
          << format_double(app::mean_over(r.ospa2, 40, 60)) << ',' << r.crossings << '\n';
    }
  }
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Multi-scan GLMB smoothing for interacting objects"};
  cli.require_subcommand(1);
  Options o;

  auto* sim = cli.add_subcommand("simulate", "generate truth and measurements");
  add_common(sim, o);
  auto* trk = cli.add_subcommand("track", "track simulated measurements");
  add_common(trk, o);
  trk->add_option("--strategy", o.strategy, "sfa-then-ua, joint-sfa-ua or standard");
  trk->add_option("--input", o.input, "directory written by simulate (default: --out-dir)");
  auto* eva = cli.add_subcommand("evaluate", "score estimates against truth");
  add_common(eva, o);
  eva->add_option("--input", o.input, "directory with truth.csv and estimates.csv");
  auto* fig3 = cli.add_subcommand("reproduce-fig3", "social force comparison, bearing-range sensor");
  add_common(fig3, o);
  fig3->add_option("--strategy", o.strategy, "run a single strategy");
  auto* fig6 = cli.add_subcommand("reproduce-fig6", "merged measurements, bearing-only sensor");
  add_common(fig6, o);
  fig6->add_option("--strategy", o.strategy, "run a single strategy");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*sim) {
      return simulate(o);
    }
    if (*trk) {
      return track(o);
    }
    if (*eva) {
      return evaluate(o);
    }
    if (*fig3) {
      return reproduce(o, app::standard_scenario(), 10);
    }
    return reproduce(o, app::merged_scenario(), 10);
  } catch (const InvalidInputError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRunFailure;
  }
}
