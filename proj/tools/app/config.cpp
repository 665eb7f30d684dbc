#include "app/config.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>

namespace msglmb::app {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

[[noreturn]] void fail_at(const YAML::Node& node, const std::string& what) {
  throw ConfigError("line " + std::to_string(node.Mark().line + 1) + ": " + what);
}

double read_double(const YAML::Node& node, const std::string& key) {
  if (!node.IsScalar()) {
    fail_at(node, key + " must be a number");
  }
  try {
    return parse_double(node.Scalar());
  } catch (const InvalidInputError&) {
    fail_at(node, key + " must be a number, got '" + node.Scalar() + "'");
  }
}

int read_int(const YAML::Node& node, const std::string& key) {
  try {
    return node.as<int>();
  } catch (const YAML::Exception&) {
    fail_at(node, key + " must be an integer");
  }
}

bool read_bool(const YAML::Node& node, const std::string& key) {
  try {
    return node.as<bool>();
  } catch (const YAML::Exception&) {
    fail_at(node, key + " must be true or false");
  }
}

std::string read_string(const YAML::Node& node, const std::string& key) {
  if (!node.IsScalar()) {
    fail_at(node, key + " must be a string");
  }
  return node.Scalar();
}

std::vector<double> read_vector(const YAML::Node& node, const std::string& key, std::size_t size) {
  if (!node.IsSequence() || (size > 0 && node.size() != size)) {
    fail_at(node, key + " must be a list of " + std::to_string(size) + " numbers");
  }
  std::vector<double> out;
  for (const auto& item : node) {
    out.push_back(read_double(item, key));
  }
  return out;
}

struct Field {
  std::string section;
  std::string key;
  std::function<void(const YAML::Node&, ScenarioConfig&)> read;
  std::function<void(YAML::Emitter&, const ScenarioConfig&)> write;
};

template <typename T>
Field scalar(std::string section, std::string key, T ScenarioConfig::*member) {
  Field f;
  f.section = std::move(section);
  f.key = key;
  f.read = [member, key](const YAML::Node& n, ScenarioConfig& c) {
    if constexpr (std::is_same_v<T, double>) {
      c.*member = read_double(n, key);
    } else if constexpr (std::is_same_v<T, bool>) {
      c.*member = read_bool(n, key);
    } else if constexpr (std::is_same_v<T, std::string>) {
      c.*member = read_string(n, key);
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      try {
        c.*member = n.as<std::uint64_t>();
      } catch (const YAML::Exception&) {
        fail_at(n, key + " must be a non-negative integer");
      }
    } else {
      c.*member = read_int(n, key);
    }
  };
  f.write = [member](YAML::Emitter& e, const ScenarioConfig& c) {
    if constexpr (std::is_same_v<T, double>) {
      e << format_double(c.*member);
    } else {
      e << c.*member;
    }
  };
  return f;
}

const std::vector<Field>& fields() {
  using C = ScenarioConfig;
  static const std::vector<Field> all = [] {
    std::vector<Field> f;
    f.push_back(scalar("scenario", "duration_scans", &C::duration_scans));
    f.push_back(scalar("scenario", "seed", &C::seed));
    f.push_back(scalar("scenario", "runs", &C::runs));
    f.push_back(scalar("scenario", "threads", &C::threads));
    f.push_back(scalar("scenario", "truth_process_noise", &C::truth_process_noise));
    f.push_back(scalar("birth", "probability", &C::birth_probability));
    f.push_back(scalar("birth", "std", &C::birth_std));
    f.push_back(Field{
        "birth", "active_scans",
        [](const YAML::Node& n, C& c) {
          if (!n.IsSequence()) {
            fail_at(n, "active_scans must be a list of scans");
          }
          c.birth_active_scans.clear();
          for (const auto& item : n) {
            c.birth_active_scans.push_back(read_int(item, "active_scans"));
          }
        },
        [](YAML::Emitter& e, const C& c) {
          e << YAML::Flow << YAML::BeginSeq;
          for (int s : c.birth_active_scans) {
            e << s;
          }
          e << YAML::EndSeq;
        }});
    f.push_back(Field{
        "birth", "means",
        [](const YAML::Node& n, C& c) {
          if (!n.IsSequence()) {
            fail_at(n, "means must be a list of [px, vx, py, vy] entries");
          }
          c.birth_means.clear();
          for (const auto& item : n) {
            const auto v = read_vector(item, "means", 4);
            c.birth_means.emplace_back(v[0], v[1], v[2], v[3]);
          }
        },
        [](YAML::Emitter& e, const C& c) {
          e << YAML::BeginSeq;
          for (const auto& m : c.birth_means) {
            e << YAML::Flow << YAML::BeginSeq;
            for (int i = 0; i < 4; ++i) {
              e << format_double(m(i));
            }
            e << YAML::EndSeq;
          }
          e << YAML::EndSeq;
        }});
    f.push_back(scalar("survival", "probability", &C::survival_probability));
    f.push_back(scalar("social_force", "strength", &C::force_strength));
    f.push_back(scalar("social_force", "range_m", &C::force_range_m));
    f.push_back(scalar("social_force", "period_s", &C::period_s));
    f.push_back(scalar("social_force", "interaction_range_m", &C::interaction_range_m));
    f.push_back(scalar("social_force", "process_noise_std", &C::process_noise_std));
    f.push_back(scalar("social_force", "substeps", &C::substeps));
    f.push_back(scalar("sensor", "kind", &C::sensor_kind));
    f.push_back(scalar("sensor", "bearing_std_deg", &C::bearing_std_deg));
    f.push_back(scalar("sensor", "range_std_m", &C::range_std_m));
    f.push_back(scalar("sensor", "position_std_m", &C::position_std_m));
    f.push_back(scalar("sensor", "detection_probability", &C::detection_probability));
    f.push_back(scalar("clutter", "rate_per_scan", &C::clutter_rate));
    f.push_back(scalar("clutter", "max_range_m", &C::clutter_max_range_m));
    f.push_back(scalar("merged", "enabled", &C::merged_enabled));
    f.push_back(scalar("merged", "cell_width_deg", &C::merged_cell_width_deg));
    f.push_back(scalar("merged", "gate_cells", &C::merged_gate_cells));
    f.push_back(scalar("merged", "partition_cap", &C::merged_partition_cap));
    f.push_back(scalar("merged", "first_scan", &C::merged_first_scan));
    f.push_back(scalar("merged", "last_scan", &C::merged_last_scan));
    f.push_back(scalar("unscented", "alpha", &C::ut_alpha));
    f.push_back(scalar("unscented", "beta", &C::ut_beta));
    f.push_back(scalar("smoother", "strategy", &C::strategy));
    f.push_back(scalar("smoother", "max_hypotheses", &C::max_hypotheses));
    f.push_back(scalar("smoother", "gibbs_iterations", &C::gibbs_iterations));
    f.push_back(scalar("smoother", "weight_floor", &C::weight_floor));
    f.push_back(scalar("smoother", "sample_budget", &C::sample_budget));
    f.push_back(scalar("smoother", "candidates_per_hypothesis", &C::candidates_per_hypothesis));
    f.push_back(scalar("smoother", "gate_mahalanobis", &C::gate_mahalanobis));
    f.push_back(scalar("smoother", "window", &C::window));
    f.push_back(scalar("smoother", "window_length_scans", &C::window_length_scans));
    f.push_back(scalar("smoother", "window_overlap_scans", &C::window_overlap_scans));
    f.push_back(scalar("metrics", "ospa_cutoff_m", &C::ospa_cutoff_m));
    f.push_back(scalar("metrics", "ospa_order", &C::ospa_order));
    f.push_back(scalar("metrics", "ospa2_window_scans", &C::ospa2_window_scans));
    f.push_back(Field{
        "metrics", "crossing_center_m",
        [](const YAML::Node& n, C& c) {
          const auto v = read_vector(n, "crossing_center_m", 2);
          c.crossing_center_m = {v[0], v[1]};
        },
        [](YAML::Emitter& e, const C& c) {
          e << YAML::Flow << YAML::BeginSeq << format_double(c.crossing_center_m.x())
            << format_double(c.crossing_center_m.y()) << YAML::EndSeq;
        }});
    f.push_back(scalar("metrics", "crossing_radius_m", &C::crossing_radius_m));
    return f;
  }();
  return all;
}

[[noreturn]] void invalid(const std::string& what) { throw ConfigError("invalid configuration: " + what); }

}  // namespace

ScenarioConfig standard_scenario() { return ScenarioConfig{}; }

ScenarioConfig merged_scenario() {
  ScenarioConfig c;
  c.sensor_kind = "bearing-only";
  c.bearing_std_deg = 1.0;
  c.clutter_rate = 0.3;
  c.merged_enabled = true;
  c.birth_active_scans = {1};
  c.window = "non-overlapping";
  c.window_length_scans = 5;
  c.window_overlap_scans = 0;
  return c;
}

ScenarioConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  ScenarioConfig config;
  if (root.IsNull()) {
    validate(config);
    return config;
  }
  if (!root.IsMap()) {
    fail_at(root, "configuration must be a mapping of sections");
  }
  for (const auto& section : root) {
    const std::string name = section.first.as<std::string>();
    if (!section.second.IsMap()) {
      fail_at(section.first, "section '" + name + "' must be a mapping");
    }
    for (const auto& entry : section.second) {
      const std::string key = entry.first.as<std::string>();
      auto it = std::find_if(fields().begin(), fields().end(), [&](const Field& f) {
        return f.section == name && f.key == key;
      });
      if (it == fields().end()) {
        fail_at(entry.first, "unknown key '" + name + "." + key + "'");
      }
      it->read(entry.second, config);
    }
  }
  validate(config);
  return config;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open configuration file '" + path + "'");
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string to_yaml(const ScenarioConfig& config) {
  YAML::Emitter e;
  e << YAML::BeginMap;
  std::string open;
  for (const auto& f : fields()) {
    if (f.section != open) {
      if (!open.empty()) {
        e << YAML::EndMap;
      }
      e << YAML::Key << f.section << YAML::Value << YAML::BeginMap;
      open = f.section;
    }
    e << YAML::Key << f.key << YAML::Value;
    f.write(e, config);
  }
  e << YAML::EndMap << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

void validate(const ScenarioConfig& c) {
  if (c.duration_scans < 1) {
    invalid("duration_scans must be positive");
  }
  if (c.runs < 1 || c.threads < 1) {
    invalid("runs and threads must be positive");
  }
  if (c.birth_means.empty()) {
    invalid("at least one birth mean is required");
  }
  if (c.window != "overlapping" && c.window != "non-overlapping" && c.window != "single") {
    invalid("window must be overlapping, non-overlapping or single");
  }
  if (c.sensor_kind != "bearing-range" && c.sensor_kind != "bearing-only" &&
      c.sensor_kind != "position") {
    invalid("sensor kind must be bearing-range, bearing-only or position");
  }
  if (c.max_hypotheses < 1 || c.candidates_per_hypothesis < 1 || c.sample_budget < 0) {
    invalid("smoother sizes must be positive");
  }
  if (!(c.crossing_radius_m >= 0.0)) {
    invalid("crossing_radius_m must be non-negative");
  }
  if (c.merged_first_scan > c.merged_last_scan) {
    invalid("merged scan range is empty");
  }
  try {
    (void)smoothing::strategy_from_string(c.strategy);
    build_model(c).validate();
    build_smoother(c, smoothing::strategy_from_string(c.strategy)).validate();
    build_metrics(c).validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidInputError& e) {
    invalid(e.what());
  }
}

recursion::Model build_model(const ScenarioConfig& c) {
  recursion::Model m;
  const Eigen::MatrixXd cov = c.birth_std * c.birth_std * Eigen::MatrixXd::Identity(4, 4);
  for (const auto& mean : c.birth_means) {
    m.birth.components.push_back(
        dynamics::BirthComponent{c.birth_probability, densities::Gaussian(mean, cov)});
  }
  m.birth.active_scans = c.birth_active_scans;
  m.survival.probability = c.survival_probability;
  m.dynamics.V = c.force_strength;
  m.dynamics.alpha = c.force_range_m;
  m.dynamics.dt = c.period_s;
  m.dynamics.interaction_radius = c.interaction_range_m;
  m.dynamics.process_noise_sigma = c.process_noise_std;
  m.dynamics.substeps = c.substeps;
  if (c.sensor_kind == "bearing-range") {
    m.sensor = measurement::SensorModel::bearing_range(c.bearing_std_deg * kDeg, c.range_std_m);
  } else if (c.sensor_kind == "bearing-only") {
    m.sensor = measurement::SensorModel::bearing_only_moving(c.bearing_std_deg * kDeg);
  } else {
    m.sensor = measurement::SensorModel::position(c.position_std_m);
  }
  m.detection_probability = c.detection_probability;
  m.clutter.rate = c.clutter_rate;
  m.clutter.max_range = c.clutter_max_range_m;
  m.ut.alpha = c.ut_alpha;
  m.ut.beta = c.ut_beta;
  m.gate = c.gate_mahalanobis;
  m.merged.enabled = c.merged_enabled;
  m.merged.cells.width = c.merged_cell_width_deg * kDeg;
  m.merged.gate_cells = c.merged_gate_cells;
  m.merged.partition_cap = c.merged_partition_cap;
  return m;
}

smoothing::SmootherConfig build_smoother(const ScenarioConfig& c, smoothing::Strategy strategy) {
  smoothing::SmootherConfig s;
  s.max_hypotheses = static_cast<std::size_t>(std::max(c.max_hypotheses, 1));
  s.gibbs_iterations = c.gibbs_iterations;
  s.weight_floor = c.weight_floor;
  s.strategy = strategy;
  s.sample_budget = c.sample_budget;
  s.candidates_per_hypothesis = static_cast<std::size_t>(std::max(c.candidates_per_hypothesis, 1));
  if (c.window == "overlapping") {
    s.plan = smoothing::WindowPlan::overlapping_plan(c.duration_scans, c.window_length_scans,
                                                     c.window_overlap_scans);
  } else if (c.window == "non-overlapping") {
    s.plan = smoothing::WindowPlan::non_overlapping_plan(c.duration_scans, c.window_length_scans);
  } else {
    s.plan = smoothing::WindowPlan::single(c.duration_scans);
  }
  return s;
}

metrics::OspaParams build_metrics(const ScenarioConfig& c) {
  return metrics::OspaParams{c.ospa_cutoff_m, c.ospa_order, c.ospa2_window_scans};
}

}  // namespace msglmb::app
