#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "app/config.hpp"
#include "app/experiment.hpp"
#include "msglmb/densities.hpp"
#include "msglmb/dynamics.hpp"
#include "msglmb/gibbs.hpp"
#include "msglmb/glmb.hpp"
#include "msglmb/measurement.hpp"
#include "msglmb/metrics.hpp"
#include "msglmb/recursion.hpp"
#include "msglmb/smoothing.hpp"

using namespace msglmb;
using densities::Gaussian;
using densities::JointTrajectoryDensity;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int precision = 3) {
  std::ostringstream s;
  s << std::setprecision(precision) << x;
  return s.str();
}

Eigen::VectorXd state(double px, double vx, double py, double vy) {
  Eigen::VectorXd x(4);
  x << px, vx, py, vy;
  return x;
}

Eigen::MatrixXd diag4(double pos_sd, double vel_sd) {
  Eigen::VectorXd d(4);
  d << pos_sd * pos_sd, vel_sd * vel_sd, pos_sd * pos_sd, vel_sd * vel_sd;
  return d.asDiagonal();
}

/// Two objects born at scan 1 in front of a bearing-range sensor.
recursion::Model two_birth_model(double V) {
  app::ScenarioConfig c = app::standard_scenario();
  c.birth_means = {Eigen::Vector4d(-40.0, 5.0, 500.0, 0.0), Eigen::Vector4d(40.0, -5.0, 500.0, 0.0)};
  c.birth_probability = 0.6;
  c.birth_active_scans = {1};
  c.force_strength = V;
  c.clutter_rate = 2.0;
  recursion::Model m = app::build_model(c);
  m.gate = 0.0;
  return m;
}

/// Three scans of at most three measurements: both objects (one missed at
/// scan 2) plus one clutter return.
std::vector<measurement::ScanMeasurements> two_birth_scans(const recursion::Model& m) {
  const std::vector<Eigen::VectorXd> a{state(-40, 5, 500, 0), state(-35, 5, 500, 0), state(-30, 5, 500, 0)};
  const std::vector<Eigen::VectorXd> b{state(40, -5, 500, 0), state(35, -5, 500, 0), state(30, -5, 500, 0)};
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 1.0);
  const double sb = std::sqrt(m.sensor.R(0, 0));
  const double sr = std::sqrt(m.sensor.R(1, 1));
  auto noisy = [&](const Eigen::VectorXd& x, int k) {
    Eigen::VectorXd z = m.sensor.h(x, k);
    z(0) = wrap_to_two_pi(z(0) + sb * n(rng));
    z(1) += sr * n(rng);
    return z;
  };
  std::vector<measurement::ScanMeasurements> out;
  for (int k = 1; k <= 3; ++k) {
    const auto i = static_cast<std::size_t>(k - 1);
    std::vector<Eigen::VectorXd> z{noisy(a[i], k)};
    if (k != 2) {
      z.push_back(noisy(b[i], k));
    }
    z.push_back(Eigen::Vector2d(0.3 * k, 800.0 + 100.0 * k));
    out.push_back({k, std::move(z)});
  }
  return out;
}

/// Labels seen anywhere in the chain of `leaf`.
std::size_t trajectory_count(const recursion::NodePtr& leaf) {
  std::set<Label> seen;
  for (const auto& n : recursion::chain_of(leaf)) {
    seen.insert(n->alive().begin(), n->alive().end());
  }
  return seen.size();
}

// 1. Cardinality of the marginal approximation equals the exact one.
Outcome cardinality_matching() {
  const recursion::Model model = two_birth_model(550.0);
  recursion::Engine engine(model, recursion::Retention::Joint, two_birth_scans(model));
  const recursion::ExactPosterior init = recursion::initial_posterior(engine, 0);
  const recursion::ExactPosterior brute = recursion::brute_force_posterior(engine, init, 3);
  std::vector<double> exact(3, 0.0);
  for (const auto& h : brute.hypotheses) {
    exact[trajectory_count(h.node)] += std::exp(h.log_weight);
  }

  recursion::ExactPosterior p = init;
  for (int k = 1; k <= 3; ++k) {
    p = recursion::update(recursion::predict(p, engine), engine);
  }
  rfs::CardinalityDistribution approx =
      rfs::trajectory_cardinality_distribution(recursion::approximate_cardinality_matched(p));
  approx.resize(std::max(approx.size(), exact.size()), 0.0);
  exact.resize(approx.size(), 0.0);
  double worst = 0.0;
  for (std::size_t n = 0; n < exact.size(); ++n) {
    worst = std::max(worst, std::abs(exact[n] - approx[n]));
  }
  return {worst < 1e-10, std::to_string(brute.hypotheses.size()) + " hypotheses, max |drho| = " + fmt(worst)};
}

/// Correlated two-object node: interacting objects detected after one scan.
recursion::NodePtr correlated_node(recursion::Engine& engine) {
  const Label a{1, 1};
  const Label b{1, 2};
  const auto joint = JointTrajectoryDensity::independent(
      {{a, Gaussian(state(-12, 4, 500, 0), diag4(3.0, 1.0))}, {b, Gaussian(state(12, -4, 502, 0), diag4(3.0, 1.0))}});
  const recursion::NodePtr root = engine.root(1, joint);
  return engine.extend(root, ExtendedAssociationMap({{a, 1}, {b, 2}}));
}

Gaussian block_product(const std::vector<Gaussian>& parts) {
  int d = 0;
  for (const auto& g : parts) {
    d += g.dim();
  }
  Eigen::VectorXd m(d);
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(d, d);
  int at = 0;
  for (const auto& g : parts) {
    m.segment(at, g.dim()) = g.mean;
    P.block(at, at, g.dim(), g.dim()) = g.covariance;
    at += g.dim();
  }
  return Gaussian(m, P);
}

Gaussian perturb(const Gaussian& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> shift(-1.0, 1.0);
  std::uniform_real_distribution<double> scale(0.5, 2.0);
  Eigen::VectorXd m = g.mean;
  for (int i = 0; i < m.size(); ++i) {
    m(i) += shift(rng) * std::sqrt(g.covariance(i, i));
  }
  return Gaussian(m, scale(rng) * g.covariance);
}

// 2. Per-label marginals minimize KL from the joint among product densities.
Outcome kl_minimality() {
  recursion::Model model = two_birth_model(550.0);
  const Eigen::Vector2d za = model.sensor.h(state(-8, 4, 500, 0), 2);
  const Eigen::Vector2d zb = model.sensor.h(state(8, -4, 502, 0), 2);
  recursion::Engine engine(model, recursion::Retention::Joint, {{2, {za, zb}}});
  const recursion::NodePtr node = correlated_node(engine);
  const Gaussian& exact = node->posterior.joint();
  const rfs::GlmbHypothesis h = recursion::materialize(node, 0.0);
  std::vector<Gaussian> marginals;
  for (const auto& [l, td] : h.trajectories) {
    marginals.push_back(td.marginals.back());
  }
  const double cross = exact.covariance.block(0, 4, 4, 4).norm();
  const double best = densities::kl_divergence(exact, block_product(marginals));
  std::mt19937_64 rng(2);
  int violations = 0;
  double margin = std::numeric_limits<double>::infinity();
  for (int t = 0; t < 100; ++t) {
    const double kl = densities::kl_divergence(exact, block_product({perturb(marginals[0], rng), perturb(marginals[1], rng)}));
    violations += kl < best ? 1 : 0;
    margin = std::min(margin, kl - best);
  }
  return {violations == 0 && cross > 0.0,
          "KL(exact||marginals) = " + fmt(best) + ", cross-cov norm " + fmt(cross) + ", " +
              std::to_string(violations) + " violations, min margin " + fmt(margin)};
}

// 3. Window marginals minimize KL among head-tail product densities.
struct WindowToy {
  std::vector<double> weights;            // per (head, tail) pair
  std::vector<Gaussian> trajectories;     // four scans, one dimension each
  std::vector<std::pair<int, int>> keys;  // (head, tail)
};

double window_kl(const WindowToy& toy, const std::map<int, double>& wh, const std::map<int, Gaussian>& gh,
                 const std::map<int, double>& wt, const std::map<int, Gaussian>& gt) {
  double kl = 0.0;
  for (std::size_t i = 0; i < toy.weights.size(); ++i) {
    const auto [hk, tk] = toy.keys[i];
    const double w = toy.weights[i];
    kl += w * (std::log(w) - std::log(wh.at(hk)) - std::log(wt.at(tk)) +
               densities::kl_divergence(toy.trajectories[i], block_product({gh.at(hk), gt.at(tk)})));
  }
  return kl;
}

Outcome windowing_optimality() {
  const Label a{1, 1};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  WindowToy toy;
  rfs::MultiScanGlmb g;
  g.first_scan = 1;
  g.last_scan = 4;
  g.normalized = true;
  double total = 0.0;
  for (int hk = 0; hk < 2; ++hk) {
    for (int tk = 0; tk < 2; ++tk) {
      const double w = 0.2 + u(rng);
      total += w;
      rfs::GlmbHypothesis h;
      h.first_scan = 1;
      h.log_weight = std::log(w);
      for (int v : {hk, hk, tk, tk}) {
        h.history.emplace_back(std::vector<ExtendedAssociationMap::Entry>{{a, v}});
      }
      rfs::TrajectoryDensity td;
      td.start = 1;
      for (int s = 0; s < 4; ++s) {
        td.marginals.emplace_back(Eigen::VectorXd::Constant(1, 4.0 * u(rng)),
                                  Eigen::MatrixXd::Constant(1, 1, 1.5 + u(rng)));
        if (s > 0) {
          td.lag_cross.push_back(Eigen::MatrixXd::Constant(1, 1, 0.3 + 0.5 * u(rng)));
        }
      }
      toy.trajectories.push_back(td.joint());
      toy.keys.emplace_back(hk, tk);
      h.trajectories.emplace(a, std::move(td));
      g.hypotheses.push_back(std::move(h));
    }
  }
  for (auto& h : g.hypotheses) {
    h.log_weight -= std::log(total);
    toy.weights.push_back(std::exp(h.log_weight));
  }
  const auto [head, tail] = smoothing::window_marginalize(g, 2);
  std::map<int, double> wh;
  std::map<int, double> wt;
  std::map<int, Gaussian> gh;
  std::map<int, Gaussian> gt;
  for (const auto& h : head.hypotheses) {
    const int key = h.history.front().at(a);
    wh[key] = std::exp(h.log_weight);
    gh.emplace(key, h.trajectories.at(a).joint());
  }
  for (const auto& h : tail.hypotheses) {
    const int key = h.history.front().at(a);
    wt[key] = std::exp(h.log_weight);
    gt.emplace(key, h.trajectories.at(a).joint());
  }
  const double best = window_kl(toy, wh, gh, wt, gt);
  std::uniform_real_distribution<double> jitter(-0.5, 0.5);
  auto perturb_weights = [&](std::map<int, double> w) {
    double z = 0.0;
    for (auto& [k, v] : w) {
      v *= std::exp(jitter(rng));
      z += v;
    }
    for (auto& [k, v] : w) {
      v /= z;
    }
    return w;
  };
  auto perturb_all = [&](std::map<int, Gaussian> gs) {
    for (auto& [k, v] : gs) {
      v = perturb(v, rng);
    }
    return gs;
  };
  int violations = 0;
  for (int t = 0; t < 50; ++t) {
    const double kl = window_kl(toy, perturb_weights(wh), perturb_all(gh), perturb_weights(wt), perturb_all(gt));
    violations += kl < best ? 1 : 0;
  }
  return {violations == 0, "KL(exact||window marginals) = " + fmt(best) + ", " + std::to_string(violations) +
                               " violations over 50 perturbed pairs"};
}

// 4. Multi-scan Gibbs samples follow the normalized joint weight.
Outcome gibbs_stationarity() {
  const std::vector<Eigen::VectorXd> births{state(0, 1, 0, 1), state(20, -1, 0, 1)};
  recursion::Model model;
  for (const auto& m : births) {
    model.birth.components.push_back({0.5, Gaussian(m, diag4(5.0, 1.0))});
  }
  model.birth.active_scans = {1};
  model.survival.probability = 0.9;
  model.dynamics.V = 0.0;
  model.dynamics.substeps = 1;
  model.sensor = measurement::SensorModel::position(5.0);
  model.clutter.rate = 2.0;
  model.detection_probability = 0.8;
  model.gate = 0.0;
  // Clutter density is tiny over the default region; shrink it so clutter competes.
  model.clutter.xy_low = Eigen::Vector2d(-20.0, -20.0);
  model.clutter.xy_high = Eigen::Vector2d(40.0, 40.0);
  recursion::Engine engine(model, recursion::Retention::Joint,
                           {{1, {Eigen::Vector2d(2.0, 1.0), Eigen::Vector2d(17.0, -2.0)}},
                            {2, {Eigen::Vector2d(3.0, 4.0)}}});
  recursion::NodeContext ctx(engine, engine.root(0, {}), 2);

  std::map<gibbs::History, double> target;
  const auto t1 = ctx.factors({});
  for (const auto& g1 : recursion::enumerate_extended_maps(t1->labels, t1->num_measurements, 1000)) {
    const std::vector<ExtendedAssociationMap> prefix{g1};
    const auto t2 = ctx.factors(prefix);
    for (const auto& g2 : recursion::enumerate_extended_maps(t2->labels, t2->num_measurements, 1000)) {
      const gibbs::History h{g1, g2};
      const double lw = gibbs::joint_weight(h, ctx);
      if (std::isfinite(lw)) {
        target[h] = lw;
      }
    }
  }
  std::vector<double> lw;
  for (const auto& [h, w] : target) {
    lw.push_back(w);
  }
  const double z = log_sum_exp(lw);

  const gibbs::History start = target.begin()->first;
  auto tv_of = [&](gibbs::Conditioning conditioning) {
    gibbs::Rng rng(4);
    const int burn = 100;
    const int kept = 10000;
    const auto states = gibbs::ms_gibbs(start, burn + kept, ctx, rng, {conditioning});
    std::map<gibbs::History, double> freq;
    for (std::size_t i = static_cast<std::size_t>(burn) + 1; i < states.size(); ++i) {
      freq[states[i]] += 1.0 / kept;
    }
    double tv = 0.0;
    for (const auto& [h, w] : target) {
      tv += std::abs(std::exp(w - z) - (freq.contains(h) ? freq.at(h) : 0.0));
    }
    for (const auto& [h, f] : freq) {
      tv += target.contains(h) ? 0.0 : f;
    }
    return 0.5 * tv;
  };
  const double tv = tv_of(gibbs::Conditioning::Full);
  const double tv_prefix = tv_of(gibbs::Conditioning::Prefix);
  return {target.size() <= 200 && tv < 0.05,
          std::to_string(target.size()) + " valid histories, TV = " + fmt(tv) +
              " (per-scan factor conditionals: " + fmt(tv_prefix) + ")"};
}

// 5. Without interaction the exact weights are the factor-product weights.
Outcome independent_equivalence() {
  const recursion::Model model = two_birth_model(0.0);
  recursion::Engine engine(model, recursion::Retention::Joint, two_birth_scans(model));
  const recursion::ExactPosterior brute =
      recursion::brute_force_posterior(engine, recursion::initial_posterior(engine, 0), 3);
  std::vector<double> factor;
  for (const auto& h : brute.hypotheses) {
    factor.push_back(h.node->log_factor_weight);
  }
  const double z = log_sum_exp(factor);
  double worst = 0.0;
  for (std::size_t i = 0; i < factor.size(); ++i) {
    worst = std::max(worst, std::abs(std::exp(brute.hypotheses[i].log_weight) - std::exp(factor[i] - z)));
  }
  return {worst < 1e-10,
          std::to_string(brute.hypotheses.size()) + " hypotheses, max |dw| = " + fmt(worst)};
}

// 6. Social-force scenario comparison.
Outcome social_force_reproduction() {
  app::ScenarioConfig c = app::standard_scenario();
  c.runs = 10;
  c.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::map<smoothing::Strategy, app::RunReport> reports;
  for (auto s : {smoothing::Strategy::SfaThenUa, smoothing::Strategy::JointSfaUa,
                 smoothing::Strategy::StandardMultiscan}) {
    reports.emplace(s, app::run_experiment(c, s));
  }
  const auto& standard = reports.at(smoothing::Strategy::StandardMultiscan).runs;
  std::ostringstream detail;
  bool pass = true;
  std::map<smoothing::Strategy, double> average;
  for (auto s : {smoothing::Strategy::SfaThenUa, smoothing::Strategy::JointSfaUa}) {
    const auto& runs = reports.at(s).runs;
    int no_crossing = 0;
    int better = 0;
    double sum = 0.0;
    for (std::size_t r = 0; r < runs.size(); ++r) {
      const double mine = app::mean_over(runs[r].ospa2, 40, 60);
      const double base = app::mean_over(standard[r].ospa2, 40, 60);
      no_crossing += runs[r].ok && runs[r].crossings == 0 ? 1 : 0;
      better += runs[r].ok && standard[r].ok && mine < base ? 1 : 0;
      sum += mine;
    }
    average[s] = sum / static_cast<double>(runs.size());
    pass = pass && no_crossing >= 8 && better >= 8;
    detail << smoothing::to_string(s) << ": no crossing " << no_crossing << "/10, beats standard " << better
           << "/10, mean OSPA2[40,60] " << fmt(average[s], 4) << "; ";
  }
  double base_sum = 0.0;
  for (const auto& r : standard) {
    base_sum += app::mean_over(r.ospa2, 40, 60);
  }
  detail << "standard mean OSPA2[40,60] " << fmt(base_sum / static_cast<double>(standard.size()), 4);
  pass = pass && average[smoothing::Strategy::SfaThenUa] <= average[smoothing::Strategy::JointSfaUa];
  return {pass, detail.str()};
}

recursion::Model merged_model(bool merged) {
  app::ScenarioConfig c = app::merged_scenario();
  c.force_strength = 0.0;
  c.birth_means.clear();
  c.clutter_rate = 0.3;
  recursion::Model m = app::build_model(c);
  m.gate = 0.0;
  m.merged.enabled = merged;
  return m;
}

std::map<ExtendedAssociationMap, double> normalized_by_gamma(const recursion::ExactPosterior& p) {
  std::map<ExtendedAssociationMap, double> out;
  for (const auto& h : p.hypotheses) {
    out[h.node->gamma] += std::exp(h.log_weight);
  }
  return out;
}

recursion::ExactPosterior one_scan(const recursion::Model& model, const JointTrajectoryDensity& prior,
                                   const std::vector<Eigen::VectorXd>& Z, bool merged) {
  recursion::Engine engine(model, recursion::Retention::Joint, {{2, Z}});
  recursion::ExactPosterior init{1, {{engine.root(1, prior), 0.0}}};
  const auto predicted = recursion::predict(init, engine);
  return merged ? recursion::update_merged(predicted, engine) : recursion::update(predicted, engine);
}

Eigen::VectorXd bearing(const Eigen::Vector2d& p, double offset) {
  const Eigen::Vector2d d = p - measurement::orbit_position(2);
  return Eigen::VectorXd::Constant(1, wrap_to_two_pi(std::atan2(d.x(), d.y()) + offset));
}

// 7. Merged-measurement update.
Outcome merged_reduction() {
  const Label a{1, 1};
  const Label b{1, 2};
  const Eigen::Matrix4d P = diag4(3.0, 0.5);

  // Distant objects: merged update equals the standard bearing-only update.
  const Eigen::Vector2d pa(0.0, 500.0);
  const Eigen::Vector2d pb(-400.0, 100.0);
  const auto far = JointTrajectoryDensity::independent(
      {{a, Gaussian(state(pa.x(), 0, pa.y(), 0), P)}, {b, Gaussian(state(pb.x(), 0, pb.y(), 0), P)}});
  const std::vector<Eigen::VectorXd> Zfar{bearing(pa, 0.01), bearing(pb, -0.01), bearing(pa, 1.0)};
  const auto standard = normalized_by_gamma(one_scan(merged_model(false), far, Zfar, false));
  const auto merged = normalized_by_gamma(one_scan(merged_model(true), far, Zfar, true));
  double worst_far = standard.size() == merged.size() ? 0.0 : 1.0;
  for (const auto& [g, w] : standard) {
    worst_far = std::max(worst_far, std::abs(w - (merged.contains(g) ? merged.at(g) : 0.0)));
  }

  // Two objects on one line of sight: compare with an exhaustive partition/map oracle.
  const Eigen::Vector2d s = measurement::orbit_position(2);
  const Eigen::Vector2d dir = (Eigen::Vector2d(0.0, 500.0) - s).normalized();
  const Eigen::Vector2d p1 = s + 700.0 * dir;
  const Eigen::Vector2d p2 = s + 760.0 * dir;
  const auto near = JointTrajectoryDensity::independent(
      {{a, Gaussian(state(p1.x(), 0, p1.y(), 0), P)}, {b, Gaussian(state(p2.x(), 0, p2.y(), 0), P)}});
  const std::vector<Eigen::VectorXd> Z{bearing(p1, 0.004), bearing(p2, -0.01), bearing(p1, 0.8)};
  const recursion::Model model = merged_model(true);
  const auto got = normalized_by_gamma(one_scan(model, near, Z, true));

  recursion::Engine engine(model, recursion::Retention::Joint, {{2, Z}});
  const auto pred = engine.prediction(*engine.root(1, near));
  const JointTrajectoryDensity& predicted = pred->predicted;
  const double ps = model.survival.probability;
  const double pd = model.detection_probability;
  const int M = static_cast<int>(Z.size());
  std::map<ExtendedAssociationMap, double> oracle;
  const LabelSet all{a, b};
  for (unsigned mask = 0; mask < 4; ++mask) {
    LabelSet live;
    for (unsigned i = 0; i < 2; ++i) {
      if (mask & (1u << i)) {
        live.push_back(all[i]);
      }
    }
    const double transition = std::pow(ps, static_cast<double>(live.size())) *
                              std::pow(1.0 - ps, static_cast<double>(2 - live.size()));
    std::vector<std::vector<LabelSet>> partitions;
    if (live.size() == 2) {
      partitions = {{{a}, {b}}, {{a, b}}};
    } else if (live.size() == 1) {
      partitions = {{live}};
    } else {
      partitions = {{}};
    }
    for (const auto& blocks : partitions) {
      // Every assignment of blocks to {0..M}, positive values distinct.
      std::vector<int> u(blocks.size(), 0);
      while (true) {
        bool distinct = true;
        for (std::size_t i = 0; i < u.size(); ++i) {
          for (std::size_t j = i + 1; j < u.size(); ++j) {
            distinct = distinct && !(u[i] > 0 && u[i] == u[j]);
          }
        }
        if (distinct) {
          double w = transition;
          ExtendedAssociationMap gamma({{a, -1}, {b, -1}});
          for (std::size_t i = 0; i < blocks.size(); ++i) {
            for (const Label& l : blocks[i]) {
              gamma.set(l, u[i]);
            }
            if (u[i] == 0) {
              w *= 1.0 - pd;
              continue;
            }
            const Eigen::VectorXd& z = Z[static_cast<std::size_t>(u[i] - 1)];
            const JointTrajectoryDensity part = predicted.slice(blocks[i]);
            const std::vector<int> angular{0};
            const auto t = densities::unscented_transform(
                part.joint(),
                [&](const Eigen::VectorXd& x) { return measurement::group_measurement(x, model.sensor, 2); },
                model.ut, angular);
            const Eigen::MatrixXd S = t.output.covariance + model.sensor.R;
            const double r = wrap_to_pi(z(0) - t.output.mean(0));
            const double lik = std::exp(-0.5 * r * r / S(0, 0)) / std::sqrt(2.0 * std::numbers::pi * S(0, 0));
            w *= pd * lik / model.clutter.intensity(z, model.sensor);
          }
          oracle[gamma] += w;
        }
        std::size_t i = 0;
        while (i < u.size() && ++u[i] > M) {
          u[i] = 0;
          ++i;
        }
        if (i == u.size()) {
          break;
        }
      }
    }
  }
  double total = 0.0;
  for (const auto& [g, w] : oracle) {
    total += w;
  }
  double worst_near = got.size() == oracle.size() ? 0.0 : 1.0;
  for (const auto& [g, w] : oracle) {
    worst_near = std::max(worst_near, std::abs(w / total - (got.contains(g) ? got.at(g) : 0.0)));
  }
  return {worst_far < 1e-9 && worst_near < 1e-9,
          "distant: max |dw| = " + fmt(worst_far) + " over " + std::to_string(standard.size()) +
              " maps; cluster: max |dw| = " + fmt(worst_near) + " over " + std::to_string(oracle.size()) +
              " maps"};
}

// 8. Truncation keeps a subset with minimum L1 error.
Outcome truncation_optimality() {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> size(1, 19);
  int violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    rfs::MultiScanGlmb g;
    g.first_scan = 1;
    g.last_scan = 1;
    g.normalized = true;
    std::vector<double> w(20);
    double total = 0.0;
    for (double& x : w) {
      x = std::pow(u(rng), 3.0) + 1e-6;
      total += x;
    }
    for (int i = 0; i < 20; ++i) {
      rfs::GlmbHypothesis h;
      h.first_scan = 1;
      h.log_weight = std::log(w[static_cast<std::size_t>(i)] / total);
      h.history.emplace_back(std::vector<ExtendedAssociationMap::Entry>{{Label{1, i + 1}, -1}});
      g.hypotheses.push_back(std::move(h));
    }
    const auto keep = static_cast<std::size_t>(size(rng));
    const rfs::TruncationResult r = rfs::truncate(g, keep, 0.0);
    std::vector<double> p(20);
    for (std::size_t i = 0; i < 20; ++i) {
      p[i] = std::exp(g.hypotheses[i].log_weight);
    }
    auto l1 = [&](const std::vector<char>& in) {
      double kept = 0.0;
      for (std::size_t i = 0; i < 20; ++i) {
        kept += in[i] ? p[i] : 0.0;
      }
      double err = 0.0;
      for (std::size_t i = 0; i < 20; ++i) {
        err += std::abs(p[i] - (in[i] ? p[i] / kept : 0.0));
      }
      return err;
    };
    std::vector<char> chosen(20, 0);
    for (const auto& h : r.glmb.hypotheses) {
      for (std::size_t i = 0; i < 20; ++i) {
        if (g.hypotheses[i].history_key() == h.history_key()) {
          chosen[i] = 1;
        }
      }
    }
    const double got = l1(chosen);
    std::vector<char> mask(20, 0);
    std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(keep), 1);
    bool violated = r.glmb.hypotheses.size() != keep;
    do {
      violated = violated || l1(mask) < got - 1e-12;
    } while (!violated && std::prev_permutation(mask.begin(), mask.end()));
    violations += violated ? 1 : 0;
  }
  return {violations == 0, std::to_string(violations) + " violations over 100 trials"};
}

using Points = std::vector<Eigen::Vector2d>;

double permutation_ospa(const Points& X, const Points& Y, const metrics::OspaParams& p) {
  const Points& small = X.size() <= Y.size() ? X : Y;
  const Points& large = X.size() <= Y.size() ? Y : X;
  if (large.empty()) {
    return 0.0;
  }
  std::vector<int> perm(large.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < small.size(); ++i) {
      s += std::pow(std::min((small[i] - large[static_cast<std::size_t>(perm[i])]).norm(), p.cutoff), p.order);
    }
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  const double n = static_cast<double>(large.size());
  return std::pow((best + std::pow(p.cutoff, p.order) * (n - static_cast<double>(small.size()))) / n,
                  1.0 / p.order);
}

/// Trajectory OSPA by permutation: base distance is the time-averaged
/// cutoff distance over the window scans where either track exists.
double permutation_ospa2(const std::vector<metrics::PositionTrack>& X, const std::vector<metrics::PositionTrack>& Y,
                         int k, const metrics::OspaParams& p) {
  const int first = std::max(1, k - p.window + 1);
  auto active = [&](const std::vector<metrics::PositionTrack>& T) {
    std::vector<metrics::PositionTrack> out;
    for (const auto& t : T) {
      if (t.end() >= first && t.start <= k) {
        out.push_back(t);
      }
    }
    return out;
  };
  const auto A = active(X);
  const auto B = active(Y);
  const auto& small = A.size() <= B.size() ? A : B;
  const auto& large = A.size() <= B.size() ? B : A;
  if (large.empty()) {
    return 0.0;
  }
  auto base = [&](const metrics::PositionTrack& s, const metrics::PositionTrack& t) {
    double sum = 0.0;
    int count = 0;
    for (int j = first; j <= k; ++j) {
      const bool es = s.exists(j);
      const bool et = t.exists(j);
      if (!es && !et) {
        continue;
      }
      ++count;
      sum += es && et ? std::pow(std::min((s.at(j) - t.at(j)).norm(), p.cutoff), p.order) : std::pow(p.cutoff, p.order);
    }
    return count == 0 ? 0.0 : std::pow(sum / count, 1.0 / p.order);
  };
  std::vector<int> perm(large.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < small.size(); ++i) {
      s += std::pow(std::min(base(small[i], large[static_cast<std::size_t>(perm[i])]), p.cutoff), p.order);
    }
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  const double n = static_cast<double>(large.size());
  return std::pow((best + std::pow(p.cutoff, p.order) * (n - static_cast<double>(small.size()))) / n,
                  1.0 / p.order);
}

// 9. OSPA and OSPA2 against permutation oracles.
Outcome ospa_correctness() {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> coord(-120.0, 120.0);
  std::uniform_int_distribution<int> count(0, 6);
  std::uniform_int_distribution<int> start(1, 8);
  std::uniform_int_distribution<int> length(1, 8);
  std::uniform_real_distribution<double> order(1.0, 3.0);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const metrics::OspaParams p{60.0 + coord(rng) / 4.0, t % 2 == 0 ? 1.0 : order(rng), 5};
    Points X(static_cast<std::size_t>(count(rng)));
    Points Y(static_cast<std::size_t>(count(rng)));
    for (auto& x : X) {
      x = Eigen::Vector2d(coord(rng), coord(rng));
    }
    for (auto& y : Y) {
      y = Eigen::Vector2d(coord(rng), coord(rng));
    }
    worst = std::max(worst, std::abs(metrics::ospa(X, Y, p) - permutation_ospa(X, Y, p)));

    auto tracks = [&](int n, int base) {
      std::vector<metrics::PositionTrack> out;
      for (int i = 0; i < n; ++i) {
        metrics::PositionTrack tr{Label{1, base + i}, start(rng), {}};
        const int len = length(rng);
        Eigen::Vector2d x(coord(rng), coord(rng));
        for (int j = 0; j < len; ++j) {
          x += Eigen::Vector2d(coord(rng), coord(rng)) / 10.0;
          tr.positions.push_back(x);
        }
        out.push_back(std::move(tr));
      }
      return out;
    };
    const auto A = tracks(count(rng), 1);
    const auto B = tracks(count(rng), 100);
    const int k = 4 + t % 8;
    worst = std::max(worst, std::abs(metrics::ospa2(A, B, k, p) - permutation_ospa2(A, B, k, p)));
  }
  return {worst < 1e-12, "1000 trials, max |d| = " + fmt(worst)};
}

// 10. Unscented joint prediction against a Monte Carlo push-forward.
Outcome ut_fidelity() {
  const Label a{1, 1};
  const Label b{1, 2};
  const dynamics::SocialForceParams params;
  const densities::UtParams ut;
  const auto joint = JointTrajectoryDensity::independent(
      {{a, Gaussian(state(-15, 5, 500, 0), diag4(2.0, 0.5))}, {b, Gaussian(state(15, -5, 501, 0), diag4(2.0, 0.5))}});
  const JointTrajectoryDensity pred = dynamics::joint_transition_predict(joint, {a, b}, params, ut);

  std::mt19937_64 rng(10);
  std::normal_distribution<double> n(0.0, 1.0);
  const Eigen::MatrixXd L = joint.joint().covariance.llt().matrixL();
  const int N = 100000;
  std::vector<Eigen::VectorXd> samples;
  samples.reserve(N);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(8);
  for (int s = 0; s < N; ++s) {
    Eigen::VectorXd e(8);
    for (int i = 0; i < 8; ++i) {
      e(i) = n(rng);
    }
    const Eigen::VectorXd x = joint.joint().mean + L * e;
    const std::vector<dynamics::LabeledState> st{{x.head(4), a}, {x.tail(4), b}};
    const auto next = dynamics::social_force_predict(st, params);
    Eigen::VectorXd y(8);
    y.head(4) = next[0].attribute;
    y.tail(4) = next[1].attribute;
    for (int i = 0; i < 8; ++i) {
      y(i) += params.process_noise_sigma * n(rng);
    }
    mean += y / N;
    samples.push_back(std::move(y));
  }
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(8, 8);
  for (const auto& y : samples) {
    cov += (y - mean) * (y - mean).transpose() / (N - 1);
  }
  const Eigen::VectorXd dm = pred.joint().mean - mean;
  const double pos_err = std::max({std::abs(dm(0)), std::abs(dm(2)), std::abs(dm(4)), std::abs(dm(6))});
  const double rel = (pred.joint().covariance - cov).norm() / cov.norm();
  return {pos_err < 0.5 && rel < 0.05,
          "max position mean error " + fmt(pos_err) + " m, relative covariance error " + fmt(100.0 * rel) + "%"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  std::set<int> skip;
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    const int n = std::atoi(argv[i + 1]);
    if (flag == "--only") {
      only.insert(n);
    } else if (flag == "--skip") {
      skip.insert(n);
    } else {
      std::cerr << "usage: msglmb_acceptance [--only N]... [--skip N]...\n";
      return 2;
    }
  }
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"cardinality matching", cardinality_matching},
      {"KL minimality of label marginals", kl_minimality},
      {"window marginalization optimality", windowing_optimality},
      {"multi-scan Gibbs stationarity", gibbs_stationarity},
      {"independent-dynamics equivalence", independent_equivalence},
      {"social-force scenario comparison", social_force_reproduction},
      {"merged-measurement update", merged_reduction},
      {"truncation L1 optimality", truncation_optimality},
      {"OSPA and OSPA2 correctness", ospa_correctness},
      {"unscented prediction fidelity", ut_fidelity},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if ((!only.empty() && !only.contains(id)) || skip.contains(id)) {
      continue;
    }
    const auto started = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    failures += o.pass ? 0 : 1;
    std::cout << "criterion " << id << " [" << (o.pass ? "PASS" : "FAIL") << "] " << criteria[i].first << ": "
              << o.detail << " (" << fmt(seconds, 3) << " s)" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
