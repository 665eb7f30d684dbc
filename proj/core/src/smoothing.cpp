#include "msglmb/smoothing.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace msglmb::smoothing {

namespace {

using recursion::NodePtr;

/// Gammas from just after `root` down to `node`, in scan order.
gibbs::History window_history(const NodePtr& node, const NodePtr& root) {
  gibbs::History h;
  for (NodePtr n = node; n != root; n = n->parent) {
    if (!n) {
      throw ConsistencyError("hypothesis does not descend from its window root");
    }
    h.push_back(n->gamma);
  }
  std::reverse(h.begin(), h.end());
  return h;
}

void normalize_tracks(std::vector<Track>& tracks) {
  std::vector<double> lw;
  for (const auto& t : tracks) {
    lw.push_back(t.node->log_weight);
  }
  const double z = log_sum_exp(lw);
  if (!std::isfinite(z)) {
    throw DegenerateDensityError("every smoother hypothesis has zero weight");
  }
  for (auto& t : tracks) {
    t.log_weight = t.node->log_weight - z;
  }
}

/// Weighted Gaussian moment match of per-hypothesis trajectory pieces that
/// all cover scans first..last.
rfs::TrajectoryDensity moment_match(const std::vector<const rfs::TrajectoryDensity*>& parts,
                                    const std::vector<double>& weights, int first, int last) {
  rfs::TrajectoryDensity out;
  out.start = first;
  const int n = last - first + 1;
  std::vector<Eigen::VectorXd> means(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(parts.front()->at(first + t).dim());
    for (std::size_t i = 0; i < parts.size(); ++i) {
      m += weights[i] * parts[i]->at(first + t).mean;
    }
    means[static_cast<std::size_t>(t)] = m;
  }
  for (int t = 0; t < n; ++t) {
    const Eigen::VectorXd& m = means[static_cast<std::size_t>(t)];
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(m.size(), m.size());
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const auto& g = parts[i]->at(first + t);
      const Eigen::VectorXd d = g.mean - m;
      P += weights[i] * (g.covariance + d * d.transpose());
    }
    out.marginals.emplace_back(m, densities::symmetrized(P));
    if (t + 1 < n) {
      const Eigen::VectorXd& m2 = means[static_cast<std::size_t>(t + 1)];
      Eigen::MatrixXd C = Eigen::MatrixXd::Zero(m.size(), m2.size());
      for (std::size_t i = 0; i < parts.size(); ++i) {
        const auto& p = *parts[i];
        const auto lag = static_cast<std::size_t>(first + t - p.start);
        const Eigen::VectorXd d1 = p.at(first + t).mean - m;
        const Eigen::VectorXd d2 = p.at(first + t + 1).mean - m2;
        C += weights[i] * (p.lag_cross[lag] + d1 * d2.transpose());
      }
      out.lag_cross.push_back(std::move(C));
    }
  }
  return out;
}

/// Groups hypotheses by their history over [from, to] and marginalizes.
rfs::MultiScanGlmb marginal_part(const rfs::MultiScanGlmb& g, int from, int to) {
  std::map<std::string, std::vector<std::size_t>> groups;
  std::vector<std::string> order;
  for (std::size_t i = 0; i < g.hypotheses.size(); ++i) {
    const auto& h = g.hypotheses[i];
    std::string key;
    for (int s = from; s <= to; ++s) {
      key += h.history[static_cast<std::size_t>(s - h.first_scan)].to_text();
      key += '|';
    }
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) {
      order.push_back(key);
    }
    it->second.push_back(i);
  }

  rfs::MultiScanGlmb out;
  out.first_scan = from;
  out.last_scan = to;
  out.normalized = true;
  for (const auto& key : order) {
    const auto& members = groups.at(key);
    std::vector<double> lw;
    for (std::size_t i : members) {
      lw.push_back(g.hypotheses[i].log_weight);
    }
    const double total = log_sum_exp(lw);
    std::vector<double> w;
    for (double x : lw) {
      w.push_back(std::isfinite(total) ? std::exp(x - total) : 1.0 / static_cast<double>(lw.size()));
    }
    const auto& lead = g.hypotheses[members.front()];
    rfs::GlmbHypothesis h;
    h.first_scan = from;
    h.log_weight = total;
    for (int s = from; s <= to; ++s) {
      h.history.push_back(lead.history[static_cast<std::size_t>(s - lead.first_scan)]);
    }
    for (const auto& [label, td] : lead.trajectories) {
      const int first = std::max(td.start, from);
      const int last = std::min(td.end(), to);
      if (first > last) {
        continue;
      }
      std::vector<const rfs::TrajectoryDensity*> parts;
      for (std::size_t i : members) {
        parts.push_back(&g.hypotheses[i].trajectories.at(label));
      }
      h.trajectories.emplace(label, moment_match(parts, w, first, last));
    }
    out.hypotheses.push_back(std::move(h));
  }
  return out;
}

MultiObjectTrajectory means_of(const rfs::GlmbHypothesis& h) {
  MultiObjectTrajectory out;
  for (const auto& [label, td] : h.trajectories) {
    rfs::TrajectorySegment seg;
    seg.label = label;
    seg.start = td.start;
    for (const auto& g : td.marginals) {
      seg.states.push_back(g.mean);
    }
    out.push_back(std::move(seg));
  }
  return out;
}

}  // namespace

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::SfaThenUa:
      return "sfa-then-ua";
    case Strategy::JointSfaUa:
      return "joint-sfa-ua";
    case Strategy::StandardMultiscan:
      return "standard";
  }
  return "unknown";
}

Strategy strategy_from_string(std::string_view text) {
  if (text == "sfa-then-ua") {
    return Strategy::SfaThenUa;
  }
  if (text == "joint-sfa-ua") {
    return Strategy::JointSfaUa;
  }
  if (text == "standard") {
    return Strategy::StandardMultiscan;
  }
  throw InvalidInputError("unknown strategy '" + std::string(text) + "'");
}

recursion::Retention retention_for(Strategy s) {
  return s == Strategy::SfaThenUa ? recursion::Retention::Joint : recursion::Retention::Marginal;
}

recursion::Model model_for(Strategy s, recursion::Model model) {
  if (s == Strategy::StandardMultiscan) {
    model.dynamics.V = 0.0;
  }
  return model;
}

WindowPlan WindowPlan::overlapping_plan(int duration, int length, int overlap) {
  if (duration < 1 || length < 1 || overlap < 0 || overlap >= length) {
    throw InvalidInputError("invalid overlapping window plan");
  }
  WindowPlan plan;
  plan.overlapping = true;
  const int stride = length - overlap;
  for (int j = 1;; j += stride) {
    const int k = std::min(j + length - 1, duration);
    const int m = std::min(j + stride - 1, k);
    plan.windows.push_back(Window{j, m, k});
    if (k == duration) {
      break;
    }
  }
  return plan;
}

WindowPlan WindowPlan::non_overlapping_plan(int duration, int length) {
  if (duration < 1 || length < 1) {
    throw InvalidInputError("invalid window plan");
  }
  WindowPlan plan;
  for (int j = 1; j <= duration; j += length) {
    const int k = std::min(j + length - 1, duration);
    plan.windows.push_back(Window{j, k, k});
  }
  return plan;
}

WindowPlan WindowPlan::single(int duration) {
  if (duration < 1) {
    throw InvalidInputError("invalid window plan");
  }
  return WindowPlan{{Window{1, duration, duration}}, false};
}

void WindowPlan::validate() const {
  if (windows.empty() || windows.front().j != 1) {
    throw InvalidInputError("window plan must start at scan 1");
  }
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const Window& w = windows[i];
    if (!(w.j <= w.m && w.m <= w.k)) {
      throw InvalidInputError("window " + std::to_string(i + 1) + " is not ordered");
    }
    if (!overlapping && w.m != w.k) {
      throw InvalidInputError("non-overlapping windows must finalize their last scan");
    }
    if (i > 0) {
      const Window& prev = windows[i - 1];
      if (w.j != prev.m + 1 || w.k <= prev.k) {
        throw InvalidInputError("window " + std::to_string(i + 1) +
                                " does not continue from the previous window");
      }
    }
  }
}

void SmootherConfig::validate() const {
  if (max_hypotheses < 1 || gibbs_iterations < 0 || candidates_per_hypothesis < 1 ||
      sample_budget < 0 || !(weight_floor >= 0.0 && weight_floor < 1.0)) {
    throw InvalidInputError("invalid smoother configuration");
  }
  plan.validate();
}

std::vector<int> allocate_budget(std::span<const double> log_weights, int total) {
  const std::size_t n = log_weights.size();
  std::vector<int> out(n, 1);
  if (n == 0 || total <= static_cast<int>(n)) {
    return out;
  }
  const int extra = total - static_cast<int>(n);
  const double z = log_sum_exp(log_weights);
  std::vector<double> remainder(n);
  int given = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double quota = extra * std::exp(log_weights[i] - z);
    const int base = static_cast<int>(std::floor(quota));
    out[i] += base;
    given += base;
    remainder[i] = quota - base;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; given < extra; ++i) {
    ++out[order[i % n]];
    ++given;
  }
  return out;
}

std::vector<NodePtr> refine(recursion::Engine& engine, const NodePtr& root,
                            const gibbs::History& history, int sweeps, gibbs::Rng& rng) {
  recursion::NodeContext ctx(engine, root, root->scan + static_cast<int>(history.size()));
  std::vector<gibbs::History> states;
  try {
    states = gibbs::ms_gibbs(history, sweeps, ctx, rng);
  } catch (const InvalidInputError&) {
    states = {history};
  }
  std::vector<NodePtr> out;
  for (const auto& s : states) {
    NodePtr n = ctx.replay(s);
    if (std::find(out.begin(), out.end(), n) == out.end()) {
      out.push_back(std::move(n));
    }
  }
  return out;
}

Smoother::Smoother(recursion::Engine& engine, SmootherConfig config, std::uint64_t seed)
    : engine_(engine), config_(std::move(config)), rng_(seed) {
  config_.validate();
  NodePtr root = engine_.root(0, {});
  tracks_.push_back(Track{root, root, 0.0});
}

void Smoother::run() {
  while (scan_ < config_.plan.duration()) {
    step();
  }
}

void Smoother::step() {
  const int k = scan_ + 1;
  if (k > config_.plan.duration()) {
    throw StateError("smoother already processed every planned scan");
  }
  while (k > config_.plan.windows[window_].k) {
    ++window_;
    rebase(config_.plan.windows[window_].j - 1);
  }
  sfa(k);
  scan_ = k;
}

void Smoother::rebase(int root_scan) {
  std::map<int, NodePtr> rerooted;
  for (auto& t : tracks_) {
    gibbs::History tail;
    NodePtr ancestor = t.node;
    while (ancestor->scan > root_scan) {
      tail.push_back(ancestor->gamma);
      ancestor = ancestor->parent;
    }
    std::reverse(tail.begin(), tail.end());
    if (engine_.retention() == recursion::Retention::Marginal) {
      t.root = ancestor;
      continue;
    }
    auto [it, inserted] = rerooted.try_emplace(ancestor->id);
    if (inserted) {
      it->second = engine_.reroot(ancestor);
    }
    NodePtr node = it->second;
    for (const auto& gamma : tail) {
      node = engine_.extend(node, gamma);
    }
    t.root = it->second;
    t.node = std::move(node);
  }
  normalize_tracks(tracks_);
}

void Smoother::sfa(int k) {
  const auto started = std::chrono::steady_clock::now();
  std::vector<double> lw;
  for (const auto& t : tracks_) {
    lw.push_back(t.log_weight);
  }
  const int total =
      config_.sample_budget > 0 ? config_.sample_budget : static_cast<int>(config_.max_hypotheses);
  const std::vector<int> budget = allocate_budget(lw, total);

  std::vector<Track> pool;
  std::set<const recursion::Node*> seen;
  for (std::size_t h = 0; h < tracks_.size(); ++h) {
    const Track& t = tracks_[h];
    const auto table = engine_.factors(*t.node);
    std::vector<ExtendedAssociationMap> samples = gibbs::factor_sampling(*table, budget[h], rng_);
    std::sort(samples.begin(), samples.end());
    samples.erase(std::unique(samples.begin(), samples.end()), samples.end());
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t s = 0; s < samples.size(); ++s) {
      scored.emplace_back(table->log_product(samples[s]), s);
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    scored.resize(std::min(scored.size(), config_.candidates_per_hypothesis));

    const gibbs::History base = window_history(t.node, t.root);
    for (const auto& [score, s] : scored) {
      if (!std::isfinite(score)) {
        continue;
      }
      gibbs::History history = base;
      history.push_back(samples[s]);
      for (NodePtr n : refine(engine_, t.root, history, config_.gibbs_iterations, rng_)) {
        if (seen.insert(n.get()).second) {
          pool.push_back(Track{std::move(n), t.root, 0.0});
        }
      }
    }
  }
  if (pool.empty()) {
    throw DegenerateDensityError("no admissible extension at scan " + std::to_string(k));
  }

  std::stable_sort(pool.begin(), pool.end(), [](const Track& a, const Track& b) {
    if (a.node->log_weight != b.node->log_weight) {
      return a.node->log_weight > b.node->log_weight;
    }
    return a.node->id < b.node->id;
  });
  std::vector<double> all;
  for (const auto& t : pool) {
    all.push_back(t.node->log_weight);
  }
  const double z_all = log_sum_exp(all);
  pool.resize(std::min(pool.size(), config_.max_hypotheses));
  normalize_tracks(pool);
  const double log_floor = std::log(config_.weight_floor);
  std::size_t keep = 1;
  while (keep < pool.size() && pool[keep].log_weight >= log_floor) {
    ++keep;
  }
  pool.resize(keep);
  std::vector<double> kept;
  for (const auto& t : pool) {
    kept.push_back(t.node->log_weight);
  }
  const double discarded = 1.0 - std::exp(log_sum_exp(kept) - z_all);
  normalize_tracks(pool);
  tracks_ = std::move(pool);
  engine_.collect_garbage();

  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  stats_.push_back(ScanStats{k, tracks_.size(), std::max(0.0, discarded), seconds});
}

rfs::MultiScanGlmb Smoother::posterior() const {
  rfs::MultiScanGlmb out;
  out.first_scan = 1;
  out.last_scan = scan_;
  out.normalized = true;
  for (const auto& t : tracks_) {
    out.hypotheses.push_back(recursion::materialize(t.node, t.log_weight));
  }
  return out;
}

std::pair<rfs::MultiScanGlmb, rfs::MultiScanGlmb> window_marginalize(const rfs::MultiScanGlmb& g,
                                                                     int m) {
  if (!(g.first_scan <= m && m < g.last_scan)) {
    throw InvalidInputError("window split " + std::to_string(m) + " outside [" +
                            std::to_string(g.first_scan) + ", " + std::to_string(g.last_scan) + ")");
  }
  for (const auto& h : g.hypotheses) {
    if (h.first_scan != g.first_scan || h.last_scan() != g.last_scan) {
      throw InvalidInputError("hypothesis window differs from the density window");
    }
  }
  const rfs::MultiScanGlmb normalized = g.normalized ? g : rfs::normalize(g);
  return {marginal_part(normalized, g.first_scan, m), marginal_part(normalized, m + 1, g.last_scan)};
}

MultiObjectTrajectory extract_estimates(const rfs::MultiScanGlmb& g) {
  const rfs::GlmbHypothesis* best = nullptr;
  std::string best_key;
  for (const auto& h : g.hypotheses) {
    if (!best || h.log_weight > best->log_weight) {
      best = &h;
      best_key = h.history_key();
    } else if (h.log_weight == best->log_weight) {
      std::string key = h.history_key();
      if (key < best_key) {
        best = &h;
        best_key = std::move(key);
      }
    }
  }
  return best ? means_of(*best) : MultiObjectTrajectory{};
}

MultiObjectTrajectory extract_estimates(const Smoother& smoother) {
  const auto& tracks = smoother.tracks();
  if (tracks.empty()) {
    return {};
  }
  const Track* best = &tracks.front();
  for (const auto& t : tracks) {
    if (t.log_weight > best->log_weight ||
        (t.log_weight == best->log_weight && t.node->id < best->node->id)) {
      best = &t;
    }
  }
  return means_of(recursion::materialize(best->node, best->log_weight));
}

}  // namespace msglmb::smoothing
