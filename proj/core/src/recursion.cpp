#include "msglmb/recursion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace msglmb::recursion {

namespace {

using densities::Gaussian;
using densities::JointTrajectoryDensity;
using dynamics::kStateDim;

double log_q(double p) { return std::log1p(-p); }

/// Union-find over indices 0..n-1.
class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t i) {
    while (parent_[i] != i) {
      parent_[i] = parent_[parent_[i]];
      i = parent_[i];
    }
    return i;
  }
  void join(std::size_t a, std::size_t b) { parent_[find(a)] = find(b); }

 private:
  std::vector<std::size_t> parent_;
};

/// log of sum_k S(n, k) q^k: every partition of n missed objects into groups,
/// each group missed with probability q.
double log_missed_partitions(int n, double q) {
  if (n == 0) {
    return 0.0;
  }
  const auto size = static_cast<std::size_t>(n) + 1;
  std::vector<std::vector<double>> stirling(size, std::vector<double>(size, 0.0));
  stirling[0][0] = 1.0;
  for (std::size_t i = 1; i < size; ++i) {
    for (std::size_t k = 1; k <= i; ++k) {
      stirling[i][k] = static_cast<double>(k) * stirling[i - 1][k] + stirling[i - 1][k - 1];
    }
  }
  double sum = 0.0;
  for (std::size_t k = 1; k < size; ++k) {
    sum += stirling[size - 1][k] * std::pow(q, static_cast<double>(k));
  }
  return std::log(sum);
}

std::vector<std::pair<Label, int>> layout_of(const LabelSet& labels) {
  std::vector<std::pair<Label, int>> layout;
  layout.reserve(labels.size());
  for (const Label& l : labels) {
    layout.emplace_back(l, kStateDim);
  }
  return layout;
}

double normalize_weights(std::vector<ExactHypothesis>& hs) {
  std::vector<double> lw;
  lw.reserve(hs.size());
  for (const auto& h : hs) {
    lw.push_back(h.log_weight);
  }
  const double z = log_sum_exp(lw);
  if (!std::isfinite(z)) {
    throw DegenerateDensityError("every posterior hypothesis has zero weight");
  }
  for (auto& h : hs) {
    h.log_weight -= z;
  }
  return z;
}

struct MeasurementGroup {
  LabelSet members;
  int index = 0;
};

}  // namespace

void Model::validate() const {
  birth.validate();
  survival.validate();
  dynamics.validate();
  sensor.validate();
  clutter.validate();
  ut.validate();
  if (!(detection_probability >= 0.0 && detection_probability <= 1.0)) {
    throw InvalidInputError("detection probability outside [0, 1]");
  }
  if (merged.enabled) {
    if (sensor.kind != measurement::SensorKind::BearingOnlyMoving) {
      throw InvalidInputError("merged measurements require a bearing-only sensor");
    }
    if (!(merged.cells.width > 0.0) || merged.gate_cells < 0 || merged.partition_cap < 1) {
      throw InvalidInputError("invalid merged measurement settings");
    }
  }
}

Engine::Engine(Model model, Retention retention, std::vector<measurement::ScanMeasurements> scans)
    : model_(std::move(model)), retention_(retention) {
  model_.validate();
  for (auto& s : scans) {
    if (!scans_.emplace(s.scan, std::move(s.z)).second) {
      throw InvalidInputError("duplicate measurements for scan " + std::to_string(s.scan));
    }
  }
}

const std::vector<Eigen::VectorXd>& Engine::measurements(int scan) const {
  auto it = scans_.find(scan);
  if (it == scans_.end()) {
    throw InvalidInputError("no measurements for scan " + std::to_string(scan));
  }
  return it->second;
}

bool Engine::has_measurements(int scan) const { return scans_.contains(scan); }

NodePtr Engine::root(int scan, JointTrajectoryDensity initial, double log_weight) {
  auto node = std::make_shared<Node>();
  node->id = next_id_++;
  node->scan = scan;
  node->posterior =
      retention_ == Retention::Marginal ? initial.block_diagonal() : std::move(initial);
  node->log_weight = log_weight;
  node->log_factor_weight = log_weight;
  return node;
}

NodePtr Engine::reroot(const NodePtr& node) {
  auto copy = std::make_shared<Node>();
  copy->id = next_id_++;
  copy->scan = node->scan;
  copy->gamma = node->gamma;
  copy->parent = node->parent;
  copy->parent_prediction = node->parent_prediction;
  copy->posterior = node->posterior.block_diagonal();
  copy->log_transition = node->log_transition;
  copy->log_likelihood = node->log_likelihood;
  copy->log_weight = node->log_weight;
  copy->log_factor_weight = node->log_factor_weight;
  return copy;
}

NodePtr Engine::extend(const NodePtr& parent, const ExtendedAssociationMap& gamma) {
  Key key{parent->id, gamma};
  if (auto it = memo_.find(key); it != memo_.end()) {
    return it->second;
  }
  NodePtr node = build(parent, gamma);
  memo_.emplace(std::move(key), node);
  return node;
}

std::shared_ptr<const Prediction> Engine::prediction(const Node& node) {
  if (!node.prediction_) {
    auto p = std::make_shared<Prediction>();
    p->labels = node.alive();
    if (!p->labels.empty()) {
      dynamics::JointPrediction jp =
          dynamics::predict_joint(node.posterior, p->labels, model_.dynamics, model_.ut);
      p->predicted = std::move(jp.predicted);
      p->cross = std::move(jp.cross_covariance);
    }
    node.prediction_ = std::move(p);
  }
  return node.prediction_;
}

std::shared_ptr<const gibbs::FactorTable> Engine::factors(const Node& node) {
  if (node.factors_) {
    return node.factors_;
  }
  const int k = node.scan + 1;
  const auto& Z = measurements(k);
  const auto pred = prediction(node);
  const LabelSet births = model_.birth.labels(k);

  auto table = std::make_shared<gibbs::FactorTable>();
  table->scan = k;
  table->num_measurements = static_cast<int>(Z.size());
  table->labels = set_union(node.alive(), births);
  const auto n = static_cast<Eigen::Index>(table->labels.size());
  table->log_eta = Eigen::MatrixXd::Constant(n, table->num_measurements + 2, kNegInf);
  table->is_birth.assign(table->labels.size(), 0);

  std::vector<double> log_kappa(Z.size());
  for (std::size_t j = 0; j < Z.size(); ++j) {
    log_kappa[j] = std::log(model_.clutter.intensity(Z[j], model_.sensor));
  }
  const double pd = model_.detection_probability;
  std::vector<double> bearings(table->labels.size());
  for (std::size_t i = 0; i < table->labels.size(); ++i) {
    const Label& l = table->labels[i];
    const bool birth = !contains(node.alive(), l);
    table->is_birth[i] = birth ? 1 : 0;
    const double p = birth ? model_.birth.component(l).probability : model_.survival.probability;
    const Gaussian g = birth ? model_.birth.component(l).density : pred->predicted.marginal(l);
    const auto row = static_cast<Eigen::Index>(i);
    table->log_eta(row, 0) = log_q(p);
    table->log_eta(row, 1) = std::log(p) + log_q(pd);
    const measurement::PredictedMeasurement pm =
        measurement::predict_measurement(g, model_.sensor, k, model_.ut);
    bearings[i] = pm.mean(0);
    for (std::size_t j = 0; j < Z.size(); ++j) {
      if (!std::isfinite(log_kappa[j])) {
        continue;
      }
      if (model_.gate > 0.0 && measurement::mahalanobis(pm, Z[j], model_.sensor) > model_.gate) {
        continue;
      }
      table->log_eta(row, static_cast<Eigen::Index>(j) + 2) =
          std::log(p) + std::log(pd) + measurement::log_likelihood(pm, Z[j], model_.sensor) -
          log_kappa[j];
    }
  }

  if (model_.merged.enabled) {
    DisjointSets sets(table->labels.size());
    const double reach = model_.merged.gate_cells * model_.merged.cells.width;
    for (std::size_t a = 0; a < bearings.size(); ++a) {
      for (std::size_t b = a + 1; b < bearings.size(); ++b) {
        if (std::abs(wrap_to_pi(bearings[a] - bearings[b])) <= reach) {
          sets.join(a, b);
        }
      }
    }
    table->cluster.resize(table->labels.size());
    for (std::size_t i = 0; i < table->labels.size(); ++i) {
      table->cluster[i] = static_cast<int>(sets.find(i));
    }
  }
  node.factors_ = std::move(table);
  return node.factors_;
}

NodePtr Engine::build(const NodePtr& parent, const ExtendedAssociationMap& gamma) {
  const int k = parent->scan + 1;
  const auto& Z = measurements(k);
  const int M = static_cast<int>(Z.size());
  const LabelSet births = model_.birth.labels(k);
  const LabelSet domain = set_union(parent->alive(), births);
  if (gamma.domain() != domain) {
    throw InvalidInputError("association map at scan " + std::to_string(k) +
                            " does not cover the surviving and birth labels");
  }
  const auto table = factors(*parent);
  const auto& entries = gamma.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const int u = entries[i].second;
    if (u < -1 || u > M) {
      throw InvalidInputError("measurement index " + std::to_string(u) + " out of range at scan " +
                              std::to_string(k));
    }
    for (std::size_t j = i + 1; u > 0 && j < entries.size(); ++j) {
      if (entries[j].second == u && !table->may_share(i, j)) {
        throw InvalidInputError("measurement " + std::to_string(u) + " assigned twice at scan " +
                                std::to_string(k));
      }
    }
  }

  auto node = std::make_shared<Node>();
  node->id = next_id_++;
  node->scan = k;
  node->gamma = gamma;
  node->parent = parent;

  // Transition factor.
  double eta = 0.0;
  for (const auto& [l, u] : entries) {
    const double p = contains(births, l) ? model_.birth.component(l).probability
                                         : model_.survival.probability;
    eta += u >= 0 ? std::log(p) : log_q(p);
  }
  node->log_transition = eta;

  // Prior over the labels alive at k.
  const LabelSet live = gamma.live_labels();
  const LabelSet survivors = set_intersection(parent->alive(), live);
  auto pred = prediction(*parent);
  node->parent_prediction = pred;
  JointTrajectoryDensity prior = survivors.empty() ? JointTrajectoryDensity{}
                                                   : pred->predicted.slice(survivors);
  std::vector<std::pair<Label, Gaussian>> born;
  for (const Label& l : set_difference(live, survivors)) {
    born.emplace_back(l, model_.birth.component(l).density);
  }
  if (!born.empty()) {
    prior = prior.with_independent(born);
  }

  // Measurement groups, keyed by measurement index.
  std::map<int, LabelSet> by_index;
  std::vector<std::pair<Label, std::size_t>> missed;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& [l, u] = entries[i];
    if (u > 0) {
      by_index[u].push_back(l);
    } else if (u == 0) {
      missed.emplace_back(l, i);
    }
  }

  const double pd = model_.detection_probability;
  double mu = 0.0;
  if (model_.merged.enabled) {
    std::map<int, int> missed_per_cluster;
    for (const auto& [l, i] : missed) {
      ++missed_per_cluster[table->cluster[i]];
    }
    for (const auto& [c, n] : missed_per_cluster) {
      mu += log_missed_partitions(n, 1.0 - pd);
    }
  } else {
    mu += static_cast<double>(missed.size()) * log_q(pd);
  }

  Eigen::VectorXd mean = prior.joint().mean;
  Eigen::MatrixXd cov = prior.joint().covariance;
  if (!by_index.empty()) {
    // Components: correlated groups joined by shared measurements.
    const LabelSet& labels = prior.labels();
    DisjointSets sets(labels.size());
    auto pos = [&labels](const Label& l) {
      return static_cast<std::size_t>(std::lower_bound(labels.begin(), labels.end(), l) -
                                      labels.begin());
    };
    for (const LabelSet& g : prior.correlated_groups()) {
      for (std::size_t a = 1; a < g.size(); ++a) {
        sets.join(pos(g[0]), pos(g[a]));
      }
    }
    for (const auto& [u, members] : by_index) {
      for (std::size_t a = 1; a < members.size(); ++a) {
        sets.join(pos(members[0]), pos(members[a]));
      }
    }
    std::map<std::size_t, std::vector<MeasurementGroup>> components;
    for (const auto& [u, members] : by_index) {
      components[sets.find(pos(members[0]))].push_back(MeasurementGroup{members, u});
    }
    const int zdim = model_.sensor.dim();
    for (const auto& [root_index, groups] : components) {
      LabelSet component;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (sets.find(i) == root_index) {
          component.push_back(labels[i]);
        }
      }
      const std::vector<int> idx = prior.indices(component);
      const Gaussian local(mean(idx), cov(idx, idx));

      // Offsets of each group's members inside the local stacked state.
      std::vector<std::vector<int>> offsets;
      Eigen::VectorXd z(static_cast<Eigen::Index>(groups.size()) * zdim);
      Eigen::MatrixXd R = Eigen::MatrixXd::Zero(z.size(), z.size());
      std::vector<int> angular;
      for (std::size_t g = 0; g < groups.size(); ++g) {
        std::vector<int> off;
        for (const Label& l : groups[g].members) {
          off.push_back(static_cast<int>(
              std::lower_bound(component.begin(), component.end(), l) - component.begin()) *
              kStateDim);
        }
        offsets.push_back(std::move(off));
        const auto at = static_cast<Eigen::Index>(g) * zdim;
        const Eigen::VectorXd& zu = Z[static_cast<std::size_t>(groups[g].index - 1)];
        z.segment(at, zdim) = zu;
        R.block(at, at, zdim, zdim) = model_.sensor.R;
        for (int a : model_.sensor.angular()) {
          angular.push_back(static_cast<int>(at) + a);
        }
        const double kappa = model_.clutter.intensity(zu, model_.sensor);
        mu += std::log(pd) - std::log(kappa);
      }
      const bool merged = model_.merged.enabled;
      const auto& sensor = model_.sensor;
      const densities::VectorMap h = [&](const Eigen::VectorXd& x) {
        Eigen::VectorXd out(static_cast<Eigen::Index>(offsets.size()) * zdim);
        for (std::size_t g = 0; g < offsets.size(); ++g) {
          const auto at = static_cast<Eigen::Index>(g) * zdim;
          if (merged) {
            Eigen::VectorXd stacked(static_cast<Eigen::Index>(offsets[g].size()) * kStateDim);
            for (std::size_t m = 0; m < offsets[g].size(); ++m) {
              stacked.segment(static_cast<Eigen::Index>(m) * kStateDim, kStateDim) =
                  x.segment(offsets[g][m], kStateDim);
            }
            out.segment(at, zdim) = measurement::group_measurement(stacked, sensor, k);
          } else {
            out.segment(at, zdim) = sensor.h(x.segment(offsets[g][0], kStateDim), k);
          }
        }
        return out;
      };
      const densities::UpdateResult r =
          densities::conditional_update(local, h, z, R, model_.ut, angular);
      mu += r.log_likelihood;
      mean(idx) = r.posterior.mean;
      cov(idx, idx) = r.posterior.covariance;
    }
  }
  node->log_likelihood = mu;
  node->posterior = JointTrajectoryDensity(layout_of(prior.labels()), Gaussian(mean, cov));
  if (retention_ == Retention::Marginal) {
    node->posterior = node->posterior.block_diagonal();
  }
  node->log_weight = parent->log_weight + eta + mu;
  node->log_factor_weight = parent->log_factor_weight + table->log_product(gamma);
  return node;
}

void Engine::collect_garbage() {
  bool removed = true;
  while (removed) {
    removed = false;
    for (auto it = memo_.begin(); it != memo_.end();) {
      if (it->second.use_count() == 1) {
        it = memo_.erase(it);
        removed = true;
      } else {
        ++it;
      }
    }
  }
}

NodeContext::NodeContext(Engine& engine, NodePtr root, int last_scan)
    : engine_(engine), root_(std::move(root)), last_scan_(last_scan) {
  if (last_scan_ < root_->scan) {
    throw InvalidInputError("context window ends before its root");
  }
  chain_.push_back(root_);
}

std::shared_ptr<const gibbs::FactorTable> NodeContext::factors(
    std::span<const ExtendedAssociationMap> prefix) {
  return engine_.factors(*replay(prefix));
}

NodePtr NodeContext::replay(std::span<const ExtendedAssociationMap> history) {
  std::size_t i = 0;
  while (i < history.size() && i + 1 < chain_.size() && chain_[i + 1]->gamma == history[i]) {
    ++i;
  }
  chain_.resize(i + 1);
  for (; i < history.size(); ++i) {
    chain_.push_back(engine_.extend(chain_.back(), history[i]));
  }
  return chain_.back();
}

ExactPosterior initial_posterior(Engine& engine, int scan, JointTrajectoryDensity initial) {
  return ExactPosterior{scan, {ExactHypothesis{engine.root(scan, std::move(initial)), 0.0}}};
}

PredictedPosterior predict(const ExactPosterior& posterior, Engine& engine) {
  const Model& model = engine.model();
  const int k = posterior.scan + 1;
  const LabelSet births = model.birth.labels(k);
  PredictedPosterior out{k, {}};
  for (const auto& h : posterior.hypotheses) {
    if (h.node->scan != posterior.scan) {
      throw InvalidInputError("hypothesis scan does not match the posterior scan");
    }
    const LabelSet& alive = h.node->alive();
    const LabelSet candidates = set_union(alive, births);
    if (candidates.size() > 24) {
      throw SizeError("prediction over " + std::to_string(candidates.size()) + " labels");
    }
    const std::uint32_t subsets = 1u << candidates.size();
    for (std::uint32_t mask = 0; mask < subsets; ++mask) {
      LabelSet next;
      for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (mask & (1u << i)) {
          next.push_back(candidates[i]);
        }
      }
      const double lw =
          h.log_weight + dynamics::log_transition_weight(alive, next, k, model.birth, model.survival);
      out.hypotheses.push_back(PredictedHypothesis{h.node, std::move(next), lw});
    }
  }
  return out;
}

ExactPosterior update(const PredictedPosterior& predicted, Engine& engine, int map_cap) {
  if (engine.model().merged.enabled) {
    return update_merged(predicted, engine, map_cap);
  }
  const int k = predicted.scan;
  const int M = static_cast<int>(engine.measurements(k).size());
  const LabelSet births = engine.model().birth.labels(k);
  ExactPosterior out{k, {}};
  for (const auto& p : predicted.hypotheses) {
    const LabelSet domain = set_union(p.parent->alive(), births);
    for (const AssociationMap& theta : measurement::enumerate_association_maps(p.labels, M, map_cap)) {
      NodePtr child = engine.extend(p.parent, theta.extend(domain));
      const double lw = p.log_weight + child->log_likelihood;
      out.hypotheses.push_back(ExactHypothesis{std::move(child), lw});
    }
  }
  normalize_weights(out.hypotheses);
  return out;
}

ExactPosterior update_merged(const PredictedPosterior& predicted, Engine& engine, int map_cap) {
  const Model& model = engine.model();
  const int k = predicted.scan;
  const int M = static_cast<int>(engine.measurements(k).size());
  const LabelSet births = model.birth.labels(k);
  ExactPosterior out{k, {}};
  for (const auto& p : predicted.hypotheses) {
    const LabelSet domain = set_union(p.parent->alive(), births);
    const auto table = engine.factors(*p.parent);

    std::map<int, LabelSet> clusters;
    for (const Label& l : p.labels) {
      const std::size_t i = *table->index(l);
      clusters[table->cluster.empty() ? static_cast<int>(i) : table->cluster[i]].push_back(l);
    }
    std::vector<std::vector<measurement::Partition>> options;
    for (const auto& [c, members] : clusters) {
      if (static_cast<int>(members.size()) > model.merged.partition_cap) {
        std::string names;
        for (const Label& l : members) {
          names += (names.empty() ? "" : ",") + to_string(l);
        }
        throw SizeError("cluster {" + names + "} exceeds the partition cap of " +
                        std::to_string(model.merged.partition_cap));
      }
      options.push_back(measurement::enumerate_partitions(members, map_cap));
    }

    std::set<ExtendedAssociationMap> seen;
    std::vector<std::size_t> choice(options.size(), 0);
    while (true) {
      std::vector<LabelSet> blocks;
      for (std::size_t c = 0; c < options.size(); ++c) {
        for (const LabelSet& b : options[c][choice[c]]) {
          blocks.push_back(b);
        }
      }
      LabelSet pseudo;
      for (std::size_t b = 0; b < blocks.size(); ++b) {
        pseudo.push_back(Label{0, static_cast<int>(b) + 1});
      }
      for (const AssociationMap& theta : measurement::enumerate_association_maps(pseudo, M, map_cap)) {
        std::vector<ExtendedAssociationMap::Entry> entries;
        for (const Label& l : domain) {
          entries.emplace_back(l, -1);
        }
        ExtendedAssociationMap gamma(std::move(entries));
        for (std::size_t b = 0; b < blocks.size(); ++b) {
          const int u = *theta.find(pseudo[b]);
          for (const Label& l : blocks[b]) {
            gamma.set(l, u);
          }
        }
        if (!seen.insert(gamma).second) {
          continue;
        }
        NodePtr child = engine.extend(p.parent, gamma);
        const double lw = p.log_weight + child->log_likelihood;
        out.hypotheses.push_back(ExactHypothesis{std::move(child), lw});
      }
      std::size_t c = 0;
      while (c < choice.size() && ++choice[c] == options[c].size()) {
        choice[c] = 0;
        ++c;
      }
      if (c == choice.size()) {
        break;
      }
    }
  }
  normalize_weights(out.hypotheses);
  return out;
}

std::vector<ExtendedAssociationMap> enumerate_extended_maps(const LabelSet& domain, int M,
                                                            std::size_t cap) {
  if (M < 0) {
    throw InvalidInputError("negative measurement count");
  }
  std::vector<ExtendedAssociationMap> out;
  std::vector<ExtendedAssociationMap::Entry> entries(domain.size());
  std::vector<char> used(static_cast<std::size_t>(M) + 1, 0);
  auto rec = [&](auto&& self, std::size_t i) -> void {
    if (i == domain.size()) {
      if (out.size() >= cap) {
        throw SizeError("extended map enumeration exceeds cap " + std::to_string(cap));
      }
      out.emplace_back(entries);
      return;
    }
    for (int u = -1; u <= M; ++u) {
      if (u > 0 && used[static_cast<std::size_t>(u)]) {
        continue;
      }
      entries[i] = {domain[i], u};
      if (u > 0) {
        used[static_cast<std::size_t>(u)] = 1;
      }
      self(self, i + 1);
      if (u > 0) {
        used[static_cast<std::size_t>(u)] = 0;
      }
    }
  };
  rec(rec, 0);
  return out;
}

ExactPosterior brute_force_posterior(Engine& engine, const ExactPosterior& initial, int last_scan,
                                     std::size_t cap) {
  if (last_scan < initial.scan) {
    throw InvalidInputError("brute force window ends before the initial scan");
  }
  std::vector<ExactHypothesis> current = initial.hypotheses;
  for (int k = initial.scan + 1; k <= last_scan; ++k) {
    const int M = static_cast<int>(engine.measurements(k).size());
    const LabelSet births = engine.model().birth.labels(k);
    std::vector<ExactHypothesis> next;
    for (const auto& h : current) {
      const LabelSet domain = set_union(h.node->alive(), births);
      for (const auto& gamma : enumerate_extended_maps(domain, M, cap)) {
        if (next.size() >= cap) {
          throw SizeError("brute force posterior exceeds cap " + std::to_string(cap));
        }
        NodePtr child = engine.extend(h.node, gamma);
        const double lw = h.log_weight + child->log_transition + child->log_likelihood;
        next.push_back(ExactHypothesis{std::move(child), lw});
      }
    }
    current = std::move(next);
  }
  ExactPosterior out{last_scan, std::move(current)};
  normalize_weights(out.hypotheses);
  return out;
}

std::vector<NodePtr> chain_of(const NodePtr& leaf) {
  std::vector<NodePtr> chain;
  for (NodePtr n = leaf; n; n = n->parent) {
    chain.push_back(n);
  }
  std::reverse(chain.begin(), chain.end());
  return chain;
}

rfs::GlmbHypothesis materialize(const NodePtr& leaf, double log_weight) {
  const std::vector<NodePtr> chain = chain_of(leaf);
  const std::size_t T = chain.size() - 1;
  rfs::GlmbHypothesis h;
  h.first_scan = chain.front()->scan + 1;
  h.log_weight = log_weight;
  for (std::size_t t = 1; t <= T; ++t) {
    h.history.push_back(chain[t]->gamma);
  }

  std::map<Label, std::size_t> first;
  std::map<Label, std::size_t> last;
  for (std::size_t t = 1; t <= T; ++t) {
    for (const Label& l : chain[t]->alive()) {
      first.try_emplace(l, t);
      last[l] = t;
    }
  }
  std::map<std::size_t, LabelSet> owners;
  for (const auto& [l, t] : last) {
    owners[t].push_back(l);
  }
  for (const auto& [l, t] : first) {
    rfs::TrajectoryDensity td;
    td.start = chain[t]->scan;
    const std::size_t n = last[l] - t + 1;
    td.marginals.resize(n);
    td.lag_cross.resize(n - 1);
    h.trajectories.emplace(l, std::move(td));
  }

  // One backward pass per end index; each pass records only the labels whose
  // last alive scan is that index.
  for (const auto& [end, owned] : owners) {
    std::size_t earliest = end;
    for (const Label& l : owned) {
      earliest = std::min(earliest, first[l]);
    }
    JointTrajectoryDensity smoothed = chain[end]->posterior;
    auto record = [&](std::size_t t, const JointTrajectoryDensity& s) {
      for (const Label& l : owned) {
        if (t >= first[l]) {
          auto& td = h.trajectories.at(l);
          td.marginals[t - first[l]] = s.marginal(l);
        }
      }
    };
    record(end, smoothed);
    for (std::size_t t = end; t-- > earliest;) {
      const Node& now = *chain[t];
      const Node& next = *chain[t + 1];
      const Prediction& pred = *next.parent_prediction;
      const LabelSet S = set_intersection(now.alive(), next.alive());
      const Gaussian& f = now.posterior.joint();
      if (S.empty()) {
        smoothed = now.posterior;
        record(t, smoothed);
        continue;
      }
      const std::vector<int> pidx = pred.predicted.indices(S);
      const std::vector<int> sidx = smoothed.indices(S);
      const Eigen::MatrixXd P_hat = pred.predicted.joint().covariance(pidx, pidx);
      const Eigen::VectorXd m_hat = pred.predicted.joint().mean(pidx);
      const Eigen::MatrixXd C = pred.cross(Eigen::all, pidx);
      const Eigen::MatrixXd G = P_hat.ldlt().solve(C.transpose()).transpose();
      const Eigen::MatrixXd P_sm = smoothed.joint().covariance(sidx, sidx);
      const Eigen::VectorXd m_sm = smoothed.joint().mean(sidx);
      Eigen::VectorXd m = f.mean + G * (m_sm - m_hat);
      Eigen::MatrixXd P = densities::symmetrized(f.covariance + G * (P_sm - P_hat) * G.transpose());
      const Eigen::MatrixXd lag = G * P_sm;
      for (const Label& l : owned) {
        if (t >= first[l]) {
          const auto row = now.posterior.block(l);
          const auto col = static_cast<Eigen::Index>(
              std::lower_bound(S.begin(), S.end(), l) - S.begin()) * kStateDim;
          h.trajectories.at(l).lag_cross[t - first[l]] =
              lag.block(row.offset, col, row.length, kStateDim);
        }
      }
      smoothed = JointTrajectoryDensity(layout_of(now.alive()), Gaussian(std::move(m), std::move(P)));
      record(t, smoothed);
    }
  }
  return h;
}

rfs::MultiScanGlmb approximate_cardinality_matched(const ExactPosterior& exact) {
  rfs::MultiScanGlmb out;
  out.last_scan = exact.scan;
  out.first_scan = exact.scan + 1;
  out.normalized = true;
  for (const auto& h : exact.hypotheses) {
    out.hypotheses.push_back(materialize(h.node, h.log_weight));
    out.first_scan = out.hypotheses.back().first_scan;
  }
  return out;
}

rfs::MultiScanGlmb approximate_prediction(const PredictedPosterior& predicted, Engine& engine) {
  const Model& model = engine.model();
  const int k = predicted.scan;
  const LabelSet births = model.birth.labels(k);
  rfs::MultiScanGlmb out;
  out.last_scan = k;
  out.first_scan = k;
  out.normalized = true;
  for (const auto& p : predicted.hypotheses) {
    rfs::GlmbHypothesis h = materialize(p.parent, p.log_weight);
    const LabelSet domain = set_union(p.parent->alive(), births);
    std::vector<ExtendedAssociationMap::Entry> entries;
    for (const Label& l : domain) {
      entries.emplace_back(l, contains(p.labels, l) ? 0 : -1);
    }
    h.history.emplace_back(std::move(entries));
    const auto pred = engine.prediction(*p.parent);
    for (const Label& l : p.labels) {
      if (!contains(p.parent->alive(), l)) {
        rfs::TrajectoryDensity td;
        td.start = k;
        td.marginals.push_back(model.birth.component(l).density);
        h.trajectories.emplace(l, std::move(td));
        continue;
      }
      const auto row = p.parent->posterior.block(l);
      const auto col = pred->predicted.block(l);
      auto it = h.trajectories.find(l);
      if (it == h.trajectories.end()) {
        rfs::TrajectoryDensity td;
        td.start = k;
        td.marginals.push_back(pred->predicted.marginal(l));
        h.trajectories.emplace(l, std::move(td));
        continue;
      }
      it->second.lag_cross.push_back(pred->cross.block(row.offset, col.offset, row.length, col.length));
      it->second.marginals.push_back(pred->predicted.marginal(l));
    }
    out.first_scan = h.first_scan;
    out.hypotheses.push_back(std::move(h));
  }
  return out;
}

}  // namespace msglmb::recursion
