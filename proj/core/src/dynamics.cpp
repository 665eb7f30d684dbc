#include "msglmb/dynamics.hpp"

#include <algorithm>
#include <cmath>

namespace msglmb::dynamics {

namespace {

/// Pairs (i, j), i < j, within interaction range of each other.
std::vector<std::pair<int, int>> active_pairs(const Eigen::VectorXd& stacked,
                                              const SocialForceParams& params) {
  const int n = static_cast<int>(stacked.size()) / kStateDim;
  std::vector<std::pair<int, int>> pairs;
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      if (params.in_range(position(stacked.segment(a * kStateDim, kStateDim)),
                          position(stacked.segment(b * kStateDim, kStateDim)))) {
        pairs.emplace_back(a, b);
      }
    }
  }
  return pairs;
}

Eigen::VectorXd derivative(const Eigen::VectorXd& s, const Eigen::VectorXd& frozen,
                           const std::vector<std::pair<int, int>>& pairs,
                           const SocialForceParams& params) {
  const int n = static_cast<int>(s.size()) / kStateDim;
  Eigen::VectorXd ds = Eigen::VectorXd::Zero(s.size());
  for (int i = 0; i < n; ++i) {
    ds(i * kStateDim) = s(i * kStateDim + 1);
    ds(i * kStateDim + 2) = s(i * kStateDim + 3);
  }
  for (const auto& [a, b] : pairs) {
    const Eigen::Vector2d pa = position(s.segment(a * kStateDim, kStateDim));
    const Eigen::Vector2d pb = position(s.segment(b * kStateDim, kStateDim));
    const Eigen::Vector2d fa =
        repulsive_force(pa - pb, velocity(frozen.segment(b * kStateDim, kStateDim)), params);
    const Eigen::Vector2d fb =
        repulsive_force(pb - pa, velocity(frozen.segment(a * kStateDim, kStateDim)), params);
    ds(a * kStateDim + 1) += fa.x();
    ds(a * kStateDim + 3) += fa.y();
    ds(b * kStateDim + 1) += fb.x();
    ds(b * kStateDim + 3) += fb.y();
  }
  return ds;
}

Eigen::MatrixXd process_noise(int objects, const SocialForceParams& params) {
  const double q = params.process_noise_sigma * params.process_noise_sigma;
  return q * Eigen::MatrixXd::Identity(objects * kStateDim, objects * kStateDim);
}

double position_sigma(const densities::Gaussian& g) {
  return std::sqrt(std::max({g.covariance(0, 0), g.covariance(2, 2), 0.0}));
}

/// Whether two labels may come within interaction range at the start of the scan.
bool may_interact(const densities::Gaussian& a, const densities::Gaussian& b,
                  const SocialForceParams& params) {
  const double slack = 4.0 * (position_sigma(a) + position_sigma(b));
  return (position(a.mean) - position(b.mean)).norm() <= params.interaction_radius + slack;
}

}  // namespace

bool BirthModel::active(int scan) const {
  return active_scans.empty() ||
         std::find(active_scans.begin(), active_scans.end(), scan) != active_scans.end();
}

LabelSet BirthModel::labels(int scan) const {
  LabelSet out;
  if (!active(scan)) {
    return out;
  }
  for (std::size_t i = 0; i < components.size(); ++i) {
    out.push_back(Label{scan, static_cast<int>(i) + 1});
  }
  return out;
}

const BirthComponent& BirthModel::component(const Label& l) const {
  if (l.birth_index < 1 || l.birth_index > static_cast<int>(components.size()) ||
      !active(l.birth_time)) {
    throw InvalidInputError("label " + to_string(l) + " is not a birth label");
  }
  return components[static_cast<std::size_t>(l.birth_index - 1)];
}

void BirthModel::validate() const {
  for (const auto& c : components) {
    if (!(c.probability >= 0.0 && c.probability <= 1.0)) {
      throw InvalidInputError("birth probability outside [0, 1]");
    }
    if (c.density.dim() != kStateDim) {
      throw InvalidInputError("birth density must be four dimensional");
    }
  }
}

void SurvivalModel::validate() const {
  if (!(probability >= 0.0 && probability <= 1.0)) {
    throw InvalidInputError("survival probability outside [0, 1]");
  }
}

void SocialForceParams::validate() const {
  if (!(V >= 0.0) || !(alpha > 0.0) || !(dt > 0.0) || !(interaction_radius >= 0.0) ||
      !(process_noise_sigma >= 0.0) || substeps < 1) {
    throw InvalidInputError("invalid social force parameters");
  }
}

Eigen::Vector2d position(const Eigen::VectorXd& x) { return {x(0), x(2)}; }

Eigen::Vector2d velocity(const Eigen::VectorXd& x) { return {x(1), x(3)}; }

Eigen::Vector2d repulsive_force(const Eigen::Vector2d& p_rel, const Eigen::Vector2d& v_other,
                                const SocialForceParams& params) {
  const Eigen::Vector2d r = p_rel - params.dt * v_other;
  const double a2 = params.alpha * params.alpha;
  return (params.V / a2) * r * std::exp(-r.squaredNorm() / (2.0 * a2));
}

Eigen::Vector2d total_force(const Label& subject, std::span<const LabeledState> states,
                            const SocialForceParams& params) {
  auto self = std::find_if(states.begin(), states.end(),
                           [&](const LabeledState& s) { return s.label == subject; });
  if (self == states.end()) {
    throw InvalidInputError("subject " + to_string(subject) + " not among the states");
  }
  const Eigen::Vector2d p = position(self->attribute);
  Eigen::Vector2d force = Eigen::Vector2d::Zero();
  for (const auto& other : states) {
    if (other.label == subject) {
      continue;
    }
    const Eigen::Vector2d q = position(other.attribute);
    if (params.in_range(p, q)) {
      force += repulsive_force(p - q, velocity(other.attribute), params);
    }
  }
  return force;
}

Eigen::VectorXd social_force_step(const Eigen::VectorXd& stacked, const SocialForceParams& params) {
  if (stacked.size() % kStateDim != 0) {
    throw InvalidInputError("stacked state is not a multiple of the state dimension");
  }
  const std::vector<std::pair<int, int>> pairs =
      params.interacting() ? active_pairs(stacked, params) : std::vector<std::pair<int, int>>{};
  const double h = params.dt / params.substeps;
  Eigen::VectorXd s = stacked;
  for (int step = 0; step < params.substeps; ++step) {
    const Eigen::VectorXd k1 = derivative(s, stacked, pairs, params);
    const Eigen::VectorXd k2 = derivative(s + 0.5 * h * k1, stacked, pairs, params);
    const Eigen::VectorXd k3 = derivative(s + 0.5 * h * k2, stacked, pairs, params);
    const Eigen::VectorXd k4 = derivative(s + h * k3, stacked, pairs, params);
    s += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  if (!s.allFinite()) {
    throw NumericalError("social force integration produced non-finite state");
  }
  return s;
}

std::vector<LabeledState> social_force_predict(std::span<const LabeledState> states,
                                               const SocialForceParams& params) {
  Eigen::VectorXd stacked(static_cast<Eigen::Index>(states.size()) * kStateDim);
  for (std::size_t i = 0; i < states.size(); ++i) {
    for (std::size_t j = i + 1; j < states.size(); ++j) {
      if (states[i].label == states[j].label) {
        throw InvalidInputError("duplicate label " + to_string(states[i].label));
      }
    }
    if (states[i].attribute.size() != kStateDim) {
      throw InvalidInputError("state of label " + to_string(states[i].label) +
                              " is not four dimensional");
    }
    stacked.segment(static_cast<Eigen::Index>(i) * kStateDim, kStateDim) = states[i].attribute;
  }
  const Eigen::VectorXd next = social_force_step(stacked, params);
  std::vector<LabeledState> out;
  out.reserve(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    out.push_back(
        LabeledState{next.segment(static_cast<Eigen::Index>(i) * kStateDim, kStateDim),
                     states[i].label});
  }
  return out;
}

JointPrediction predict_joint(const densities::JointTrajectoryDensity& joint,
                              const LabelSet& surviving, const SocialForceParams& params,
                              const densities::UtParams& ut) {
  for (const Label& l : surviving) {
    if (!joint.has(l)) {
      throw InvalidInputError("surviving label " + to_string(l) + " has no prior density");
    }
  }
  const densities::JointTrajectoryDensity prior = joint.slice(surviving);
  const int d = prior.dim();

  // Clusters: correlated groups, merged while any two members may interact.
  std::vector<LabelSet> groups = prior.correlated_groups();
  if (params.interacting()) {
    bool changed = true;
    while (changed) {
      changed = false;
      for (std::size_t a = 0; a < groups.size() && !changed; ++a) {
        for (std::size_t b = a + 1; b < groups.size() && !changed; ++b) {
          for (const Label& la : groups[a]) {
            const bool hit = std::any_of(groups[b].begin(), groups[b].end(), [&](const Label& lb) {
              return may_interact(prior.marginal(la), prior.marginal(lb), params);
            });
            if (hit) {
              groups[a] = set_union(groups[a], groups[b]);
              groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(b));
              changed = true;
              break;
            }
          }
        }
      }
    }
  }

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(joint.dim(), d);
  const std::vector<int> to_source = joint.indices(surviving);
  for (const LabelSet& g : groups) {
    const std::vector<int> idx = prior.indices(g);
    const densities::Gaussian local(prior.joint().mean(idx), prior.joint().covariance(idx, idx));
    const densities::Transformed t = densities::unscented_transform(
        local, [&params](const Eigen::VectorXd& x) { return social_force_step(x, params); }, ut);
    mean(idx) = t.output.mean;
    Eigen::MatrixXd p = t.output.covariance + process_noise(static_cast<int>(g.size()), params);
    cov(idx, idx) = densities::symmetrized(p);
    for (std::size_t a = 0; a < idx.size(); ++a) {
      for (std::size_t b = 0; b < idx.size(); ++b) {
        cross(to_source[static_cast<std::size_t>(idx[a])], idx[b]) =
            t.cross_covariance(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
      }
    }
  }
  std::vector<std::pair<Label, int>> layout;
  for (const Label& l : surviving) {
    layout.emplace_back(l, kStateDim);
  }
  return JointPrediction{
      densities::JointTrajectoryDensity(layout, densities::Gaussian(std::move(mean), std::move(cov))),
      std::move(cross)};
}

densities::JointTrajectoryDensity joint_transition_predict(
    const densities::JointTrajectoryDensity& joint, const LabelSet& surviving,
    const SocialForceParams& params, const densities::UtParams& ut) {
  return predict_joint(joint, surviving, params, ut).predicted;
}

double log_transition_weight(const LabelSet& prev, const LabelSet& next, int scan,
                             const BirthModel& birth, const SurvivalModel& survival) {
  const LabelSet births = birth.labels(scan);
  for (const Label& l : next) {
    if (!contains(prev, l) && !contains(births, l)) {
      return kNegInf;
    }
  }
  double lw = 0.0;
  for (const Label& l : prev) {
    lw += contains(next, l) ? std::log(survival.probability) : std::log1p(-survival.probability);
  }
  for (const Label& l : births) {
    const double pb = birth.component(l).probability;
    lw += contains(next, l) ? std::log(pb) : std::log1p(-pb);
  }
  return lw;
}

double transition_weight(const LabelSet& prev, const LabelSet& next, int scan,
                         const BirthModel& birth, const SurvivalModel& survival) {
  return std::exp(log_transition_weight(prev, next, scan, birth, survival));
}

}  // namespace msglmb::dynamics
