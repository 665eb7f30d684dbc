#include "msglmb/gibbs.hpp"

#include <algorithm>
#include <cmath>

namespace msglmb::gibbs {

namespace {

/// Samples an index proportional to exp(log_w); -1 when every entry is -inf.
int sample_log(std::span<const double> log_w, Rng& rng) {
  const double top = *std::max_element(log_w.begin(), log_w.end());
  if (!std::isfinite(top)) {
    return -1;
  }
  double total = 0.0;
  std::vector<double> w(log_w.size());
  for (std::size_t i = 0; i < log_w.size(); ++i) {
    w[i] = std::exp(log_w[i] - top);
    total += w[i];
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double draw = unit(rng) * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] <= 0.0) {
      continue;
    }
    draw -= w[i];
    if (draw < 0.0) {
      return static_cast<int>(i);
    }
  }
  for (std::size_t i = w.size(); i-- > 0;) {
    if (w[i] > 0.0) {
      return static_cast<int>(i);
    }
  }
  return -1;
}

/// Whether label `i` may take measurement u > 0 given the other assignments.
bool index_free(const FactorTable& table, const ExtendedAssociationMap& gamma, std::size_t i, int u) {
  const auto& entries = gamma.entries();
  for (std::size_t k = 0; k < entries.size(); ++k) {
    if (k != i && entries[k].second == u && !table.may_share(i, k)) {
      return false;
    }
  }
  return true;
}

/// Keeps the domain of scan p + 1 equal to births plus the live labels of scan p.
void fix_downstream(History& state, std::size_t p, const Label& l, int old_value, int new_value) {
  if (p + 1 >= state.size() || (old_value >= 0) == (new_value >= 0)) {
    return;
  }
  if (new_value >= 0) {
    state[p + 1].set(l, -1);
  } else {
    state[p + 1].erase(l);
  }
}

double suffix_weight(const History& state, std::size_t from, AssociationContext& ctx) {
  double lw = 0.0;
  for (std::size_t q = from; q < state.size(); ++q) {
    const auto table = ctx.factors(std::span<const ExtendedAssociationMap>(state.data(), q));
    const double term = table->log_product(state[q]);
    if (!std::isfinite(term)) {
      return kNegInf;
    }
    lw += term;
  }
  return lw;
}

}  // namespace

std::optional<std::size_t> FactorTable::index(const Label& l) const {
  auto it = std::lower_bound(labels.begin(), labels.end(), l);
  if (it == labels.end() || *it != l) {
    return std::nullopt;
  }
  return static_cast<std::size_t>(it - labels.begin());
}

bool FactorTable::may_share(std::size_t i, std::size_t j) const {
  return !cluster.empty() && cluster[i] == cluster[j];
}

double FactorTable::log_product(const ExtendedAssociationMap& gamma) const {
  const auto& entries = gamma.entries();
  if (entries.size() != labels.size()) {
    return kNegInf;
  }
  double lw = 0.0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& [l, u] = entries[i];
    if (l != labels[i] || u > num_measurements) {
      return kNegInf;
    }
    if (u > 0) {
      for (std::size_t k = i + 1; k < entries.size(); ++k) {
        if (entries[k].second == u && !may_share(i, k)) {
          return kNegInf;
        }
      }
    }
    lw += at(i, u);
  }
  return lw;
}

double eta_factor(AssociationContext& ctx, std::span<const ExtendedAssociationMap> prefix,
                  std::size_t index, int u) {
  const auto table = ctx.factors(prefix);
  if (index >= table->size() || u < -1 || u > table->num_measurements) {
    throw InvalidInputError("factor index out of range");
  }
  return std::exp(table->at(index, u));
}

double joint_weight(std::span<const ExtendedAssociationMap> history, AssociationContext& ctx) {
  const auto scans = static_cast<std::size_t>(ctx.last_scan() - ctx.first_scan() + 1);
  if (history.size() != scans) {
    throw InvalidInputError("history length does not match the context window");
  }
  double lw = ctx.log_initial_weight();
  for (std::size_t q = 0; q < history.size(); ++q) {
    const auto table = ctx.factors(history.first(q));
    const double term = table->log_product(history[q]);
    if (!std::isfinite(term)) {
      return kNegInf;
    }
    lw += term;
  }
  return lw;
}

std::vector<ExtendedAssociationMap> factor_sampling(const FactorTable& table, int samples, Rng& rng) {
  if (samples < 1) {
    throw InvalidInputError("factor sampling needs at least one sample");
  }
  const int M = table.num_measurements;
  std::vector<ExtendedAssociationMap> out;
  out.reserve(static_cast<std::size_t>(samples));
  std::vector<double> lw(static_cast<std::size_t>(M) + 2);
  for (int r = 0; r < samples; ++r) {
    std::vector<ExtendedAssociationMap::Entry> entries;
    entries.reserve(table.size());
    for (const Label& l : table.labels) {
      entries.emplace_back(l, -1);
    }
    ExtendedAssociationMap gamma(std::move(entries));
    for (std::size_t i = 0; i < table.size(); ++i) {
      for (int u = -1; u <= M; ++u) {
        const bool allowed = u <= 0 || index_free(table, gamma, i, u);
        lw[static_cast<std::size_t>(u + 1)] = allowed ? table.at(i, u) : kNegInf;
      }
      const int pick = sample_log(lw, rng);
      gamma.set(table.labels[i], pick < 0 ? -1 : pick - 1);
    }
    out.push_back(std::move(gamma));
  }
  return out;
}

std::vector<History> ms_gibbs(const History& initial, int sweeps, AssociationContext& ctx, Rng& rng,
                              const GibbsOptions& options) {
  if (sweeps < 0) {
    throw InvalidInputError("negative sweep count");
  }
  if (!std::isfinite(joint_weight(initial, ctx))) {
    throw InvalidInputError("Gibbs chain initialized at a zero-weight history");
  }
  std::vector<History> out;
  out.reserve(static_cast<std::size_t>(sweeps) + 1);
  out.push_back(initial);
  History state = initial;
  std::vector<double> lw;
  for (int t = 0; t < sweeps; ++t) {
    for (std::size_t p = 0; p < state.size(); ++p) {
      const auto table = ctx.factors(std::span<const ExtendedAssociationMap>(state.data(), p));
      const int M = table->num_measurements;
      lw.assign(static_cast<std::size_t>(M) + 2, kNegInf);
      for (std::size_t i = 0; i < table->size(); ++i) {
        const Label l = table->labels[i];
        const int old_value = state[p].at(l);
        const bool alive_later = p + 1 < state.size() && state[p + 1].find(l).value_or(-1) >= 0;
        if (options.conditioning == Conditioning::Prefix) {
          for (int u = -1; u <= M; ++u) {
            double v = table->at(i, u);
            if (u < 0 && alive_later) {
              v = kNegInf;
            } else if (u > 0 && !index_free(*table, state[p], i, u)) {
              v = kNegInf;
            }
            lw[static_cast<std::size_t>(u + 1)] = v;
          }
        } else {
          lw[0] = kNegInf;
          for (int u = alive_later ? 0 : -1; u <= M; ++u) {
            History candidate = state;
            candidate[p].set(l, u);
            fix_downstream(candidate, p, l, old_value, u);
            lw[static_cast<std::size_t>(u + 1)] = suffix_weight(candidate, p, ctx);
          }
        }
        const int pick = sample_log(lw, rng);
        if (pick < 0) {
          continue;
        }
        const int u = pick - 1;
        state[p].set(l, u);
        fix_downstream(state, p, l, old_value, u);
      }
    }
    out.push_back(state);
  }
  return out;
}

}  // namespace msglmb::gibbs
