#include "msglmb/glmb.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

namespace msglmb::rfs {

namespace {

Eigen::MatrixXd solve_right(const Eigen::MatrixXd& lhs, const Eigen::MatrixXd& p) {
  // lhs * p^{-1}, falling back to a least-squares solve for singular p.
  Eigen::LDLT<Eigen::MatrixXd> ldlt(p);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
      ldlt.vectorD().minCoeff() > 1e-14 * std::max(1.0, ldlt.vectorD().maxCoeff())) {
    return ldlt.solve(lhs.transpose()).transpose();
  }
  return p.completeOrthogonalDecomposition().solve(lhs.transpose()).transpose();
}

bool matrices_close(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double tol) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    return false;
  }
  if (a.size() == 0) {
    return true;
  }
  return (a - b).cwiseAbs().maxCoeff() <= tol * std::max(1.0, a.cwiseAbs().maxCoeff());
}

bool densities_close(const TrajectoryDensity& a, const TrajectoryDensity& b, double tol) {
  if (a.start != b.start || a.marginals.size() != b.marginals.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.marginals.size(); ++i) {
    if (!matrices_close(a.marginals[i].mean, b.marginals[i].mean, tol) ||
        !matrices_close(a.marginals[i].covariance, b.marginals[i].covariance, tol)) {
      return false;
    }
  }
  for (std::size_t i = 0; i < a.lag_cross.size(); ++i) {
    if (!matrices_close(a.lag_cross[i], b.lag_cross[i], tol)) {
      return false;
    }
  }
  return true;
}

std::vector<std::size_t> order_by_weight(const std::vector<GlmbHypothesis>& hs) {
  std::vector<std::string> keys;
  keys.reserve(hs.size());
  for (const auto& h : hs) {
    keys.push_back(h.history_key());
  }
  std::vector<std::size_t> order(hs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (hs[a].log_weight != hs[b].log_weight) {
      return hs[a].log_weight > hs[b].log_weight;
    }
    return keys[a] < keys[b];
  });
  return order;
}

double kernel_integral(const densities::Gaussian& joint, const GaussianKernel& kernel, int scans) {
  const int d = static_cast<int>(kernel.center.size());
  if (joint.dim() != d * scans) {
    throw InvalidInputError("kernel dimension does not match trajectory attributes");
  }
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(joint.dim(), joint.dim());
  Eigen::VectorXd c(joint.dim());
  for (int t = 0; t < scans; ++t) {
    a.block(t * d, t * d, d, d) = kernel.precision;
    c.segment(t * d, d) = kernel.center;
  }
  const Eigen::MatrixXd i_pa = Eigen::MatrixXd::Identity(joint.dim(), joint.dim()) + joint.covariance * a;
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(i_pa);
  const Eigen::VectorXd r = joint.mean - c;
  const double quad = r.dot(a * lu.solve(r));
  return std::exp(-0.5 * quad) / std::sqrt(lu.determinant());
}

}  // namespace

const densities::Gaussian& TrajectoryDensity::at(int scan) const {
  if (!covers(scan)) {
    throw InvalidInputError("scan " + std::to_string(scan) + " outside trajectory");
  }
  return marginals[static_cast<std::size_t>(scan - start)];
}

densities::Gaussian TrajectoryDensity::joint() const {
  const int n = length();
  if (n == 0) {
    return {};
  }
  const int d = marginals.front().dim();
  Eigen::VectorXd mean(n * d);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n * d, n * d);
  for (int t = 0; t < n; ++t) {
    mean.segment(t * d, d) = marginals[static_cast<std::size_t>(t)].mean;
    cov.block(t * d, t * d, d, d) = marginals[static_cast<std::size_t>(t)].covariance;
  }
  // Markov chain: Cov(x_i, x_j) = C_{i,i+1} P_{i+1}^{-1} Cov(x_{i+1}, x_j).
  for (int i = n - 2; i >= 0; --i) {
    const Eigen::MatrixXd gain =
        solve_right(lag_cross[static_cast<std::size_t>(i)],
                    marginals[static_cast<std::size_t>(i + 1)].covariance);
    for (int j = i + 1; j < n; ++j) {
      const Eigen::MatrixXd block =
          j == i + 1 ? lag_cross[static_cast<std::size_t>(i)]
                     : Eigen::MatrixXd(gain * cov.block((i + 1) * d, j * d, d, d));
      cov.block(i * d, j * d, d, d) = block;
      cov.block(j * d, i * d, d, d) = block.transpose();
    }
  }
  return densities::Gaussian(std::move(mean), std::move(cov));
}

TrajectoryDensity TrajectoryDensity::restrict(int first, int last) const {
  first = std::max(first, start);
  last = std::min(last, end());
  if (first > last) {
    throw InvalidInputError("restriction does not overlap trajectory");
  }
  TrajectoryDensity out;
  out.start = first;
  for (int t = first; t <= last; ++t) {
    out.marginals.push_back(at(t));
    if (t < last) {
      out.lag_cross.push_back(lag_cross[static_cast<std::size_t>(t - start)]);
    }
  }
  return out;
}

void TrajectoryDensity::validate() const {
  if (marginals.empty()) {
    throw InvalidInputError("trajectory density has no scans");
  }
  if (lag_cross.size() + 1 != marginals.size()) {
    throw InvalidInputError("trajectory density lag covariances do not match its length");
  }
  const int d = marginals.front().dim();
  for (const auto& g : marginals) {
    if (g.dim() != d) {
      throw InvalidInputError("trajectory density dimension changes over time");
    }
  }
  for (const auto& c : lag_cross) {
    if (c.rows() != d || c.cols() != d) {
      throw InvalidInputError("lag covariance has wrong shape");
    }
  }
}

bool TrajectoryDensity::operator==(const TrajectoryDensity& other) const {
  return densities_close(*this, other, 0.0);
}

LabelSet LabelSetSequence::all_labels() const {
  std::set<Label> all;
  for (const auto& s : sets) {
    all.insert(s.begin(), s.end());
  }
  return {all.begin(), all.end()};
}

void LabelSetSequence::validate() const {
  std::map<Label, int> last_seen;
  std::set<Label> ended;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const int scan = first_scan + static_cast<int>(i);
    if (!is_label_set(sets[i])) {
      throw InvalidInputError("label set at scan " + std::to_string(scan) + " is not distinct");
    }
    for (const Label& l : sets[i]) {
      if (l.birth_time > scan) {
        throw InvalidInputError("label " + to_string(l) + " present before its birth");
      }
      auto it = last_seen.find(l);
      if (it != last_seen.end() && it->second != scan - 1) {
        throw InvalidInputError("label " + to_string(l) + " is fragmented");
      }
      last_seen[l] = scan;
    }
  }
}

LabelSetSequence GlmbHypothesis::label_sets() const {
  LabelSetSequence out;
  out.first_scan = first_scan;
  out.sets.reserve(history.size());
  for (const auto& g : history) {
    out.sets.push_back(g.live_labels());
  }
  return out;
}

std::string GlmbHypothesis::history_key() const {
  std::string key = std::to_string(first_scan);
  for (const auto& g : history) {
    key += '|';
    key += g.to_text();
  }
  return key;
}

void GlmbHypothesis::validate() const {
  const LabelSetSequence seq = label_sets();
  seq.validate();
  const LabelSet all = seq.all_labels();
  if (all.size() != trajectories.size()) {
    throw InvalidInputError("trajectory densities do not match the hypothesis labels");
  }
  for (const Label& l : all) {
    auto it = trajectories.find(l);
    if (it == trajectories.end()) {
      throw InvalidInputError("no density for label " + to_string(l));
    }
    it->second.validate();
    int first = -1;
    int last = -1;
    for (std::size_t i = 0; i < seq.sets.size(); ++i) {
      if (contains(seq.sets[i], l)) {
        const int scan = first_scan + static_cast<int>(i);
        first = first < 0 ? scan : first;
        last = scan;
      }
    }
    if (!it->second.covers(first) || !it->second.covers(last)) {
      throw InvalidInputError("density of label " + to_string(l) + " does not cover its lifetime");
    }
  }
}

double multiscan_exponential(const std::function<double(const TrajectorySegment&)>& h,
                             std::span<const TrajectorySegment> trajectories) {
  std::set<Label> seen;
  double product = 1.0;
  for (const auto& tr : trajectories) {
    if (!seen.insert(tr.label).second) {
      throw InvalidInputError("duplicate label " + to_string(tr.label) + " in exponential");
    }
    product *= h(tr);
  }
  return product;
}

double joint_label_marginal(const MultiScanGlmb& f, const LabelSetSequence& labels,
                            const std::optional<GaussianKernel>& kernel) {
  if (labels.sets.empty() || labels.first_scan < f.first_scan || labels.last_scan() > f.last_scan) {
    throw InvalidInputError("label sequence lies outside the density window");
  }
  double total = 0.0;
  for (const auto& h : f.hypotheses) {
    const LabelSetSequence seq = h.label_sets();
    const auto offset = static_cast<std::size_t>(labels.first_scan - seq.first_scan);
    if (labels.first_scan < seq.first_scan || offset + labels.sets.size() > seq.sets.size()) {
      throw InvalidInputError("hypothesis window does not cover the label sequence");
    }
    bool match = true;
    for (std::size_t i = 0; i < labels.sets.size() && match; ++i) {
      match = seq.sets[offset + i] == labels.sets[i];
    }
    if (!match) {
      continue;
    }
    double integral = 1.0;
    if (kernel) {
      for (const Label& l : labels.all_labels()) {
        const TrajectoryDensity& td = h.trajectories.at(l);
        const TrajectoryDensity part = td.restrict(labels.first_scan, labels.last_scan());
        integral *= kernel_integral(part.joint(), *kernel, part.length());
      }
    }
    total += std::exp(h.log_weight) * integral;
  }
  return total;
}

double joint_existence_weight(const MultiScanGlmb& pi, const LabelSetSequence& labels) {
  labels.validate();
  if (pi.hypotheses.empty()) {
    const bool all_empty =
        std::all_of(labels.sets.begin(), labels.sets.end(), [](const LabelSet& s) { return s.empty(); });
    return all_empty ? 1.0 : 0.0;
  }
  return joint_label_marginal(pi, labels);
}

CardinalityDistribution trajectory_cardinality_distribution(const MultiScanGlmb& pi) {
  if (!pi.normalized) {
    throw StateError("cardinality distribution requires a normalized density");
  }
  if (pi.hypotheses.empty()) {
    return {1.0};
  }
  CardinalityDistribution rho;
  for (const auto& h : pi.hypotheses) {
    const std::size_t n = h.label_sets().all_labels().size();
    if (rho.size() <= n) {
      rho.resize(n + 1, 0.0);
    }
    rho[n] += std::exp(h.log_weight);
  }
  return rho;
}

MultiScanGlmb normalize(const MultiScanGlmb& pi) {
  std::vector<double> lw;
  lw.reserve(pi.hypotheses.size());
  for (const auto& h : pi.hypotheses) {
    lw.push_back(h.log_weight);
  }
  const double total = log_sum_exp(lw);
  if (!std::isfinite(total)) {
    throw DegenerateDensityError("every hypothesis weight is zero");
  }
  MultiScanGlmb out = pi;
  for (auto& h : out.hypotheses) {
    h.log_weight -= total;
  }
  out.normalized = true;
  return out;
}

TruncationResult truncate(const MultiScanGlmb& pi, std::size_t max_hypotheses, double weight_floor) {
  if (max_hypotheses == 0) {
    throw InvalidInputError("truncation must keep at least one hypothesis");
  }
  if (!pi.normalized) {
    throw StateError("truncation requires a normalized density");
  }
  TruncationResult result;
  result.glmb.first_scan = pi.first_scan;
  result.glmb.last_scan = pi.last_scan;
  if (pi.hypotheses.empty()) {
    result.glmb.normalized = true;
    return result;
  }
  const std::vector<std::size_t> order = order_by_weight(pi.hypotheses);
  double kept = 0.0;
  for (std::size_t idx : order) {
    if (result.glmb.hypotheses.size() >= max_hypotheses) {
      break;
    }
    const double w = std::exp(pi.hypotheses[idx].log_weight);
    if (w < weight_floor && !result.glmb.hypotheses.empty()) {
      break;
    }
    result.glmb.hypotheses.push_back(pi.hypotheses[idx]);
    kept += w;
  }
  result.discarded_mass = std::max(0.0, 1.0 - kept);
  result.glmb = normalize(result.glmb);
  return result;
}

std::vector<GlmbHypothesis> merge_unique(std::vector<GlmbHypothesis> hs) {
  std::unordered_map<std::string, std::size_t> seen;
  std::vector<GlmbHypothesis> out;
  out.reserve(hs.size());
  for (auto& h : hs) {
    std::string key = h.history_key();
    auto it = seen.find(key);
    if (it == seen.end()) {
      seen.emplace(std::move(key), out.size());
      out.push_back(std::move(h));
      continue;
    }
    const GlmbHypothesis& kept = out[it->second];
    bool same = kept.trajectories.size() == h.trajectories.size();
    auto b = h.trajectories.cbegin();
    for (auto a = kept.trajectories.cbegin(); same && a != kept.trajectories.cend(); ++a, ++b) {
      same = a->first == b->first && densities_close(a->second, b->second, 1e-9);
    }
    if (!same) {
      throw ConsistencyError("duplicate history " + key + " carries different densities");
    }
  }
  return out;
}

std::string to_text(const MultiScanGlmb& pi) {
  std::ostringstream out;
  out << "glmb " << pi.first_scan << ' ' << pi.last_scan << ' ' << (pi.normalized ? 1 : 0) << ' '
      << pi.hypotheses.size() << '\n';
  for (const auto& h : pi.hypotheses) {
    out << "hypothesis " << format_double(h.log_weight) << ' ' << h.first_scan << ' '
        << h.history.size() << ' ' << h.trajectories.size() << '\n';
    for (const auto& g : h.history) {
      out << "gamma " << (g.empty() ? "-" : g.to_text()) << '\n';
    }
    for (const auto& [label, td] : h.trajectories) {
      out << "trajectory " << to_string(label) << ' ' << td.start << ' ' << td.length() << '\n';
      for (const auto& m : td.marginals) {
        out << "marginal " << densities::to_fixture(m) << '\n';
      }
      for (const auto& c : td.lag_cross) {
        out << "lag " << c.rows() << ' ' << c.cols();
        for (int i = 0; i < c.rows(); ++i) {
          for (int j = 0; j < c.cols(); ++j) {
            out << ' ' << format_double(c(i, j));
          }
        }
        out << '\n';
      }
    }
  }
  return out.str();
}

namespace {

class LineReader {
 public:
  explicit LineReader(const std::string& text) : in_(text) {}

  std::istringstream next(const std::string& tag) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (line.empty()) {
        continue;
      }
      std::istringstream ss(line);
      std::string head;
      ss >> head;
      if (head != tag) {
        fail("expected '" + tag + "' but found '" + head + "'");
      }
      return ss;
    }
    fail("unexpected end of input, expected '" + tag + "'");
    return {};
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw InvalidInputError("line " + std::to_string(line_no_) + ": " + what);
  }

  template <typename T>
  T read(std::istringstream& ss) const {
    std::string tok;
    if (!(ss >> tok)) {
      fail("missing field");
    }
    if constexpr (std::is_same_v<T, double>) {
      return parse_double(tok);
    } else if constexpr (std::is_same_v<T, std::string>) {
      return tok;
    } else {
      try {
        std::size_t used = 0;
        const long long v = std::stoll(tok, &used);
        if (used != tok.size()) {
          fail("malformed integer '" + tok + "'");
        }
        return static_cast<T>(v);
      } catch (const std::logic_error&) {
        fail("malformed integer '" + tok + "'");
      }
    }
  }

 private:
  std::istringstream in_;
  int line_no_ = 0;
};

Label parse_label(const std::string& text) {
  const auto dot = text.find('.');
  if (dot == std::string::npos) {
    throw InvalidInputError("malformed label '" + text + "'");
  }
  try {
    return Label{std::stoi(text.substr(0, dot)), std::stoi(text.substr(dot + 1))};
  } catch (const std::logic_error&) {
    throw InvalidInputError("malformed label '" + text + "'");
  }
}

}  // namespace

MultiScanGlmb glmb_from_text(const std::string& text) {
  LineReader reader(text);
  MultiScanGlmb pi;
  auto header = reader.next("glmb");
  pi.first_scan = reader.read<int>(header);
  pi.last_scan = reader.read<int>(header);
  pi.normalized = reader.read<int>(header) != 0;
  const auto count = reader.read<std::size_t>(header);
  for (std::size_t n = 0; n < count; ++n) {
    GlmbHypothesis h;
    auto hl = reader.next("hypothesis");
    h.log_weight = reader.read<double>(hl);
    h.first_scan = reader.read<int>(hl);
    const auto scans = reader.read<std::size_t>(hl);
    const auto trajectories = reader.read<std::size_t>(hl);
    for (std::size_t s = 0; s < scans; ++s) {
      auto gl = reader.next("gamma");
      const auto body = reader.read<std::string>(gl);
      h.history.push_back(body == "-" ? ExtendedAssociationMap{}
                                      : ExtendedAssociationMap::from_text(body));
    }
    for (std::size_t t = 0; t < trajectories; ++t) {
      auto tl = reader.next("trajectory");
      const Label label = parse_label(reader.read<std::string>(tl));
      TrajectoryDensity td;
      td.start = reader.read<int>(tl);
      const auto length = reader.read<std::size_t>(tl);
      for (std::size_t i = 0; i < length; ++i) {
        auto ml = reader.next("marginal");
        std::string rest;
        std::getline(ml, rest);
        td.marginals.push_back(densities::gaussian_from_fixture(rest));
      }
      for (std::size_t i = 0; i + 1 < length; ++i) {
        auto ll = reader.next("lag");
        const int rows = reader.read<int>(ll);
        const int cols = reader.read<int>(ll);
        Eigen::MatrixXd c(rows, cols);
        for (int r = 0; r < rows; ++r) {
          for (int col = 0; col < cols; ++col) {
            c(r, col) = reader.read<double>(ll);
          }
        }
        td.lag_cross.push_back(std::move(c));
      }
      h.trajectories.emplace(label, std::move(td));
    }
    pi.hypotheses.push_back(std::move(h));
  }
  return pi;
}

}  // namespace msglmb::rfs
