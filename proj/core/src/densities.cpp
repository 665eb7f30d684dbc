#include "msglmb/densities.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace msglmb::densities {

namespace {

constexpr double kJitter = 1e-9;

Eigen::MatrixXd factor_or_throw(const Eigen::MatrixXd& m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() == Eigen::Success) {
    return llt.matrixL();
  }
  Eigen::MatrixXd repaired = symmetrized(m);
  repair_psd(repaired);
  repaired.diagonal().array() += kJitter;
  llt.compute(repaired);
  if (llt.info() != Eigen::Success) {
    throw NumericalError(std::string(what) + ": factorization failed after jitter retry");
  }
  return llt.matrixL();
}

void finish_covariance(Eigen::MatrixXd& p) {
  p = symmetrized(p);
  Eigen::LLT<Eigen::MatrixXd> llt(p);
  if (llt.info() != Eigen::Success) {
    repair_psd(p);
  }
}

}  // namespace

Gaussian::Gaussian(Eigen::VectorXd m, Eigen::MatrixXd p) : mean(std::move(m)), covariance(std::move(p)) {
  if (covariance.rows() != mean.size() || covariance.cols() != mean.size()) {
    throw InvalidInputError("Gaussian mean/covariance dimension mismatch");
  }
}

double Gaussian::log_pdf(const Eigen::VectorXd& x) const {
  return log_normal_density(x - mean, covariance);
}

void UtParams::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw InvalidInputError("unscented alpha must lie in (0, 1]");
  }
}

Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

bool repair_psd(Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrized(m));
  if (es.info() != Eigen::Success) {
    throw NumericalError("eigendecomposition failed during PSD repair");
  }
  Eigen::VectorXd ev = es.eigenvalues();
  if (ev.minCoeff() >= 0.0) {
    m = symmetrized(m);
    return false;
  }
  ev = ev.cwiseMax(0.0);
  m = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  m = symmetrized(m);
  return true;
}

SigmaPoints sigma_points(const Gaussian& g, const UtParams& params) {
  params.validate();
  const int d = g.dim();
  const double kappa = params.kappa_for(d);
  const double lambda = params.alpha * params.alpha * (d + kappa) - d;
  const double c = d + lambda;
  if (!(c > 0.0)) {
    throw InvalidInputError("unscented scaling d + lambda must be positive");
  }

  SigmaPoints sp;
  sp.points.resize(d, 2 * d + 1);
  sp.mean_weights.resize(2 * d + 1);
  sp.cov_weights.resize(2 * d + 1);
  sp.points.col(0) = g.mean;
  sp.mean_weights(0) = lambda / c;
  sp.cov_weights(0) = lambda / c + (1.0 - params.alpha * params.alpha + params.beta);
  if (d == 0) {
    return sp;
  }
  const Eigen::MatrixXd root = factor_or_throw(c * g.covariance, "sigma points");
  for (int i = 0; i < d; ++i) {
    sp.points.col(1 + i) = g.mean + root.col(i);
    sp.points.col(1 + d + i) = g.mean - root.col(i);
  }
  sp.mean_weights.tail(2 * d).setConstant(0.5 / c);
  sp.cov_weights.tail(2 * d).setConstant(0.5 / c);
  return sp;
}

Transformed unscented_transform(const Gaussian& g, const VectorMap& f, const UtParams& params,
                                std::span<const int> angular) {
  const SigmaPoints sp = sigma_points(g, params);
  const int n = static_cast<int>(sp.points.cols());

  Eigen::VectorXd y0 = f(sp.points.col(0));
  const int m = static_cast<int>(y0.size());
  Eigen::MatrixXd ys(m, n);
  ys.col(0) = y0;
  for (int i = 1; i < n; ++i) {
    Eigen::VectorXd yi = f(sp.points.col(i));
    if (yi.size() != m) {
      throw InvalidInputError("unscented map returned inconsistent dimensions");
    }
    for (int a : angular) {
      yi(a) = y0(a) + wrap_to_pi(yi(a) - y0(a));
    }
    ys.col(i) = yi;
  }
  if (!ys.allFinite()) {
    throw NumericalError("unscented map produced non-finite values");
  }

  Eigen::VectorXd mean = ys * sp.mean_weights;
  Eigen::MatrixXd dy = ys.colwise() - mean;
  Eigen::MatrixXd dx = sp.points.colwise() - g.mean;
  Eigen::MatrixXd cov = dy * sp.cov_weights.asDiagonal() * dy.transpose();
  Eigen::MatrixXd cross = dx * sp.cov_weights.asDiagonal() * dy.transpose();
  finish_covariance(cov);
  return Transformed{Gaussian(std::move(mean), std::move(cov)), std::move(cross)};
}

Gaussian unscented_propagate(const Gaussian& joint, const VectorMap& f, const UtParams& params,
                             const Eigen::MatrixXd& additive_noise) {
  Transformed t = unscented_transform(joint, f, params);
  if (additive_noise.size() > 0) {
    if (additive_noise.rows() != t.output.dim() || additive_noise.cols() != t.output.dim()) {
      throw InvalidInputError("process noise dimension mismatch");
    }
    t.output.covariance += additive_noise;
    finish_covariance(t.output.covariance);
  }
  return std::move(t.output);
}

double log_normal_density(const Eigen::VectorXd& r, const Eigen::MatrixXd& S) {
  const int d = static_cast<int>(r.size());
  if (d == 0) {
    return 0.0;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("covariance not positive definite in density evaluation");
  }
  const Eigen::VectorXd w = llt.matrixL().solve(r);
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (w.squaredNorm() + log_det + d * std::log(2.0 * std::numbers::pi));
}

UpdateResult conditional_update(const Gaussian& prior, const VectorMap& h, const Eigen::VectorXd& z,
                                const Eigen::MatrixXd& R, const UtParams& params,
                                std::span<const int> angular) {
  Transformed t = unscented_transform(prior, h, params, angular);
  if (z.size() != t.output.dim() || R.rows() != z.size() || R.cols() != z.size()) {
    throw InvalidInputError("measurement dimension mismatch");
  }
  Eigen::MatrixXd S = symmetrized(t.output.covariance + R);
  Eigen::VectorXd r = z - t.output.mean;
  for (int a : angular) {
    r(a) = wrap_to_pi(r(a));
  }
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("singular innovation covariance");
  }
  const Eigen::MatrixXd K = llt.solve(t.cross_covariance.transpose()).transpose();
  Eigen::VectorXd mean = prior.mean + K * r;
  Eigen::MatrixXd cov = prior.covariance - K * S * K.transpose();
  finish_covariance(cov);

  UpdateResult out;
  const Eigen::VectorXd w = llt.matrixL().solve(r);
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  out.mahalanobis = std::sqrt(w.squaredNorm());
  out.log_likelihood =
      -0.5 * (w.squaredNorm() + log_det + static_cast<double>(r.size()) * std::log(2.0 * std::numbers::pi));
  out.posterior = Gaussian(std::move(mean), std::move(cov));
  out.innovation = std::move(r);
  out.innovation_covariance = std::move(S);
  return out;
}

double kl_divergence(const Gaussian& p, const Gaussian& q) {
  if (p.dim() != q.dim()) {
    throw InvalidInputError("KL divergence between Gaussians of different dimension");
  }
  const int d = p.dim();
  Eigen::LLT<Eigen::MatrixXd> lq(q.covariance);
  if (lq.info() != Eigen::Success) {
    throw NumericalError("KL divergence: reference covariance is singular");
  }
  Eigen::LLT<Eigen::MatrixXd> lp(p.covariance);
  if (lp.info() != Eigen::Success) {
    return std::numeric_limits<double>::infinity();
  }
  const Eigen::MatrixXd Lq = lq.matrixL();
  const Eigen::MatrixXd Lp = lp.matrixL();
  const double log_det_q = 2.0 * Lq.diagonal().array().log().sum();
  const double log_det_p = 2.0 * Lp.diagonal().array().log().sum();
  const Eigen::MatrixXd A = lq.matrixL().solve(Lp);
  const Eigen::VectorXd dm = lq.matrixL().solve(q.mean - p.mean);
  const double kl = 0.5 * (A.squaredNorm() + dm.squaredNorm() - d + log_det_q - log_det_p);
  return std::max(kl, 0.0);
}

JointTrajectoryDensity::JointTrajectoryDensity(const std::vector<std::pair<Label, int>>& layout,
                                               Gaussian joint)
    : joint_(std::move(joint)) {
  int offset = 0;
  for (const auto& [l, len] : layout) {
    if (len <= 0) {
      throw InvalidInputError("block length must be positive");
    }
    if (!labels_.empty() && !(labels_.back() < l)) {
      throw InvalidInputError("joint density labels must be sorted and distinct");
    }
    labels_.push_back(l);
    blocks_.push_back(Block{offset, len});
    offset += len;
  }
  if (offset != joint_.dim()) {
    throw InvalidInputError("joint density blocks do not tile the state dimension");
  }
}

JointTrajectoryDensity JointTrajectoryDensity::independent(
    const std::vector<std::pair<Label, Gaussian>>& parts) {
  return JointTrajectoryDensity().with_independent(parts);
}

bool JointTrajectoryDensity::has(const Label& l) const { return contains(labels_, l); }

JointTrajectoryDensity::Block JointTrajectoryDensity::block(const Label& l) const {
  auto it = std::lower_bound(labels_.begin(), labels_.end(), l);
  if (it == labels_.end() || *it != l) {
    throw InvalidInputError("label " + to_string(l) + " not in joint density");
  }
  return blocks_[static_cast<std::size_t>(it - labels_.begin())];
}

Gaussian JointTrajectoryDensity::marginal(const Label& l) const {
  const Block b = block(l);
  return Gaussian(joint_.mean.segment(b.offset, b.length),
                  joint_.covariance.block(b.offset, b.offset, b.length, b.length));
}

std::vector<int> JointTrajectoryDensity::indices(const LabelSet& subset) const {
  std::vector<int> idx;
  for (const Label& l : subset) {
    const Block b = block(l);
    for (int i = 0; i < b.length; ++i) {
      idx.push_back(b.offset + i);
    }
  }
  return idx;
}

JointTrajectoryDensity JointTrajectoryDensity::slice(const LabelSet& keep) const {
  std::vector<std::pair<Label, int>> layout;
  for (const Label& l : keep) {
    layout.emplace_back(l, block(l).length);
  }
  const std::vector<int> idx = indices(keep);
  return JointTrajectoryDensity(layout, Gaussian(joint_.mean(idx), joint_.covariance(idx, idx)));
}

JointTrajectoryDensity JointTrajectoryDensity::with_independent(
    const std::vector<std::pair<Label, Gaussian>>& extra) const {
  struct Part {
    Label label;
    bool existing;
    int source_offset;
    int length;
    const Gaussian* g;
  };
  std::vector<Part> parts;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    parts.push_back(Part{labels_[i], true, blocks_[i].offset, blocks_[i].length, nullptr});
  }
  for (const auto& [l, g] : extra) {
    if (has(l)) {
      throw InvalidInputError("label " + to_string(l) + " already in joint density");
    }
    parts.push_back(Part{l, false, 0, g.dim(), &g});
  }
  std::sort(parts.begin(), parts.end(), [](const Part& a, const Part& b) { return a.label < b.label; });

  int total = 0;
  std::vector<std::pair<Label, int>> layout;
  for (const Part& p : parts) {
    layout.emplace_back(p.label, p.length);
    total += p.length;
  }
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(total);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(total, total);
  std::vector<int> dest(parts.size());
  int offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    dest[i] = offset;
    offset += parts[i].length;
  }
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Part& pi = parts[i];
    if (!pi.existing) {
      mean.segment(dest[i], pi.length) = pi.g->mean;
      cov.block(dest[i], dest[i], pi.length, pi.length) = pi.g->covariance;
      continue;
    }
    mean.segment(dest[i], pi.length) = joint_.mean.segment(pi.source_offset, pi.length);
    for (std::size_t j = 0; j < parts.size(); ++j) {
      const Part& pj = parts[j];
      if (!pj.existing) {
        continue;
      }
      cov.block(dest[i], dest[j], pi.length, pj.length) =
          joint_.covariance.block(pi.source_offset, pj.source_offset, pi.length, pj.length);
    }
  }
  return JointTrajectoryDensity(layout, Gaussian(std::move(mean), std::move(cov)));
}

JointTrajectoryDensity JointTrajectoryDensity::block_diagonal() const {
  JointTrajectoryDensity out = *this;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim(), dim());
  for (const Block& b : blocks_) {
    cov.block(b.offset, b.offset, b.length, b.length) =
        joint_.covariance.block(b.offset, b.offset, b.length, b.length);
  }
  out.joint_.covariance = std::move(cov);
  return out;
}

std::vector<LabelSet> JointTrajectoryDensity::correlated_groups(double tolerance) const {
  const std::size_t n = labels_.size();
  std::vector<std::size_t> parent(n);
  for (std::size_t i = 0; i < n; ++i) {
    parent[i] = i;
  }
  auto find = [&parent](std::size_t i) {
    while (parent[i] != i) {
      parent[i] = parent[parent[i]];
      i = parent[i];
    }
    return i;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double c = joint_.covariance
                           .block(blocks_[i].offset, blocks_[j].offset, blocks_[i].length,
                                  blocks_[j].length)
                           .cwiseAbs()
                           .maxCoeff();
      if (c > tolerance) {
        parent[find(i)] = find(j);
      }
    }
  }
  std::vector<LabelSet> groups;
  std::vector<int> group_of(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = find(i);
    if (group_of[r] < 0) {
      group_of[r] = static_cast<int>(groups.size());
      groups.emplace_back();
    }
    groups[static_cast<std::size_t>(group_of[r])].push_back(labels_[i]);
  }
  return groups;
}

Gaussian marginalize_to_label(const JointTrajectoryDensity& joint, const Label& l) {
  return joint.marginal(l);
}

std::string to_fixture(const Gaussian& g) {
  std::string out = std::to_string(g.dim());
  for (int i = 0; i < g.dim(); ++i) {
    out += ' ' + format_double(g.mean(i));
  }
  for (int i = 0; i < g.dim(); ++i) {
    for (int j = 0; j < g.dim(); ++j) {
      out += ' ' + format_double(g.covariance(i, j));
    }
  }
  return out;
}

Gaussian gaussian_from_fixture(const std::string& text) {
  std::istringstream ss(text);
  std::string tok;
  if (!(ss >> tok)) {
    throw InvalidInputError("empty Gaussian fixture");
  }
  const int d = static_cast<int>(parse_double(tok));
  if (d < 0) {
    throw InvalidInputError("negative Gaussian dimension");
  }
  Eigen::VectorXd m(d);
  Eigen::MatrixXd p(d, d);
  for (int i = 0; i < d; ++i) {
    if (!(ss >> tok)) {
      throw InvalidInputError("Gaussian fixture truncated in mean");
    }
    m(i) = parse_double(tok);
  }
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      if (!(ss >> tok)) {
        throw InvalidInputError("Gaussian fixture truncated in covariance");
      }
      p(i, j) = parse_double(tok);
    }
  }
  if (ss >> tok) {
    throw InvalidInputError("trailing data in Gaussian fixture");
  }
  return Gaussian(std::move(m), std::move(p));
}

}  // namespace msglmb::densities
