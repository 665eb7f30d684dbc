#include "msglmb/measurement.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

namespace msglmb::measurement {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double log_clutter(const Eigen::VectorXd& z, const DetectionContext& ctx) {
  const double kappa = ctx.clutter.intensity(z, ctx.sensor);
  if (!(kappa > 0.0)) {
    throw InvalidInputError("clutter intensity vanishes at a measurement");
  }
  return std::log(kappa);
}

const Eigen::VectorXd& pick(std::span<const Eigen::VectorXd> Z, int j) {
  if (j < 0 || j > static_cast<int>(Z.size())) {
    throw InvalidInputError("measurement index " + std::to_string(j) + " out of range");
  }
  return Z[static_cast<std::size_t>(j - 1)];
}

Eigen::VectorXd noise(const SensorModel& sensor, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd e(sensor.dim());
  for (int i = 0; i < sensor.dim(); ++i) {
    e(i) = normal(rng);
  }
  const Eigen::MatrixXd root = Eigen::LLT<Eigen::MatrixXd>(sensor.R).matrixL();
  return root * e;
}

void wrap_measurement(Eigen::VectorXd& z, const SensorModel& sensor) {
  for (int a : sensor.angular()) {
    z(a) = wrap_to_two_pi(z(a));
  }
}

std::vector<Eigen::VectorXd> add_clutter(std::vector<Eigen::VectorXd> z, const SensorModel& sensor,
                                         const ClutterModel& clutter, Rng& rng) {
  std::poisson_distribution<int> count(clutter.rate);
  const int n = clutter.rate > 0.0 ? count(rng) : 0;
  for (int i = 0; i < n; ++i) {
    z.push_back(clutter.sample(sensor, rng));
  }
  std::shuffle(z.begin(), z.end(), rng);
  return z;
}

void partitions_rec(const LabelSet& labels, std::size_t next, Partition& current,
                    std::vector<Partition>& out) {
  if (next == labels.size()) {
    out.push_back(current);
    return;
  }
  for (std::size_t b = 0; b < current.size(); ++b) {
    current[b].push_back(labels[next]);
    partitions_rec(labels, next + 1, current, out);
    current[b].pop_back();
  }
  current.push_back(LabelSet{labels[next]});
  partitions_rec(labels, next + 1, current, out);
  current.pop_back();
}

}  // namespace

Eigen::Vector2d orbit_position(int scan) {
  if (scan % 2 == 1 || scan % 2 == -1) {
    const double a = std::floor(scan / 2.0) * std::numbers::pi / 4.0;
    return {1000.0 * std::cos(a), 1000.0 * std::sin(a)};
  }
  const double a = (scan - 1) * std::numbers::pi / 8.0;
  return {800.0 * std::cos(a), 800.0 * std::sin(a)};
}

SensorModel SensorModel::bearing_range(double sigma_bearing, double sigma_range) {
  SensorModel s;
  s.kind = SensorKind::BearingRange;
  s.R = Eigen::Vector2d(sigma_bearing * sigma_bearing, sigma_range * sigma_range).asDiagonal();
  return s;
}

SensorModel SensorModel::bearing_only_moving(double sigma_bearing) {
  SensorModel s;
  s.kind = SensorKind::BearingOnlyMoving;
  s.R = Eigen::MatrixXd::Constant(1, 1, sigma_bearing * sigma_bearing);
  return s;
}

SensorModel SensorModel::position(double sigma) {
  SensorModel s;
  s.kind = SensorKind::Position;
  s.R = sigma * sigma * Eigen::MatrixXd::Identity(2, 2);
  return s;
}

Eigen::Vector2d SensorModel::sensor_position(int scan) const {
  return kind == SensorKind::BearingOnlyMoving ? orbit_position(scan) : Eigen::Vector2d::Zero();
}

Eigen::VectorXd SensorModel::h(const Eigen::VectorXd& x, int scan) const {
  const Eigen::Vector2d p = dynamics::position(x);
  switch (kind) {
    case SensorKind::BearingRange: {
      Eigen::VectorXd z(2);
      z << bearing(p, Eigen::Vector2d::Zero()), p.norm();
      return z;
    }
    case SensorKind::BearingOnlyMoving:
      return Eigen::VectorXd::Constant(1, bearing(p, orbit_position(scan)));
    case SensorKind::Position:
      return p;
  }
  throw InvalidInputError("unknown sensor kind");
}

std::vector<int> SensorModel::angular() const {
  return kind == SensorKind::Position ? std::vector<int>{} : std::vector<int>{0};
}

std::string SensorModel::tag() const {
  switch (kind) {
    case SensorKind::BearingRange:
      return "br";
    case SensorKind::BearingOnlyMoving:
      return "b";
    case SensorKind::Position:
      return "xy";
  }
  return "?";
}

void SensorModel::validate() const {
  const int expected = kind == SensorKind::BearingOnlyMoving ? 1 : 2;
  if (R.rows() != expected || R.cols() != expected) {
    throw InvalidInputError("sensor noise covariance has the wrong shape");
  }
  if (Eigen::LLT<Eigen::MatrixXd>(R).info() != Eigen::Success) {
    throw InvalidInputError("sensor noise covariance is not positive definite");
  }
}

double bearing(const Eigen::Vector2d& p, const Eigen::Vector2d& sensor) {
  const Eigen::Vector2d d = p - sensor;
  return wrap_to_two_pi(std::atan2(d.x(), d.y()));
}

double ClutterModel::volume(const SensorModel& sensor) const {
  switch (sensor.kind) {
    case SensorKind::BearingRange:
      return kTwoPi * max_range;
    case SensorKind::BearingOnlyMoving:
      return kTwoPi;
    case SensorKind::Position:
      return (xy_high - xy_low).prod();
  }
  return 0.0;
}

double ClutterModel::intensity(const Eigen::VectorXd& z, const SensorModel& sensor) const {
  bool inside = true;
  switch (sensor.kind) {
    case SensorKind::BearingRange:
      inside = z(0) >= 0.0 && z(0) <= kTwoPi && z(1) >= 0.0 && z(1) <= max_range;
      break;
    case SensorKind::BearingOnlyMoving:
      inside = z(0) >= 0.0 && z(0) <= kTwoPi;
      break;
    case SensorKind::Position:
      inside = (z.array() >= xy_low.array()).all() && (z.array() <= xy_high.array()).all();
      break;
  }
  return inside ? rate / volume(sensor) : 0.0;
}

Eigen::VectorXd ClutterModel::sample(const SensorModel& sensor, Rng& rng) const {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  switch (sensor.kind) {
    case SensorKind::BearingRange: {
      Eigen::VectorXd z(2);
      const double b = kTwoPi * unit(rng);
      z << b, max_range * unit(rng);
      return z;
    }
    case SensorKind::BearingOnlyMoving:
      return Eigen::VectorXd::Constant(1, kTwoPi * unit(rng));
    case SensorKind::Position: {
      Eigen::VectorXd z(2);
      const double x = xy_low.x() + (xy_high.x() - xy_low.x()) * unit(rng);
      z << x, xy_low.y() + (xy_high.y() - xy_low.y()) * unit(rng);
      return z;
    }
  }
  throw InvalidInputError("unknown sensor kind");
}

void ClutterModel::validate() const {
  if (!(rate >= 0.0) || !(max_range > 0.0) || !((xy_high - xy_low).minCoeff() > 0.0)) {
    throw InvalidInputError("invalid clutter model");
  }
}

int CellPartition::cell_of(double b) const {
  return static_cast<int>(std::floor(wrap_to_two_pi(b) / width));
}

int CellPartition::count() const { return static_cast<int>(std::ceil(kTwoPi / width)); }

PredictedMeasurement predict_measurement(const densities::Gaussian& x, const SensorModel& sensor,
                                         int scan, const densities::UtParams& ut) {
  const std::vector<int> angular = sensor.angular();
  const densities::Transformed t = densities::unscented_transform(
      x, [&](const Eigen::VectorXd& s) { return sensor.h(s, scan); }, ut, angular);
  PredictedMeasurement pm;
  pm.mean = t.output.mean;
  pm.S = densities::symmetrized(t.output.covariance + sensor.R);
  pm.llt.compute(pm.S);
  if (pm.llt.info() != Eigen::Success) {
    throw NumericalError("singular innovation covariance");
  }
  pm.log_det = 2.0 * pm.llt.matrixLLT().diagonal().array().log().sum();
  return pm;
}

Eigen::VectorXd innovation(const PredictedMeasurement& pm, const Eigen::VectorXd& z,
                           const SensorModel& sensor) {
  Eigen::VectorXd r = z - pm.mean;
  for (int a : sensor.angular()) {
    r(a) = wrap_to_pi(r(a));
  }
  return r;
}

double mahalanobis(const PredictedMeasurement& pm, const Eigen::VectorXd& z,
                   const SensorModel& sensor) {
  const Eigen::VectorXd w = pm.llt.matrixL().solve(innovation(pm, z, sensor));
  return w.norm();
}

double log_likelihood(const PredictedMeasurement& pm, const Eigen::VectorXd& z,
                      const SensorModel& sensor) {
  const Eigen::VectorXd w = pm.llt.matrixL().solve(innovation(pm, z, sensor));
  return -0.5 * (w.squaredNorm() + pm.log_det +
                 static_cast<double>(z.size()) * std::log(kTwoPi));
}

double log_psi(const densities::Gaussian& x, int j, std::span<const Eigen::VectorXd> Z,
               const DetectionContext& ctx) {
  if (j == 0) {
    return std::log1p(-ctx.detection_probability);
  }
  const Eigen::VectorXd& z = pick(Z, j);
  const double lk = log_clutter(z, ctx);
  const PredictedMeasurement pm = predict_measurement(x, ctx.sensor, ctx.scan, ctx.ut);
  return std::log(ctx.detection_probability) + log_likelihood(pm, z, ctx.sensor) - lk;
}

double psi(const densities::Gaussian& x, int j, std::span<const Eigen::VectorXd> Z,
           const DetectionContext& ctx) {
  return std::exp(log_psi(x, j, Z, ctx));
}

double group_bearing(std::span<const double> bearings) {
  if (bearings.empty()) {
    throw InvalidInputError("group bearing of an empty group");
  }
  const double b0 = bearings.front();
  double offset = 0.0;
  for (double b : bearings) {
    offset += wrap_to_pi(b - b0);
  }
  return wrap_to_two_pi(b0 + offset / static_cast<double>(bearings.size()));
}

Eigen::VectorXd group_measurement(const Eigen::VectorXd& stacked, const SensorModel& sensor,
                                  int scan) {
  if (sensor.kind != SensorKind::BearingOnlyMoving) {
    throw InvalidInputError("merged measurements require a bearing-only sensor");
  }
  const int n = static_cast<int>(stacked.size()) / dynamics::kStateDim;
  std::vector<double> b(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    b[static_cast<std::size_t>(i)] =
        sensor.h(stacked.segment(i * dynamics::kStateDim, dynamics::kStateDim), scan)(0);
  }
  return Eigen::VectorXd::Constant(1, group_bearing(b));
}

double log_merged_psi(const densities::Gaussian& group_joint, int j,
                      std::span<const Eigen::VectorXd> Z, const DetectionContext& ctx) {
  if (group_joint.dim() == 0 || group_joint.dim() % dynamics::kStateDim != 0) {
    throw InvalidInputError("merged factor needs a nonempty group");
  }
  if (j == 0) {
    return std::log1p(-ctx.detection_probability);
  }
  const Eigen::VectorXd& z = pick(Z, j);
  const double lk = log_clutter(z, ctx);
  const std::vector<int> angular{0};
  const densities::Transformed t = densities::unscented_transform(
      group_joint,
      [&](const Eigen::VectorXd& s) { return group_measurement(s, ctx.sensor, ctx.scan); },
      ctx.ut, angular);
  Eigen::VectorXd r(1);
  r(0) = wrap_to_pi(z(0) - t.output.mean(0));
  return std::log(ctx.detection_probability) +
         densities::log_normal_density(r, t.output.covariance + ctx.sensor.R) - lk;
}

double merged_psi(const densities::Gaussian& group_joint, int j, std::span<const Eigen::VectorXd> Z,
                  const DetectionContext& ctx) {
  return std::exp(log_merged_psi(group_joint, j, Z, ctx));
}

std::vector<AssociationMap> enumerate_association_maps(const LabelSet& labels, int M, int cap) {
  if (M < 0) {
    throw InvalidInputError("negative measurement count");
  }
  if (static_cast<long long>(labels.size()) * M > cap) {
    throw SizeError("association enumeration exceeds cap " + std::to_string(cap));
  }
  std::vector<AssociationMap> out;
  std::vector<int> values(labels.size(), 0);
  std::vector<bool> used(static_cast<std::size_t>(M) + 1, false);
  auto rec = [&](auto&& self, std::size_t i) -> void {
    if (i == labels.size()) {
      std::vector<ExtendedAssociationMap::Entry> entries;
      for (std::size_t k = 0; k < labels.size(); ++k) {
        entries.emplace_back(labels[k], values[k]);
      }
      out.emplace_back(std::move(entries));
      return;
    }
    for (int u = 0; u <= M; ++u) {
      if (u > 0 && used[static_cast<std::size_t>(u)]) {
        continue;
      }
      values[i] = u;
      if (u > 0) {
        used[static_cast<std::size_t>(u)] = true;
      }
      self(self, i + 1);
      if (u > 0) {
        used[static_cast<std::size_t>(u)] = false;
      }
    }
  };
  rec(rec, 0);
  return out;
}

std::vector<Partition> enumerate_partitions(const LabelSet& labels, int cap) {
  if (static_cast<int>(labels.size()) > cap) {
    throw SizeError("partition enumeration of " + std::to_string(labels.size()) +
                    " labels exceeds cap " + std::to_string(cap));
  }
  std::vector<Partition> out;
  if (labels.empty()) {
    out.emplace_back();
    return out;
  }
  Partition current;
  partitions_rec(labels, 0, current, out);
  return out;
}

std::vector<Eigen::VectorXd> simulate_standard_measurements(
    std::span<const dynamics::LabeledState> truth, const SensorModel& sensor,
    const ClutterModel& clutter, double detection_probability, int scan, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Eigen::VectorXd> z;
  for (const auto& s : truth) {
    if (unit(rng) < detection_probability) {
      Eigen::VectorXd m = sensor.h(s.attribute, scan) + noise(sensor, rng);
      wrap_measurement(m, sensor);
      z.push_back(std::move(m));
    }
  }
  return add_clutter(std::move(z), sensor, clutter, rng);
}

std::vector<Eigen::VectorXd> simulate_merged_measurements(
    std::span<const dynamics::LabeledState> truth, const SensorModel& sensor,
    const CellPartition& cells, const ClutterModel& clutter, double detection_probability,
    int scan, Rng& rng) {
  if (sensor.kind != SensorKind::BearingOnlyMoving) {
    throw InvalidInputError("merged measurements require a bearing-only sensor");
  }
  std::map<int, std::vector<double>> occupied;
  for (const auto& s : truth) {
    const double b = sensor.h(s.attribute, scan)(0);
    occupied[cells.cell_of(b)].push_back(b);
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Eigen::VectorXd> z;
  for (const auto& [cell, bearings] : occupied) {
    if (unit(rng) < detection_probability) {
      Eigen::VectorXd m = Eigen::VectorXd::Constant(1, group_bearing(bearings));
      m += noise(sensor, rng);
      wrap_measurement(m, sensor);
      z.push_back(std::move(m));
    }
  }
  return add_clutter(std::move(z), sensor, clutter, rng);
}

void write_measurements(std::ostream& out, std::span<const ScanMeasurements> scans,
                        const SensorModel& sensor) {
  const std::string tag = sensor.tag();
  for (const auto& s : scans) {
    out << s.scan << ' ' << s.z.size();
    for (const auto& z : s.z) {
      out << ' ' << tag;
      for (int i = 0; i < z.size(); ++i) {
        out << ' ' << format_double(z(i));
      }
    }
    out << '\n';
  }
}

std::vector<ScanMeasurements> read_measurements(std::istream& in, const SensorModel& sensor) {
  const std::string tag = sensor.tag();
  std::vector<ScanMeasurements> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#') {
      continue;
    }
    const std::string where = "measurement file line " + std::to_string(line_no) + ": ";
    std::istringstream ss(line);
    ScanMeasurements s;
    long long count = 0;
    if (!(ss >> s.scan >> count) || count < 0) {
      throw InvalidInputError(where + "expected scan index and count");
    }
    for (long long i = 0; i < count; ++i) {
      std::string kind;
      if (!(ss >> kind) || kind != tag) {
        throw InvalidInputError(where + "expected measurement kind '" + tag + "'");
      }
      Eigen::VectorXd z(sensor.dim());
      for (int d = 0; d < sensor.dim(); ++d) {
        std::string tok;
        if (!(ss >> tok)) {
          throw InvalidInputError(where + "truncated measurement");
        }
        try {
          z(d) = parse_double(tok);
        } catch (const InvalidInputError& e) {
          throw InvalidInputError(where + e.what());
        }
      }
      s.z.push_back(std::move(z));
    }
    std::string extra;
    if (ss >> extra) {
      throw InvalidInputError(where + "trailing data");
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace msglmb::measurement
