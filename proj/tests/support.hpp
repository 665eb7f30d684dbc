#pragma once

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "msglmb/densities.hpp"
#include "msglmb/recursion.hpp"

namespace msglmb::testing {

using Rng = std::mt19937_64;

/// Random symmetric positive definite matrix with eigenvalues in [lo, hi].
inline Eigen::MatrixXd random_spd(int n, Rng& rng, double lo = 0.5, double hi = 2.0) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      a(i, j) = g(rng);
    }
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  const Eigen::MatrixXd q = qr.householderQ();
  Eigen::VectorXd d(n);
  for (int i = 0; i < n; ++i) {
    d(i) = u(rng);
  }
  return q * d.asDiagonal() * q.transpose();
}

inline Eigen::VectorXd random_vector(int n, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) {
    v(i) = g(rng);
  }
  return v;
}

inline densities::Gaussian state(double px, double vx, double py, double vy, double sd) {
  Eigen::VectorXd m(4);
  m << px, vx, py, vy;
  return densities::Gaussian(m, sd * sd * Eigen::MatrixXd::Identity(4, 4));
}

/// Linear-Gaussian model: position sensor, no interaction, birth at scan 1 only.
inline recursion::Model linear_model(const std::vector<densities::Gaussian>& births,
                                     double birth_probability = 0.5) {
  recursion::Model m;
  for (const auto& b : births) {
    m.birth.components.push_back(dynamics::BirthComponent{birth_probability, b});
  }
  m.birth.active_scans = {1};
  m.survival.probability = 0.9;
  m.dynamics.V = 0.0;
  m.dynamics.substeps = 1;
  m.sensor = measurement::SensorModel::position(5.0);
  m.clutter.rate = 2.0;
  m.detection_probability = 0.8;
  m.gate = 0.0;
  return m;
}

}  // namespace msglmb::testing
