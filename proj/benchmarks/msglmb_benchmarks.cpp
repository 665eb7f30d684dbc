#include <benchmark/benchmark.h>

#include <random>

#include "msglmb/densities.hpp"
#include "msglmb/dynamics.hpp"
#include "msglmb/metrics.hpp"
#include "msglmb/recursion.hpp"

namespace {

using namespace msglmb;

Eigen::VectorXd state(double px, double vx, double py, double vy) {
  Eigen::VectorXd x(4);
  x << px, vx, py, vy;
  return x;
}

densities::JointTrajectoryDensity closing_pair(int objects) {
  std::vector<std::pair<Label, densities::Gaussian>> parts;
  for (int i = 0; i < objects; ++i) {
    const double side = i % 2 == 0 ? -1.0 : 1.0;
    parts.emplace_back(Label{1, i + 1},
                       densities::Gaussian(state(side * 15.0, -side * 5.0, 500.0 + 3.0 * i, 0.0),
                                           4.0 * Eigen::MatrixXd::Identity(4, 4)));
  }
  return densities::JointTrajectoryDensity::independent(parts);
}

void BM_UnscentedTransform(benchmark::State& st) {
  const int d = static_cast<int>(st.range(0));
  const densities::Gaussian g(Eigen::VectorXd::Ones(d), Eigen::MatrixXd::Identity(d, d));
  const densities::VectorMap f = [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return x.array().sin(); };
  for (auto _ : st) {
    benchmark::DoNotOptimize(densities::unscented_transform(g, f, densities::UtParams{}));
  }
}
BENCHMARK(BM_UnscentedTransform)->Arg(4)->Arg(8)->Arg(16);

void BM_SocialForceStep(benchmark::State& st) {
  const int n = static_cast<int>(st.range(0));
  std::vector<dynamics::LabeledState> s;
  for (int i = 0; i < n; ++i) {
    s.push_back({state(10.0 * i, 1.0, 500.0, 0.0), Label{1, i + 1}});
  }
  const dynamics::SocialForceParams p;
  for (auto _ : st) {
    benchmark::DoNotOptimize(dynamics::social_force_predict(s, p));
  }
}
BENCHMARK(BM_SocialForceStep)->Arg(2)->Arg(4)->Arg(8);

void BM_JointPrediction(benchmark::State& st) {
  const int n = static_cast<int>(st.range(0));
  const auto joint = closing_pair(n);
  const dynamics::SocialForceParams p;
  for (auto _ : st) {
    benchmark::DoNotOptimize(dynamics::predict_joint(joint, joint.labels(), p, densities::UtParams{}));
  }
}
BENCHMARK(BM_JointPrediction)->Arg(2)->Arg(4);

void BM_NodeExtension(benchmark::State& st) {
  recursion::Model model;
  model.birth.active_scans = {1};
  model.sensor = measurement::SensorModel::bearing_range(0.035, 10.0);
  const auto joint = closing_pair(2);
  std::vector<Eigen::VectorXd> Z{model.sensor.h(state(-10, 0, 500, 0), 2), model.sensor.h(state(10, 0, 503, 0), 2)};
  for (auto _ : st) {
    recursion::Engine engine(model, recursion::Retention::Joint, {{2, Z}});
    const auto root = engine.root(1, joint);
    benchmark::DoNotOptimize(engine.extend(root, ExtendedAssociationMap({{Label{1, 1}, 1}, {Label{1, 2}, 2}})));
  }
}
BENCHMARK(BM_NodeExtension);

void BM_Ospa(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-500.0, 500.0);
  std::vector<Eigen::Vector2d> X(n);
  std::vector<Eigen::Vector2d> Y(n);
  for (std::size_t i = 0; i < n; ++i) {
    X[i] = Eigen::Vector2d(u(rng), u(rng));
    Y[i] = Eigen::Vector2d(u(rng), u(rng));
  }
  for (auto _ : st) {
    benchmark::DoNotOptimize(metrics::ospa(X, Y, metrics::OspaParams{}));
  }
}
BENCHMARK(BM_Ospa)->Arg(4)->Arg(16)->Arg(64);

}  // namespace
BENCHMARK_MAIN();
