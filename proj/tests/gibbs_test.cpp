#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "msglmb/gibbs.hpp"

namespace msglmb::gibbs {
namespace {

const Label a{1, 1};
const Label b{1, 2};

/// Two labels, two measurements; log factors chosen by hand.
FactorTable table_of(const Eigen::MatrixXd& log_eta) {
  FactorTable t;
  t.scan = 1;
  t.num_measurements = static_cast<int>(log_eta.cols()) - 2;
  t.labels = {a, b};
  t.is_birth = {1, 1};
  t.log_eta = log_eta;
  return t;
}

Eigen::MatrixXd example_factors() {
  Eigen::MatrixXd m(2, 4);
  m << std::log(0.5), std::log(0.1), std::log(2.0), std::log(0.3),
      std::log(0.4), std::log(0.2), std::log(1.5), std::log(3.0);
  return m;
}

/// Single-scan context over a fixed table.
class FixedContext : public AssociationContext {
 public:
  explicit FixedContext(FactorTable t) : table_(std::make_shared<FactorTable>(std::move(t))) {}
  [[nodiscard]] int first_scan() const override { return 1; }
  [[nodiscard]] int last_scan() const override { return 1; }
  [[nodiscard]] double log_initial_weight() const override { return 0.0; }
  [[nodiscard]] std::shared_ptr<const FactorTable> factors(
      std::span<const ExtendedAssociationMap>) override {
    return table_;
  }

 private:
  std::shared_ptr<const FactorTable> table_;
};

TEST(FactorTable, LogProductSumsFactors) {
  const FactorTable t = table_of(example_factors());
  const ExtendedAssociationMap g({{a, 1}, {b, 2}});
  EXPECT_NEAR(t.log_product(g), std::log(2.0 * 3.0), 1e-14);
  const ExtendedAssociationMap dead({{a, -1}, {b, 0}});
  EXPECT_NEAR(t.log_product(dead), std::log(0.5 * 0.2), 1e-14);
}

TEST(FactorTable, InvalidAssignmentsHaveZeroWeight) {
  const FactorTable t = table_of(example_factors());
  EXPECT_EQ(t.log_product(ExtendedAssociationMap({{a, 1}, {b, 1}})), kNegInf);
  EXPECT_EQ(t.log_product(ExtendedAssociationMap({{a, 3}, {b, 0}})), kNegInf);
  EXPECT_EQ(t.log_product(ExtendedAssociationMap({{a, 0}})), kNegInf);
}

TEST(FactorTable, SameClusterMayShareAMeasurement) {
  FactorTable t = table_of(example_factors());
  t.cluster = {0, 0};
  EXPECT_TRUE(std::isfinite(t.log_product(ExtendedAssociationMap({{a, 1}, {b, 1}}))));
  t.cluster = {0, 1};
  EXPECT_EQ(t.log_product(ExtendedAssociationMap({{a, 1}, {b, 1}})), kNegInf);
}

TEST(FactorSampling, SamplesAreValidAssignments) {
  const FactorTable t = table_of(example_factors());
  Rng rng(4);
  for (const auto& g : factor_sampling(t, 200, rng)) {
    EXPECT_TRUE(g.positive_one_to_one());
    EXPECT_TRUE(std::isfinite(t.log_product(g)));
  }
  EXPECT_THROW((void)factor_sampling(t, 0, rng), InvalidInputError);
}

TEST(FactorSampling, SingleSupportedAssignmentIsAlwaysDrawn) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Constant(2, 4, kNegInf);
  m(0, 2) = 0.0;
  m(1, 3) = 0.0;
  const FactorTable t = table_of(m);
  Rng rng(5);
  for (const auto& g : factor_sampling(t, 20, rng)) {
    EXPECT_EQ(g, ExtendedAssociationMap({{a, 1}, {b, 2}}));
  }
}

TEST(JointWeight, SingleScanIsTheFactorProduct) {
  FixedContext ctx(table_of(example_factors()));
  const History h{ExtendedAssociationMap({{a, 2}, {b, 0}})};
  EXPECT_NEAR(joint_weight(h, ctx), std::log(0.3 * 0.2), 1e-14);
  EXPECT_NEAR(eta_factor(ctx, {}, 1, 2), 3.0, 1e-14);
  EXPECT_THROW((void)joint_weight(History{}, ctx), InvalidInputError);
  EXPECT_THROW((void)eta_factor(ctx, {}, 2, 0), InvalidInputError);
}

TEST(MsGibbs, ReturnsInitialStateThenOnePerSweep) {
  FixedContext ctx(table_of(example_factors()));
  const History init{ExtendedAssociationMap({{a, -1}, {b, -1}})};
  Rng rng(6);
  const auto states = ms_gibbs(init, 25, ctx, rng);
  ASSERT_EQ(states.size(), 26u);
  EXPECT_EQ(states.front(), init);
  for (const auto& s : states) {
    EXPECT_TRUE(std::isfinite(joint_weight(s, ctx)));
  }
  const History bad{ExtendedAssociationMap({{a, 1}, {b, 1}})};
  EXPECT_THROW((void)ms_gibbs(bad, 1, ctx, rng), InvalidInputError);
}

TEST(MsGibbs, SingleScanChainTargetsFactorProduct) {
  FixedContext ctx(table_of(example_factors()));
  std::map<ExtendedAssociationMap, double> target;
  double total = 0.0;
  for (int u = -1; u <= 2; ++u) {
    for (int v = -1; v <= 2; ++v) {
      const ExtendedAssociationMap g({{a, u}, {b, v}});
      const double w = std::exp(joint_weight(History{g}, ctx));
      if (w > 0.0) {
        target[g] = w;
        total += w;
      }
    }
  }
  for (const auto conditioning : {Conditioning::Prefix, Conditioning::Full}) {
    Rng rng(7);
    const auto states = ms_gibbs(History{ExtendedAssociationMap({{a, 0}, {b, 0}})}, 40000, ctx, rng,
                                 GibbsOptions{conditioning});
    std::map<ExtendedAssociationMap, double> counts;
    for (std::size_t i = 1; i < states.size(); ++i) {
      counts[states[i][0]] += 1.0;
    }
    double tv = 0.0;
    for (const auto& [g, w] : target) {
      tv += std::abs(w / total - counts[g] / static_cast<double>(states.size() - 1));
    }
    EXPECT_LT(0.5 * tv, 0.02);
  }
}

}  // namespace
}  // namespace msglmb::gibbs
