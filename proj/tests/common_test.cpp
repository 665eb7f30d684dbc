#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "msglmb/association.hpp"
#include "msglmb/common.hpp"

namespace msglmb {
namespace {

const Label a{1, 0};
const Label b{1, 1};
const Label c{2, 0};

TEST(Labels, OrderByBirthTimeThenIndex) {
  EXPECT_LT(a, b);
  EXPECT_LT(b, c);
  EXPECT_EQ(to_string(c), "2.0");
}

TEST(Labels, SetOperationsKeepSortedOrder) {
  const LabelSet x{a, c};
  const LabelSet y{b, c};
  EXPECT_EQ(set_union(x, y), (LabelSet{a, b, c}));
  EXPECT_EQ(set_intersection(x, y), (LabelSet{c}));
  EXPECT_EQ(set_difference(x, y), (LabelSet{a}));
  EXPECT_TRUE(is_label_set(set_union(x, y)));
  EXPECT_FALSE(is_label_set(LabelSet{b, a}));
  EXPECT_FALSE(is_label_set(LabelSet{a, a}));
  EXPECT_TRUE(contains(x, c));
  EXPECT_FALSE(contains(x, b));
}

TEST(Numerics, LogSumExpIsStableAndExact) {
  const std::vector<double> v{-1000.0, -1000.0};
  EXPECT_NEAR(log_sum_exp(v), -1000.0 + std::log(2.0), 1e-12);
  const std::vector<double> w{std::log(0.2), std::log(0.3)};
  EXPECT_NEAR(log_sum_exp(w), std::log(0.5), 1e-15);
  const double ninf = -std::numeric_limits<double>::infinity();
  const std::vector<double> none{ninf, ninf};
  EXPECT_EQ(log_sum_exp(none), ninf);
  EXPECT_EQ(log_sum_exp(std::vector<double>{}), ninf);
}

TEST(Numerics, AngleWrapping) {
  EXPECT_NEAR(wrap_to_pi(3.0 * std::numbers::pi / 2.0), -std::numbers::pi / 2.0, 1e-15);
  EXPECT_NEAR(wrap_to_two_pi(-std::numbers::pi / 2.0), 3.0 * std::numbers::pi / 2.0, 1e-15);
  EXPECT_NEAR(wrap_to_pi(0.25), 0.25, 0.0);
}

TEST(Numerics, DoubleTextRoundTripIsExact) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double x = g(rng);
    EXPECT_EQ(parse_double(format_double(x)), x);
  }
  EXPECT_THROW((void)parse_double("1.0x"), InvalidInputError);
  EXPECT_THROW((void)parse_double(""), InvalidInputError);
}

TEST(ExtendedAssociationMap, KeepsEntriesSortedAndFindsValues) {
  ExtendedAssociationMap g({{c, 2}, {a, -1}, {b, 0}});
  EXPECT_EQ(g.domain(), (LabelSet{a, b, c}));
  EXPECT_EQ(g.live_labels(), (LabelSet{b, c}));
  EXPECT_EQ(g.at(c), 2);
  EXPECT_FALSE(g.find(Label{5, 5}).has_value());
  EXPECT_THROW((void)g.at(Label{5, 5}), InvalidInputError);
  EXPECT_EQ(g.max_index(), 2);
}

TEST(ExtendedAssociationMap, RejectsDuplicatesAndValuesBelowDeath) {
  EXPECT_THROW(ExtendedAssociationMap({{a, 1}, {a, 2}}), InvalidInputError);
  EXPECT_THROW(ExtendedAssociationMap({{a, -2}}), InvalidInputError);
}

TEST(ExtendedAssociationMap, DetectsSharedPositiveIndices) {
  EXPECT_TRUE(ExtendedAssociationMap({{a, 0}, {b, 0}, {c, 1}}).positive_one_to_one());
  EXPECT_FALSE(ExtendedAssociationMap({{a, 1}, {b, 1}}).positive_one_to_one());
}

TEST(ExtendedAssociationMap, TextRoundTrip) {
  const ExtendedAssociationMap g({{a, -1}, {b, 3}, {c, 0}});
  EXPECT_EQ(ExtendedAssociationMap::from_text(g.to_text()), g);
  EXPECT_EQ(ExtendedAssociationMap::from_text(ExtendedAssociationMap{}.to_text()),
            ExtendedAssociationMap{});
  EXPECT_THROW((void)ExtendedAssociationMap::from_text("garbage"), InvalidInputError);
}

TEST(AssociationMap, RequiresPositiveOneToOne) {
  EXPECT_THROW(AssociationMap({{a, 1}, {b, 1}}), InvalidInputError);
  EXPECT_THROW(AssociationMap({{a, -1}}), InvalidInputError);
  const AssociationMap theta({{a, 1}, {b, 0}});
  EXPECT_EQ(theta.extend(LabelSet{a, b, c}), ExtendedAssociationMap({{a, 1}, {b, 0}, {c, -1}}));
  EXPECT_EQ(AssociationMap::from_extended(theta.extend(LabelSet{a, b, c})), theta);
}

}  // namespace
}  // namespace msglmb
