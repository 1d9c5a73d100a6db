#include <gtest/gtest.h>

#include <random>

#include "metric_oracle.hpp"
#include "vtf/metrics.hpp"

using namespace vtf;

namespace {

AttributeSchema two_group_schema() {
  return AttributeSchema({{"shade", GroupKind::Exclusive, {{"light", "Light"}, {"dark", "Dark"}, {"mixed", "Mixed"}}},
                          {"bag", GroupKind::Binary, {{"backpack", "hasBackpack"}}}});
}

LabelVector decide_vec(std::vector<double> logits, const AttributeSchema& s) {
  return decide(std::span<const double>(logits), s);
}

}  // namespace

TEST(Decide, BinaryBoundaryIsNegative) {
  const auto s = two_group_schema();
  EXPECT_EQ(decide_vec({0, 1, 0, 0.0}, s)[3], 0);
  EXPECT_EQ(decide_vec({0, 1, 0, 1e-9}, s)[3], 1);
}

TEST(Decide, ExclusiveTieGoesToLowestIndex) {
  EXPECT_EQ(decide_vec({1, 1, 0, -1}, two_group_schema()), (LabelVector{1, 0, 0, 0}));
}

TEST(Decide, ExclusiveArgmax) { EXPECT_EQ(decide_vec({-5, 2, 1, 3}, two_group_schema()), (LabelVector{0, 1, 0, 1})); }

TEST(Decide, LengthChecked) { EXPECT_THROW(decide_vec({1, 2}, two_group_schema()), DimensionError); }

TEST(GroupMetrics, Perfect) {
  const std::vector<LabelVector> t{{1, 0}, {0, 1}, {1, 0}};
  const auto g = group_metrics(t, t, "g", 2);
  EXPECT_EQ(g.precision, 1.0);
  EXPECT_EQ(g.recall, 1.0);
  EXPECT_EQ(g.f1, 1.0);
  EXPECT_EQ(g.support, 3u);
}

TEST(GroupMetrics, AllWrongBalancedBinary) {
  const auto g = group_metrics({{1}, {0}, {1}, {0}}, {{0}, {1}, {0}, {1}}, "g", 1);
  EXPECT_EQ(g.precision, 0.0);
  EXPECT_EQ(g.recall, 0.0);
  EXPECT_EQ(g.f1, 0.0);
}

TEST(GroupMetrics, HandConfusionCounts) {
  std::vector<LabelVector> p, t;
  oracle::hand_case(p, t);
  const auto g = group_metrics(p, t, "g", 2);
  EXPECT_NEAR(g.precision, (0.75 + 0.5) / 2, 1e-15);
  EXPECT_NEAR(g.recall, (0.75 + 0.25) / 2, 1e-15);
  EXPECT_NEAR(g.f1, 13.0 / 24.0, 1e-15);
}

TEST(GroupMetrics, AbsentClassExcluded) {
  const auto g = group_metrics({{1, 0}, {1, 0}}, {{1, 0}, {1, 0}}, "g", 2);
  EXPECT_EQ(g.f1, 1.0);
}

TEST(GroupMetrics, LengthMismatchIsUsageError) {
  EXPECT_THROW(group_metrics({{1}}, {{1}, {0}}, "g", 1), UsageError);
}

TEST(MacroReport, SingleGroupEqualsGroup) {
  const auto r = macro_report({{"g", 0.3, 0.6, 0.4, 2}}, 5);
  EXPECT_EQ(r.precision, 0.3);
  EXPECT_EQ(r.recall, 0.6);
  EXPECT_EQ(r.f1, 0.4);
}

TEST(MacroReport, MeanOfGroupF1) {
  const auto r = macro_report({{"a", 0, 0, 0.4, 0}, {"b", 0, 0, 0.8, 0}}, 1);
  EXPECT_NEAR(r.f1, 0.6, 1e-15);
}

TEST(MacroReport, F1IsNotHarmonicOfMacroPR) {
  const auto r = macro_report({{"a", 1.0, 0.2, 2 * 0.2 / 1.2, 0}, {"b", 0.2, 1.0, 2 * 0.2 / 1.2, 0}}, 1);
  const double harmonic = 2 * r.precision * r.recall / (r.precision + r.recall);
  EXPECT_GT(std::abs(r.f1 - harmonic), 0.1);
}

TEST(Evaluate, MatchesBruteForceTally) {
  const auto schema = default_schema();
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 30)(rng);
    std::vector<LabelVector> p, t;
    for (std::size_t i = 0; i < n; ++i) {
      p.push_back(oracle::random_labels(schema, rng));
      t.push_back(oracle::random_labels(schema, rng));
    }
    const auto got = evaluate(p, t, schema);
    const auto want = oracle::macro_scores(p, t, schema);
    EXPECT_NEAR(got.precision, want.precision, 1e-12);
    EXPECT_NEAR(got.recall, want.recall, 1e-12);
    EXPECT_NEAR(got.f1, want.f1, 1e-12);
  }
}

TEST(Evaluate, PermutationAndDuplicationInvariant) {
  const auto schema = default_schema();
  std::mt19937_64 rng(22);
  std::vector<LabelVector> p, t;
  for (int i = 0; i < 20; ++i) {
    p.push_back(oracle::random_labels(schema, rng));
    t.push_back(oracle::random_labels(schema, rng));
  }
  const auto base = evaluate(p, t, schema);
  auto p2 = p, t2 = t;
  std::reverse(p2.begin(), p2.end());
  std::reverse(t2.begin(), t2.end());
  EXPECT_NEAR(evaluate(p2, t2, schema).f1, base.f1, 1e-12);
  p2.insert(p2.end(), p.begin(), p.end());
  t2.insert(t2.end(), t.begin(), t.end());
  const auto doubled = evaluate(p2, t2, schema);
  EXPECT_NEAR(doubled.f1, base.f1, 1e-12);
  EXPECT_NEAR(doubled.precision, base.precision, 1e-12);
  EXPECT_NEAR(doubled.recall, base.recall, 1e-12);
}

TEST(Evaluate, ValuesInUnitInterval) {
  const auto schema = default_schema();
  std::mt19937_64 rng(23);
  std::vector<LabelVector> p, t;
  for (int i = 0; i < 10; ++i) {
    p.push_back(oracle::random_labels(schema, rng));
    t.push_back(oracle::random_labels(schema, rng));
  }
  const auto r = evaluate(p, t, schema);
  EXPECT_EQ(r.groups.size(), 14u);
  for (const auto& g : r.groups) {
    for (double v : {g.precision, g.recall, g.f1}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Report, TsvLayout) {
  const auto r = macro_report({{"a", 0.5, 0.25, 1.0 / 3, 4}}, 7);
  EXPECT_EQ(report_tsv(r),
            "group\tprecision\trecall\tf1\tsupport\n"
            "a\t0.5000\t0.2500\t0.3333\t4\n"
            "MACRO\t0.5000\t0.2500\t0.3333\t7\n");
}

TEST(Report, YamlMirrorParses) {
  const auto r = macro_report({{"a", 0.5, 0.25, 1.0 / 3, 4}}, 7);
  const auto y = YAML::Load(report_yaml(r));
  EXPECT_EQ(y["tracklets"].as<int>(), 7);
  EXPECT_EQ(y["macro"]["f1"].as<std::string>(), "0.3333");
  EXPECT_EQ(y["groups"][0]["group"].as<std::string>(), "a");
}
