#include "doctest.h"

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "safeload/rng.hpp"
#include "safeload/rules.hpp"
#include "safeload/workloadgen.hpp"

using namespace safeload;
using namespace safeload::rules;

namespace {

QueryRecord record(std::vector<double> features, Label label,
                   const std::string& cluster = "c0") {
  static int counter = 0;
  QueryRecord r;
  r.query_id = "q" + std::to_string(counter++);
  r.arrival_ms = counter;
  r.cluster_id = cluster;
  r.features = FeatureVector(std::move(features));
  r.cpu_time_s = 1.0;
  r.label = label;
  return r;
}

// Vector sized for the default schema with a handful of landmark values set.
FeatureVector probe(double join, double window, double scan, double oom) {
  const auto schema = FeatureSchema::default_schema();
  const auto lm = workloadgen::Landmarks::resolve(schema);
  std::vector<double> v(schema.dimension(), 0.0);
  v[lm.join_count] = join;
  v[lm.window_rows] = window;
  v[lm.scan_bytes] = scan;
  v[lm.oom_prev] = oom;
  return FeatureVector(v);
}

}  // namespace

TEST_CASE("single predicate is strict greater-than") {
  SingleFeatureRule r{2, 5.0};
  CHECK(r.matches(FeatureVector({0, 0, 5.5})));
  CHECK_FALSE(r.matches(FeatureVector({0, 0, 5.0})));
  CHECK_THROWS_AS(r.matches(FeatureVector({1.0})), DimensionError);
}

TEST_CASE("composite rule evaluation on landmark probes") {
  const auto schema = FeatureSchema::default_schema();
  const auto rule = workloadgen::planted_rule(schema);
  CHECK(rule.evaluate(probe(2, 0, 2e6, 1)));
  CHECK_FALSE(rule.evaluate(probe(2, 0, 100, 1)));
  CHECK_FALSE(rule.evaluate(probe(0, 0, 2e6, 1)));
  CHECK(rule.evaluate(probe(0, 3, 2e6, 1)));
  CHECK_FALSE(rule.evaluate(probe(2, 0, 2e6, 0)));
}

TEST_CASE("combine flattens nested connectives and collapses singletons") {
  const auto a = DiscriminativeRule::make_leaf({0, 1.0});
  const auto b = DiscriminativeRule::make_leaf({1, 2.0});
  const auto c = DiscriminativeRule::make_leaf({2, 3.0});

  auto inner = DiscriminativeRule::combine(DiscriminativeRule::Kind::And,
                                           {a, b});
  auto outer = DiscriminativeRule::combine(DiscriminativeRule::Kind::And,
                                           {inner, c});
  CHECK(outer.root().children.size() == 3);
  CHECK(outer.leaf_count() == 3);
  CHECK(outer.serialize() == "AND(GT(0,1),GT(1,2),GT(2,3))");

  auto single = DiscriminativeRule::combine(DiscriminativeRule::Kind::Or, {a});
  CHECK(single.root().kind == DiscriminativeRule::Kind::Leaf);
  CHECK(single.serialize() == "GT(0,1)");

  auto mixed = DiscriminativeRule::combine(DiscriminativeRule::Kind::Or,
                                           {inner, c});
  CHECK(mixed.serialize() == "OR(AND(GT(0,1),GT(1,2)),GT(2,3))");
}

TEST_CASE("duplicated operands do not change evaluation") {
  const auto r = DiscriminativeRule::make_leaf({0, 1.5});
  const auto and_rr =
      DiscriminativeRule::combine(DiscriminativeRule::Kind::And, {r, r});
  const auto or_rr =
      DiscriminativeRule::combine(DiscriminativeRule::Kind::Or, {r, r});
  for (double x : {0.0, 1.5, 1.6, 100.0}) {
    const FeatureVector v({x});
    CHECK(and_rr.evaluate(v) == r.evaluate(v));
    CHECK(or_rr.evaluate(v) == r.evaluate(v));
  }
}

TEST_CASE("serialization round-trips and canonicalization is stable") {
  const std::string text = "AND(OR(GT(18,1),GT(63,0)),GT(52,1048576),GT(161,0))";
  auto rule = DiscriminativeRule::parse(text);
  CHECK(rule.serialize() == text);
  CHECK(rule.leaf_count() == 4);
  CHECK(rule.max_feature_index() == 161);

  auto shuffled =
      DiscriminativeRule::parse("AND(GT(161,0),OR(GT(63,0),GT(18,1)),GT(52,1048576))");
  shuffled.canonicalize();
  rule.canonicalize();
  CHECK(shuffled.serialize() == rule.serialize());

  CHECK_THROWS_AS(DiscriminativeRule::parse("AND(GT(1,2)"), Error);
  CHECK_THROWS_AS(DiscriminativeRule::parse("NOT(GT(1,2))"), Error);
  CHECK_THROWS_AS(DiscriminativeRule::parse(""), Error);
}

TEST_CASE("rule_stats counts retention exactly") {
  std::vector<QueryRecord> records;
  for (int i = 0; i < 2; ++i) records.push_back(record({10.0}, Label::MO));
  for (int i = 0; i < 8; ++i) records.push_back(record({0.0}, Label::NonMO));

  const auto everything = DiscriminativeRule::make_leaf({0, -1.0});
  auto all_stats = rule_stats(everything, records);
  CHECK(all_stats.positive_retention == 1.0);
  CHECK(all_stats.negative_retention == 1.0);

  const auto only_pos = DiscriminativeRule::make_leaf({0, 5.0});
  auto pos_stats = rule_stats(only_pos, records);
  CHECK(pos_stats.positive_retention == 1.0);
  CHECK(pos_stats.negative_retention == 0.0);
  CHECK_FALSE(pos_stats.degenerate_positive);
  CHECK_FALSE(pos_stats.degenerate_negative);
}

TEST_CASE("rule_stats flags absent classes") {
  std::vector<QueryRecord> only_neg = {record({1.0}, Label::NonMO)};
  const auto r = DiscriminativeRule::make_leaf({0, 0.0});
  auto stats = rule_stats(r, only_neg);
  CHECK(stats.degenerate_positive);
  CHECK(stats.positive_retention == 1.0);
  CHECK_FALSE(stats.degenerate_negative);
}

TEST_CASE("candidate thresholds come from positive values plus zero") {
  const auto schema = FeatureSchema::default_schema();
  const auto lm = workloadgen::Landmarks::resolve(schema);
  std::vector<QueryRecord> records;
  auto with_join = [&](double j, Label label) {
    std::vector<double> v(schema.dimension(), 0.0);
    v[lm.join_count] = j;
    records.push_back(record(std::move(v), label));
  };
  with_join(2, Label::MO);
  with_join(5, Label::MO);
  with_join(1, Label::NonMO);

  const auto candidates = build_candidate_rules(records, schema);
  std::vector<double> join_thresholds;
  for (const auto& c : candidates) {
    if (c.feature_index == lm.join_count)
      join_thresholds.push_back(c.threshold);
  }
  CHECK(join_thresholds == std::vector<double>{0.0, 2.0, 5.0});

  // Candidates are confined to the count, cardinality, and oom groups.
  const auto& cfg = schema.group("execution-config");
  const auto& mem = schema.group("memory-intensive");
  for (const auto& c : candidates) {
    CHECK_FALSE((c.feature_index >= cfg.begin && c.feature_index < cfg.end));
    CHECK_FALSE((c.feature_index >= mem.begin && c.feature_index < mem.end));
  }

  // Ordered by feature index, then threshold.
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const auto& a = candidates[i - 1];
    const auto& b = candidates[i];
    CHECK((a.feature_index < b.feature_index ||
           (a.feature_index == b.feature_index && a.threshold < b.threshold)));
  }

  CHECK_THROWS_AS(
      build_candidate_rules(
          std::vector<QueryRecord>{
              record(std::vector<double>(schema.dimension(), 0.0),
                     Label::NonMO)},
          schema),
      NoPositives);
}

TEST_CASE("expression enumeration counts by base size") {
  std::vector<SingleFeatureRule> base;
  const std::size_t expected[] = {1, 4, 17, 100};
  for (std::size_t n = 1; n <= 4; ++n) {
    base.push_back({n - 1, static_cast<double>(n)});
    const auto exprs = enumerate_expressions(base);
    CHECK(exprs.size() == expected[n - 1]);
    // All serialized forms distinct.
    std::set<std::string> seen;
    for (const auto& e : exprs) seen.insert(e.serialize());
    CHECK(seen.size() == exprs.size());
  }
}

TEST_CASE("raising a leaf threshold never raises retention") {
  Rng rng = Rng::stream(3, "rules.monotone");
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<QueryRecord> records;
    for (int i = 0; i < 12; ++i) {
      records.push_back(record({rng.uniform(0, 10), rng.uniform(0, 10)},
                               rng.chance(0.4) ? Label::MO : Label::NonMO));
    }
    const double lo = rng.uniform(0, 5);
    const double hi = lo + rng.uniform(0, 5);
    const auto other = DiscriminativeRule::make_leaf({1, rng.uniform(0, 10)});
    for (auto kind :
         {DiscriminativeRule::Kind::And, DiscriminativeRule::Kind::Or}) {
      const auto low = DiscriminativeRule::combine(
          kind, {DiscriminativeRule::make_leaf({0, lo}), other});
      const auto high = DiscriminativeRule::combine(
          kind, {DiscriminativeRule::make_leaf({0, hi}), other});
      const auto s_low = rule_stats(low, records);
      const auto s_high = rule_stats(high, records);
      CHECK(s_high.positive_retention <= s_low.positive_retention);
      CHECK(s_high.negative_retention <= s_low.negative_retention);
    }
  }
}

TEST_CASE("a dominant predicate is returned as a single leaf") {
  std::vector<QueryRecord> training;
  std::vector<QueryRecord> validation;
  const auto schema = FeatureSchema::default_schema();
  const auto lm = workloadgen::Landmarks::resolve(schema);
  auto push = [&](std::vector<QueryRecord>& out, double j, Label label) {
    std::vector<double> v(schema.dimension(), 0.0);
    v[lm.join_count] = j;
    out.push_back(record(std::move(v), label));
  };
  // One informative feature: every group winner lands on the same content.
  for (int i = 0; i < 5; ++i) push(training, 4, Label::MO);
  for (int i = 0; i < 5; ++i) push(training, 0, Label::NonMO);
  for (int i = 0; i < 3; ++i) push(validation, 4, Label::MO);
  for (int i = 0; i < 3; ++i) push(validation, 0, Label::NonMO);

  const auto generated = generate_rule(training, validation, schema);
  CHECK(generated.rule.leaf_count() == 1);
  CHECK(generated.validation_stats.positive_retention == 1.0);
  CHECK(generated.validation_stats.negative_retention == 0.0);
}

TEST_CASE("generate_rule requires both classes") {
  const auto schema = FeatureSchema::default_schema();
  std::vector<QueryRecord> pos = {
      record(std::vector<double>(schema.dimension(), 1.0), Label::MO)};
  std::vector<QueryRecord> neg = {
      record(std::vector<double>(schema.dimension(), 0.0), Label::NonMO)};
  std::vector<QueryRecord> both = pos;
  both.push_back(neg[0]);
  CHECK_THROWS_AS(generate_rule(both, pos, schema), NoNegatives);
  CHECK_THROWS_AS(generate_rule(both, neg, schema), NoPositives);
  CHECK_THROWS_AS(generate_rule(neg, both, schema), NoPositives);
}
