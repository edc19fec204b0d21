#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "safeload/core.hpp"

namespace safeload::rules {

/// Single threshold predicate: features[feature_index] > threshold.
struct SingleFeatureRule {
  std::size_t feature_index = 0;
  double threshold = 0.0;

  bool matches(const FeatureVector& v) const {
    if (feature_index >= v.size()) {
      throw DimensionError("rule feature index out of range");
    }
    return v[feature_index] > threshold;
  }

  friend bool operator==(const SingleFeatureRule&,
                         const SingleFeatureRule&) = default;
};

/// AND/OR expression tree over single-feature predicates. Interior nodes
/// have at least two children and never share their connective with a
/// child (trees are kept flattened).
class DiscriminativeRule {
 public:
  enum class Kind : std::uint8_t { Leaf, And, Or };

  struct Node {
    Kind kind = Kind::Leaf;
    SingleFeatureRule leaf;
    std::vector<Node> children;
  };

  DiscriminativeRule() = default;
  explicit DiscriminativeRule(Node root);

  static DiscriminativeRule make_leaf(SingleFeatureRule r);
  /// Builds an AND/OR node. Children with the same connective are
  /// flattened into the new node; a single child collapses to itself.
  static DiscriminativeRule combine(Kind kind,
                                    std::vector<DiscriminativeRule> children);

  bool evaluate(const FeatureVector& v) const { return eval_node(root_, v); }
  std::size_t leaf_count() const;
  std::size_t max_feature_index() const;
  const Node& root() const { return root_; }

  /// Prefix text form, e.g. AND(OR(GT(18,1),GT(63,0)),GT(52,1048576)).
  std::string serialize() const;
  static DiscriminativeRule parse(const std::string& text);

  /// Sorts every interior node's children by serialized form, recursively.
  /// Evaluation is unchanged; the text form becomes canonical.
  void canonicalize();

 private:
  static bool eval_node(const Node& n, const FeatureVector& v);
  Node root_;
};

struct RuleStats {
  double positive_retention = 1.0;
  double negative_retention = 1.0;
  // Set when the record set lacked the corresponding class; the retention
  // above is then the 1.0 convention, not a measurement.
  bool degenerate_positive = false;
  bool degenerate_negative = false;
};

RuleStats rule_stats(const DiscriminativeRule& rule,
                     std::span<const QueryRecord> records);

/// One candidate per (feature, threshold) pair for every feature in the
/// operator-count, operator-cardinality, and oom-indicator groups.
/// Thresholds are 0 plus the distinct values of the feature over positive
/// records, ascending; candidates are ordered by feature then threshold.
std::vector<SingleFeatureRule> build_candidate_rules(
    std::span<const QueryRecord> records, const FeatureSchema& schema);

struct BaseRuleSelection {
  std::array<SingleFeatureRule, 4> rules;
  // Per-group flag (operator-count, operator-cardinality, oom-indicator):
  // no candidate met the retention bound, best-available used instead.
  std::array<bool, 3> group_relaxed = {false, false, false};
  // Same, for the low-negative-retention pick.
  bool precision_relaxed = false;
};

/// Picks one rule per candidate group with positive retention >= pos_bound
/// minimizing negative retention, plus one rule with negative retention
/// < neg_bound maximizing positive retention. Ties break toward lower
/// negative retention, then lower feature index, then lower threshold.
BaseRuleSelection select_base_rules(
    std::span<const SingleFeatureRule> candidates,
    std::span<const QueryRecord> records, const FeatureSchema& schema,
    double pos_bound = 0.95, double neg_bound = 0.03);

/// All distinct AND/OR expressions over nonempty subsets of the base rules,
/// one representative per associativity/commutativity class, children in
/// canonical order. For 4 distinct leaves this yields 100 expressions.
std::vector<DiscriminativeRule> enumerate_expressions(
    std::span<const SingleFeatureRule> base);

struct GeneratedRule {
  DiscriminativeRule rule;
  RuleStats validation_stats;
  BaseRuleSelection base;
};

/// Builds candidates and base rules from the training records, then selects
/// the expression over them that maximizes, on the validation records:
/// positive retention first (restricted to expressions reaching pos_bound
/// when any does), then filtering rate, with fewer leaves and smaller
/// serialized form as final tie-breaks.
GeneratedRule generate_rule(std::span<const QueryRecord> training,
                            std::span<const QueryRecord> validation,
                            const FeatureSchema& schema,
                            double pos_bound = 0.95, double neg_bound = 0.03);

}  // namespace safeload::rules
