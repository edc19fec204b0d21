#include "safeload/rules.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <map>
#include <set>

#include "safeload/text.hpp"

namespace safeload::rules {

namespace {

void validate_node(const DiscriminativeRule::Node& n) {
  if (n.kind == DiscriminativeRule::Kind::Leaf) {
    if (!n.children.empty()) {
      throw ConfigError("leaf rule node cannot have children");
    }
    return;
  }
  if (n.children.size() < 2) {
    throw ConfigError("interior rule node needs at least two children");
  }
  for (const auto& c : n.children) {
    if (c.kind == n.kind) {
      throw ConfigError("rule tree is not flattened");
    }
    validate_node(c);
  }
}

std::size_t count_leaves(const DiscriminativeRule::Node& n) {
  if (n.kind == DiscriminativeRule::Kind::Leaf) return 1;
  std::size_t total = 0;
  for (const auto& c : n.children) total += count_leaves(c);
  return total;
}

std::size_t max_index(const DiscriminativeRule::Node& n) {
  if (n.kind == DiscriminativeRule::Kind::Leaf) return n.leaf.feature_index;
  std::size_t best = 0;
  for (const auto& c : n.children) best = std::max(best, max_index(c));
  return best;
}

void serialize_node(const DiscriminativeRule::Node& n, std::string& out) {
  switch (n.kind) {
    case DiscriminativeRule::Kind::Leaf:
      out += "GT(";
      out += format_i64(static_cast<std::int64_t>(n.leaf.feature_index));
      out += ',';
      out += format_double(n.leaf.threshold);
      out += ')';
      return;
    case DiscriminativeRule::Kind::And:
      out += "AND(";
      break;
    case DiscriminativeRule::Kind::Or:
      out += "OR(";
      break;
  }
  for (std::size_t i = 0; i < n.children.size(); ++i) {
    if (i > 0) out += ',';
    serialize_node(n.children[i], out);
  }
  out += ')';
}

void canonicalize_node(DiscriminativeRule::Node& n) {
  if (n.kind == DiscriminativeRule::Kind::Leaf) return;
  for (auto& c : n.children) canonicalize_node(c);
  std::sort(n.children.begin(), n.children.end(),
            [](const DiscriminativeRule::Node& a,
               const DiscriminativeRule::Node& b) {
              std::string sa, sb;
              serialize_node(a, sa);
              serialize_node(b, sb);
              return sa < sb;
            });
}

// Recursive-descent parser for the prefix text form.
struct RuleParser {
  const std::string& text;
  std::size_t pos = 0;

  [[noreturn]] void fail(const std::string& what) {
    throw ParseError("rule: " + what, 1, pos + 1);
  }

  char peek() {
    if (pos >= text.size()) fail("unexpected end of input");
    return text[pos];
  }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos;
  }

  bool consume_word(std::string_view w) {
    if (text.compare(pos, w.size(), w) == 0) {
      pos += w.size();
      return true;
    }
    return false;
  }

  std::string_view token_until(std::string_view stops) {
    const std::size_t start = pos;
    while (pos < text.size() && stops.find(text[pos]) == std::string_view::npos)
      ++pos;
    if (pos == start) fail("empty token");
    return std::string_view(text).substr(start, pos - start);
  }

  DiscriminativeRule::Node parse_node() {
    DiscriminativeRule::Node n;
    if (consume_word("GT(")) {
      n.kind = DiscriminativeRule::Kind::Leaf;
      std::int64_t idx = 0;
      if (!try_parse_i64(token_until(","), idx) || idx < 0) {
        fail("bad feature index");
      }
      expect(',');
      double thr = 0;
      if (!try_parse_double(token_until(")"), thr)) fail("bad threshold");
      expect(')');
      n.leaf = {static_cast<std::size_t>(idx), thr};
      return n;
    }
    if (consume_word("AND(")) {
      n.kind = DiscriminativeRule::Kind::And;
    } else if (consume_word("OR(")) {
      n.kind = DiscriminativeRule::Kind::Or;
    } else {
      fail("expected GT, AND, or OR");
    }
    n.children.push_back(parse_node());
    while (peek() == ',') {
      ++pos;
      n.children.push_back(parse_node());
    }
    expect(')');
    return n;
  }
};

}  // namespace

DiscriminativeRule::DiscriminativeRule(Node root) : root_(std::move(root)) {
  validate_node(root_);
  if (count_leaves(root_) > 4) {
    throw ConfigError("discriminative rule exceeds four leaves");
  }
}

DiscriminativeRule DiscriminativeRule::make_leaf(SingleFeatureRule r) {
  Node n;
  n.kind = Kind::Leaf;
  n.leaf = r;
  return DiscriminativeRule(std::move(n));
}

DiscriminativeRule DiscriminativeRule::combine(
    Kind kind, std::vector<DiscriminativeRule> children) {
  if (kind == Kind::Leaf) throw ConfigError("combine needs AND or OR");
  if (children.empty()) throw ConfigError("combine needs children");
  if (children.size() == 1) return std::move(children[0]);
  Node n;
  n.kind = kind;
  for (auto& c : children) {
    if (c.root_.kind == kind) {
      for (auto& grand : c.root_.children) {
        n.children.push_back(std::move(grand));
      }
    } else {
      n.children.push_back(std::move(c.root_));
    }
  }
  return DiscriminativeRule(std::move(n));
}

bool DiscriminativeRule::eval_node(const Node& n, const FeatureVector& v) {
  switch (n.kind) {
    case Kind::Leaf:
      return n.leaf.matches(v);
    case Kind::And:
      for (const auto& c : n.children) {
        if (!eval_node(c, v)) return false;
      }
      return true;
    case Kind::Or:
      for (const auto& c : n.children) {
        if (eval_node(c, v)) return true;
      }
      return false;
  }
  return false;
}

std::size_t DiscriminativeRule::leaf_count() const {
  return count_leaves(root_);
}

std::size_t DiscriminativeRule::max_feature_index() const {
  return max_index(root_);
}

std::string DiscriminativeRule::serialize() const {
  std::string out;
  serialize_node(root_, out);
  return out;
}

DiscriminativeRule DiscriminativeRule::parse(const std::string& text) {
  RuleParser p{text};
  Node root = p.parse_node();
  if (p.pos != text.size()) p.fail("trailing characters");
  return DiscriminativeRule(std::move(root));
}

void DiscriminativeRule::canonicalize() { canonicalize_node(root_); }

RuleStats rule_stats(const DiscriminativeRule& rule,
                     std::span<const QueryRecord> records) {
  if (records.empty()) throw NoPositives("rule_stats on empty record set");
  std::size_t pos = 0, neg = 0, pos_hit = 0, neg_hit = 0;
  for (const auto& r : records) {
    const bool hit = rule.evaluate(r.features);
    if (r.label == Label::MO) {
      ++pos;
      pos_hit += hit;
    } else {
      ++neg;
      neg_hit += hit;
    }
  }
  RuleStats s;
  s.degenerate_positive = pos == 0;
  s.degenerate_negative = neg == 0;
  if (pos > 0) {
    s.positive_retention = static_cast<double>(pos_hit) / pos;
  }
  if (neg > 0) {
    s.negative_retention = static_cast<double>(neg_hit) / neg;
  }
  return s;
}

namespace {

// Per-feature sorted value arrays over both classes. Retention of rule
// (f > t) is a suffix count, so candidate stats cost one binary search.
struct FeatureIndex {
  std::vector<std::vector<double>> pos_values;  // sorted, per feature
  std::vector<std::vector<double>> neg_values;
  std::size_t pos_total = 0;
  std::size_t neg_total = 0;

  FeatureIndex(std::span<const QueryRecord> records,
               const std::vector<std::size_t>& features,
               std::size_t dimension) {
    pos_values.resize(dimension);
    neg_values.resize(dimension);
    for (const auto& r : records) {
      const bool mo = r.label == Label::MO;
      pos_total += mo;
      neg_total += !mo;
      auto& dst = mo ? pos_values : neg_values;
      for (std::size_t f : features) dst[f].push_back(r.features[f]);
    }
    for (std::size_t f : features) {
      std::sort(pos_values[f].begin(), pos_values[f].end());
      std::sort(neg_values[f].begin(), neg_values[f].end());
    }
  }

  double positive_retention(std::size_t f, double t) const {
    if (pos_total == 0) return 1.0;
    const auto& v = pos_values[f];
    const auto it = std::upper_bound(v.begin(), v.end(), t);
    return static_cast<double>(v.end() - it) / pos_total;
  }

  double negative_retention(std::size_t f, double t) const {
    if (neg_total == 0) return 1.0;
    const auto& v = neg_values[f];
    const auto it = std::upper_bound(v.begin(), v.end(), t);
    return static_cast<double>(v.end() - it) / neg_total;
  }
};

std::vector<std::size_t> candidate_features(const FeatureSchema& schema) {
  std::vector<std::size_t> out;
  for (const char* name :
       {"operator-count", "operator-cardinality", "oom-indicator"}) {
    const auto& g = schema.group(name);
    for (std::size_t f = g.begin; f < g.end; ++f) out.push_back(f);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<SingleFeatureRule> build_candidate_rules(
    std::span<const QueryRecord> records, const FeatureSchema& schema) {
  bool any_positive = false;
  for (const auto& r : records) {
    if (r.label == Label::MO) {
      any_positive = true;
      break;
    }
    if (r.features.size() != schema.dimension()) {
      throw DimensionError("record does not match schema dimension");
    }
  }
  if (!any_positive) {
    throw NoPositives("candidate rules need at least one positive record");
  }

  std::vector<SingleFeatureRule> out;
  for (std::size_t f : candidate_features(schema)) {
    std::set<double> thresholds = {0.0};
    for (const auto& r : records) {
      if (r.features.size() != schema.dimension()) {
        throw DimensionError("record does not match schema dimension");
      }
      if (r.label == Label::MO) thresholds.insert(r.features[f]);
    }
    for (double t : thresholds) out.push_back({f, t});
  }
  return out;
}

BaseRuleSelection select_base_rules(
    std::span<const SingleFeatureRule> candidates,
    std::span<const QueryRecord> records, const FeatureSchema& schema,
    double pos_bound, double neg_bound) {
  if (candidates.empty()) throw ConfigError("no candidate rules");
  if (records.empty()) throw NoPositives("no records for rule selection");

  const std::vector<std::size_t> features = candidate_features(schema);
  FeatureIndex index(records, features, schema.dimension());
  if (index.pos_total == 0) throw NoPositives("no positive records");
  if (index.neg_total == 0) throw NoNegatives("no negative records");

  struct Scored {
    SingleFeatureRule rule;
    double pr;
    double nr;
  };
  std::vector<Scored> scored;
  scored.reserve(candidates.size());
  for (const auto& c : candidates) {
    scored.push_back({c, index.positive_retention(c.feature_index, c.threshold),
                      index.negative_retention(c.feature_index, c.threshold)});
  }

  // Lower negative retention, then lower feature index, then lower threshold.
  auto preferred = [](const Scored& a, const Scored& b) {
    if (a.nr != b.nr) return a.nr < b.nr;
    if (a.rule.feature_index != b.rule.feature_index) {
      return a.rule.feature_index < b.rule.feature_index;
    }
    return a.rule.threshold < b.rule.threshold;
  };
  // Relaxed fallback: maximal positive retention, then the tie-break above.
  auto fallback_preferred = [&](const Scored& a, const Scored& b) {
    if (a.pr != b.pr) return a.pr > b.pr;
    return preferred(a, b);
  };

  BaseRuleSelection sel;
  const char* group_names[3] = {"operator-count", "operator-cardinality",
                                "oom-indicator"};
  for (int gi = 0; gi < 3; ++gi) {
    const auto& g = schema.group(group_names[gi]);
    const Scored* best = nullptr;
    const Scored* best_any = nullptr;
    for (const auto& s : scored) {
      if (s.rule.feature_index < g.begin || s.rule.feature_index >= g.end) {
        continue;
      }
      if (!best_any || fallback_preferred(s, *best_any)) best_any = &s;
      if (s.pr >= pos_bound && (!best || preferred(s, *best))) best = &s;
    }
    if (!best_any) throw ConfigError("group has no candidates");
    if (!best) {
      sel.group_relaxed[gi] = true;
      best = best_any;
    }
    sel.rules[gi] = best->rule;
  }

  // High-precision pick: negative retention below the bound, maximal
  // positive retention; fall back to best-available when nothing qualifies.
  {
    const Scored* best = nullptr;
    const Scored* best_any = nullptr;
    for (const auto& s : scored) {
      if (!best_any || fallback_preferred(s, *best_any)) best_any = &s;
      if (s.nr >= neg_bound) continue;
      if (!best || s.pr > best->pr || (s.pr == best->pr && preferred(s, *best))) {
        best = &s;
      }
    }
    if (!best) {
      sel.precision_relaxed = true;
      best = best_any;
    }
    sel.rules[3] = best->rule;
  }
  return sel;
}

namespace {

using Kind = DiscriminativeRule::Kind;

// All canonical trees over the leaf subset encoded by `mask`, rooted either
// at a single leaf (singletons) or at `kind`. Children of an interior node
// are the blocks of a set partition; blocks of size >= 2 recurse with the
// opposite connective, which is exactly the associativity-flattened shape
// space of all full parenthesizations.
void trees_over(std::uint32_t mask, Kind kind,
                std::span<const SingleFeatureRule> base,
                std::vector<DiscriminativeRule>& out) {
  std::vector<int> members;
  for (int i = 0; i < static_cast<int>(base.size()); ++i) {
    if (mask & (1u << i)) members.push_back(i);
  }
  if (members.size() == 1) {
    out.push_back(DiscriminativeRule::make_leaf(base[members[0]]));
    return;
  }

  // Enumerate set partitions into >= 2 blocks via restricted growth strings.
  const std::size_t n = members.size();
  std::vector<int> assign(n, 0);
  while (true) {
    int blocks = 0;
    for (std::size_t i = 0; i < n; ++i) blocks = std::max(blocks, assign[i] + 1);
    if (blocks >= 2) {
      std::vector<std::uint32_t> block_masks(blocks, 0);
      for (std::size_t i = 0; i < n; ++i) {
        block_masks[assign[i]] |= 1u << members[i];
      }
      // Cartesian product of per-block subtree choices.
      std::vector<std::vector<DiscriminativeRule>> options(blocks);
      const Kind child_kind = kind == Kind::And ? Kind::Or : Kind::And;
      for (int b = 0; b < blocks; ++b) {
        trees_over(block_masks[b], child_kind, base, options[b]);
      }
      std::vector<std::size_t> pick(blocks, 0);
      while (true) {
        std::vector<DiscriminativeRule> children;
        children.reserve(blocks);
        for (int b = 0; b < blocks; ++b) {
          children.push_back(options[b][pick[b]]);
        }
        out.push_back(DiscriminativeRule::combine(kind, std::move(children)));
        int b = blocks - 1;
        while (b >= 0 && ++pick[b] == options[b].size()) pick[b--] = 0;
        if (b < 0) break;
      }
    }
    // Next restricted growth string.
    std::size_t i = n - 1;
    while (i > 0) {
      int cap = 0;
      for (std::size_t j = 0; j < i; ++j) cap = std::max(cap, assign[j]);
      if (assign[i] <= cap) {
        ++assign[i];
        break;
      }
      assign[i] = 0;
      --i;
    }
    if (i == 0) break;
  }
}

}  // namespace

std::vector<DiscriminativeRule> enumerate_expressions(
    std::span<const SingleFeatureRule> base) {
  if (base.empty() || base.size() > 4) {
    throw ConfigError("expression enumeration expects 1 to 4 base rules");
  }
  std::vector<DiscriminativeRule> out;
  std::set<std::string> seen;
  const std::uint32_t full = (1u << base.size()) - 1;
  for (std::uint32_t mask = 1; mask <= full; ++mask) {
    std::vector<DiscriminativeRule> raw;
    if (std::popcount(mask) == 1) {
      trees_over(mask, Kind::And, base, raw);
    } else {
      trees_over(mask, Kind::And, base, raw);
      trees_over(mask, Kind::Or, base, raw);
    }
    for (auto& r : raw) {
      r.canonicalize();
      if (seen.insert(r.serialize()).second) out.push_back(std::move(r));
    }
  }
  return out;
}

GeneratedRule generate_rule(std::span<const QueryRecord> training,
                            std::span<const QueryRecord> validation,
                            const FeatureSchema& schema, double pos_bound,
                            double neg_bound) {
  for (auto set : {training, validation}) {
    bool pos = false, neg = false;
    for (const auto& r : set) {
      (r.label == Label::MO ? pos : neg) = true;
      if (pos && neg) break;
    }
    if (!pos) throw NoPositives("rule generation needs positive records");
    if (!neg) throw NoNegatives("rule generation needs negative records");
  }

  const auto candidates = build_candidate_rules(training, schema);
  const auto base =
      select_base_rules(candidates, training, schema, pos_bound, neg_bound);
  auto expressions = enumerate_expressions(base.rules);

  // Positive retention dominates (restricting to expressions above the
  // bound whenever any reaches it selects the same maximum), then filtering
  // rate, then fewer leaves, then the smaller serialized form.
  GeneratedRule out;
  out.base = base;
  std::string best_text;
  bool have_best = false;
  RuleStats best_stats;
  std::size_t best_leaves = 0;
  for (auto& e : expressions) {
    const RuleStats s = rule_stats(e, validation);
    const std::size_t leaves = e.leaf_count();
    const std::string text = e.serialize();
    bool better = false;
    if (!have_best) {
      better = true;
    } else if (s.positive_retention != best_stats.positive_retention) {
      better = s.positive_retention > best_stats.positive_retention;
    } else if (s.negative_retention != best_stats.negative_retention) {
      better = s.negative_retention < best_stats.negative_retention;
    } else if (leaves != best_leaves) {
      better = leaves < best_leaves;
    } else {
      better = text < best_text;
    }
    if (better) {
      have_best = true;
      out.rule = std::move(e);
      best_stats = s;
      best_leaves = leaves;
      best_text = text;
    }
  }
  out.validation_stats = best_stats;
  return out;
}

}  // namespace safeload::rules
