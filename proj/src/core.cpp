#include "safeload/core.hpp"

#include <cmath>

namespace safeload {

const char* to_string(Label v) { return v == Label::MO ? "MO" : "NonMO"; }

const char* to_string(Verdict v) {
  return v == Verdict::Admit ? "Admit" : "Offload";
}

const char* to_string(DecisionSource v) {
  switch (v) {
    case DecisionSource::RuleFilter:
      return "RuleFilter";
    case DecisionSource::CorrectionIndex:
      return "CorrectionIndex";
    case DecisionSource::Model:
      return "Model";
    case DecisionSource::QuotaClamp:
      return "QuotaClamp";
  }
  return "?";
}

const char* to_string(OutcomeClass v) {
  switch (v) {
    case OutcomeClass::TP:
      return "TP";
    case OutcomeClass::FP:
      return "FP";
    case OutcomeClass::FN:
      return "FN";
    case OutcomeClass::TN:
      return "TN";
  }
  return "?";
}

FeatureVector::FeatureVector(std::vector<double> values)
    : values_(std::move(values)) {
  for (double v : values_) {
    if (!std::isfinite(v)) {
      throw DomainError("feature vector element is not finite");
    }
  }
}

FeatureSchema::FeatureSchema(std::size_t dimension,
                             std::vector<FeatureGroup> groups,
                             std::size_t query_level_end)
    : dimension_(dimension),
      groups_(std::move(groups)),
      query_level_end_(query_level_end) {
  if (dimension_ == 0) {
    throw ConfigError("schema dimension must be positive");
  }
  std::size_t at = 0;
  for (const auto& g : groups_) {
    if (g.name.empty()) throw ConfigError("schema group without a name");
    if (g.begin != at || g.end <= g.begin) {
      throw ConfigError("schema groups must tile [0, dimension) in order");
    }
    for (const auto& other : groups_) {
      if (&other != &g && other.name == g.name) {
        throw ConfigError("duplicate schema group name: " + g.name);
      }
    }
    at = g.end;
  }
  if (at != dimension_) {
    throw ConfigError("schema groups do not cover the full dimension");
  }
  if (query_level_end_ > dimension_) {
    throw ConfigError("query-level range exceeds dimension");
  }
  // The query/cluster boundary must not cut a group in half.
  for (const auto& g : groups_) {
    if (g.begin < query_level_end_ && g.end > query_level_end_) {
      throw ConfigError("query-level boundary splits group " + g.name);
    }
  }
}

FeatureSchema FeatureSchema::default_schema() {
  std::vector<FeatureGroup> groups = {
      {"operator-count", 0, 23},        {"operator-cardinality", 23, 127},
      {"memory-intensive", 127, 146},   {"execution-config", 146, 148},
      {"resource-metrics", 148, 156},   {"cluster-config", 156, 162},
      {"oom-indicator", 162, 163},
  };
  return FeatureSchema(163, std::move(groups), 148);
}

const FeatureGroup& FeatureSchema::group(const std::string& name) const {
  for (const auto& g : groups_) {
    if (g.name == name) return g;
  }
  throw ConfigError("unknown schema group: " + name);
}

bool FeatureSchema::has_group(const std::string& name) const {
  for (const auto& g : groups_) {
    if (g.name == name) return true;
  }
  return false;
}

OutcomeClass classify_outcome(const Decision& decision, Label label) {
  const bool predicted_mo = decision.verdict == Verdict::Offload;
  const bool actual_mo = label == Label::MO;
  if (predicted_mo) return actual_mo ? OutcomeClass::TP : OutcomeClass::FP;
  return actual_mo ? OutcomeClass::FN : OutcomeClass::TN;
}

bool valid_id(const std::string& id) {
  if (id.empty()) return false;
  for (char c : id) {
    const bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
                    (c >= '0' && c <= '9') || c == '_' || c == '-';
    if (!ok) return false;
  }
  return true;
}

}  // namespace safeload
