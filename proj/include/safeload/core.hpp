#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace safeload {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DomainError : Error {
  using Error::Error;
};

struct DimensionError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

/// Malformed field while reading a text artifact. Line and column are 1-based.
struct ParseError : Error {
  std::size_t line = 0;
  std::size_t column = 0;
  ParseError(const std::string& what, std::size_t line_, std::size_t column_)
      : Error(what + " (line " + std::to_string(line_) + ", col " +
              std::to_string(column_) + ")"),
        line(line_),
        column(column_) {}
};

struct OrderError : Error {
  using Error::Error;
};

struct SchemaMismatch : Error {
  using Error::Error;
};

struct CorruptArtifact : Error {
  using Error::Error;
};

struct NoPositives : Error {
  using Error::Error;
};

struct NoNegatives : Error {
  using Error::Error;
};

struct SingleClass : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

enum class Label : std::uint8_t { NonMO = 0, MO = 1 };

enum class Verdict : std::uint8_t { Admit, Offload };

enum class DecisionSource : std::uint8_t {
  RuleFilter,
  CorrectionIndex,
  Model,
  QuotaClamp,
};

enum class Observed : std::uint8_t { Succeeded, MOFailed };

enum class OutcomeClass : std::uint8_t { TP, FP, FN, TN };

const char* to_string(Label v);
const char* to_string(Verdict v);
const char* to_string(DecisionSource v);
const char* to_string(OutcomeClass v);

/// Dense plan/runtime feature vector. Every element must be finite.
class FeatureVector {
 public:
  FeatureVector() = default;
  explicit FeatureVector(std::vector<double> values);

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  const std::vector<double>& values() const { return values_; }

  friend bool operator==(const FeatureVector& a, const FeatureVector& b) {
    return a.values_ == b.values_;
  }

 private:
  std::vector<double> values_;
};

struct FeatureGroup {
  std::string name;
  std::size_t begin = 0;  // inclusive
  std::size_t end = 0;    // exclusive
};

/// Contiguous, disjoint grouping of feature indices. Groups must cover
/// [0, dimension) exactly; query-level indices precede cluster-level ones.
class FeatureSchema {
 public:
  FeatureSchema(std::size_t dimension, std::vector<FeatureGroup> groups,
                std::size_t query_level_end);

  static FeatureSchema default_schema();

  std::size_t dimension() const { return dimension_; }
  const std::vector<FeatureGroup>& groups() const { return groups_; }
  const FeatureGroup& group(const std::string& name) const;
  bool has_group(const std::string& name) const;

  std::pair<std::size_t, std::size_t> query_level_range() const {
    return {0, query_level_end_};
  }
  std::pair<std::size_t, std::size_t> cluster_level_range() const {
    return {query_level_end_, dimension_};
  }

 private:
  std::size_t dimension_ = 0;
  std::vector<FeatureGroup> groups_;
  std::size_t query_level_end_ = 0;
};

struct QueryRecord {
  std::string query_id;
  std::int64_t arrival_ms = 0;
  std::string cluster_id;
  FeatureVector features;
  double cpu_time_s = 0.0;
  Label label = Label::NonMO;
};

struct Decision {
  Verdict verdict = Verdict::Admit;
  DecisionSource source = DecisionSource::RuleFilter;
  double confidence = 0.0;
  // Quota charge for this decision; zero for every Admit.
  double quota_cost_charged = 0.0;
};

struct Outcome {
  std::string query_id;
  Observed observed = Observed::Succeeded;
  std::int64_t completed_ms = 0;
};

/// Confusion-matrix cell for a decision against the ground-truth label.
/// Offload counts as the positive prediction.
OutcomeClass classify_outcome(const Decision& decision, Label label);

/// True iff the id is non-empty and uses only [A-Za-z0-9_-].
bool valid_id(const std::string& id);

}  // namespace safeload
