#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "safeload/core.hpp"
#include "safeload/correction.hpp"
#include "safeload/model.hpp"
#include "safeload/quota.hpp"
#include "safeload/rules.hpp"
#include "safeload/traceio.hpp"

namespace safeload::pipeline {

struct Toggles {
  bool rule_filter = true;
  bool correction = true;
  bool local_models = true;
  bool quota = true;
};

struct StageCounters {
  std::uint64_t decisions = 0;
  std::uint64_t rule_admits = 0;
  std::uint64_t correction_lookups = 0;
  std::uint64_t correction_hits = 0;
  std::uint64_t model_scores = 0;
  std::uint64_t quota_accepts = 0;
  std::uint64_t quota_clamps = 0;
  std::uint64_t fn_insertions = 0;
};

/// The online decision path: rule filter, then correction lookup, then the
/// hybrid model, then the quota gate for candidate positives. Admitted
/// queries that later fail feed the correction index and the cluster's
/// false-negative counter.
class Pipeline {
 public:
  explicit Pipeline(const traceio::ArtifactBundle& bundle,
                    Toggles toggles = {});

  /// DimensionError when the record's feature vector does not match the
  /// bundle schema.
  Decision decide(const QueryRecord& record);

  /// Only Admit decisions carry feedback; offloaded queries run elsewhere
  /// and report nothing. A failed admit grows the index and bumps FNC.
  void feedback(const Decision& decision, const Outcome& outcome,
                const QueryRecord& record);

  const Toggles& toggles() const { return toggles_; }
  const StageCounters& counters() const { return counters_; }
  const FeatureSchema& schema() const { return schema_; }
  const rules::DiscriminativeRule& rule() const { return rule_; }
  const model::HybridRouter& router() const { return router_; }
  const correction::CorrectionIndex& index() const { return index_; }
  const quota::QuotaLedger& ledger() const { return ledger_; }
  const quota::QuotaParams& params() const { return params_; }

 private:
  FeatureSchema schema_;
  rules::DiscriminativeRule rule_;
  model::HybridRouter router_;
  correction::CorrectionIndex index_;
  quota::QuotaLedger ledger_;
  quota::QuotaParams params_;
  Toggles toggles_;
  StageCounters counters_;
};

struct BuildConfig {
  model::TrainConfig train;
  quota::QuotaParams quota;
  double rule_positive_bound = 0.95;
  double rule_negative_bound = 0.03;
  std::size_t local_threshold = 100;
  std::uint64_t seed = 0;
};

/// Offline build from one training day: the rule comes from an 80/20 time
/// split of the day, the hybrid model trains on the rule's survivors only,
/// and budgets seed from the day's observed per-cluster MO counts. The
/// correction index starts empty. NoPositives when the trace has no MO
/// query.
traceio::ArtifactBundle build_pipeline(
    std::span<const QueryRecord> training_trace, const FeatureSchema& schema,
    const BuildConfig& config);

}  // namespace safeload::pipeline
