#include "safeload/pipeline.hpp"

#include <algorithm>
#include <utility>
#include <vector>

namespace safeload::pipeline {

Pipeline::Pipeline(const traceio::ArtifactBundle& bundle, Toggles toggles)
    : schema_(bundle.schema),
      rule_(bundle.rule),
      params_(bundle.quota_params),
      toggles_(toggles) {
  router_.global = bundle.global;
  router_.locals = bundle.locals;
  router_.local_threshold = bundle.local_threshold;
  ledger_.daily_reset(bundle.prev_day_mo, params_);
  for (const auto& [cluster, entries] : bundle.index_snapshot) {
    for (const auto& entry : entries) {
      index_.insert_fn(cluster, entry.features, entry.inserted_ms);
    }
  }
}

Decision Pipeline::decide(const QueryRecord& record) {
  if (record.features.size() != schema_.dimension()) {
    throw DimensionError("record dimension " +
                         std::to_string(record.features.size()) +
                         " does not match bundle schema dimension " +
                         std::to_string(schema_.dimension()));
  }
  ++counters_.decisions;

  if (toggles_.rule_filter && !rule_.evaluate(record.features)) {
    ++counters_.rule_admits;
    return {Verdict::Admit, DecisionSource::RuleFilter, 0.0, 0.0};
  }

  bool candidate_positive = false;
  double confidence = 0.0;
  DecisionSource source = DecisionSource::Model;
  bool matched = false;
  if (toggles_.correction) {
    ++counters_.correction_lookups;
    if (index_.lookup(record.cluster_id, record.features)) {
      ++counters_.correction_hits;
      matched = true;
      candidate_positive = true;
      confidence = 1.0;
      source = DecisionSource::CorrectionIndex;
    }
  }
  if (!matched) {
    confidence =
        toggles_.local_models
            ? model::route_score(router_, record.cluster_id, record.features)
            : model::score(router_.global, record.features);
    ++counters_.model_scores;
    candidate_positive = confidence >= 0.5;
    source = DecisionSource::Model;
  }

  if (!candidate_positive) {
    return {Verdict::Admit, source, confidence, 0.0};
  }
  if (!toggles_.quota) {
    return {Verdict::Offload, source, confidence, 0.0};
  }
  const quota::AcceptResult result =
      ledger_.try_accept(record.cluster_id, confidence, params_);
  if (result.accepted) {
    ++counters_.quota_accepts;
    return {Verdict::Offload, source, confidence, result.cost};
  }
  ++counters_.quota_clamps;
  return {Verdict::Admit, DecisionSource::QuotaClamp, confidence, 0.0};
}

void Pipeline::feedback(const Decision& decision, const Outcome& outcome,
                        const QueryRecord& record) {
  if (decision.verdict != Verdict::Admit) return;
  if (outcome.observed != Observed::MOFailed) return;
  index_.insert_fn(record.cluster_id, record.features, outcome.completed_ms);
  ledger_.record_false_negative(record.cluster_id, params_);
  ++counters_.fn_insertions;
}

traceio::ArtifactBundle build_pipeline(
    std::span<const QueryRecord> training_trace, const FeatureSchema& schema,
    const BuildConfig& config) {
  bool any_mo = false;
  std::int64_t max_arrival = 0;
  for (const QueryRecord& r : training_trace) {
    if (r.features.size() != schema.dimension()) {
      throw DimensionError("training record " + r.query_id + " has dimension " +
                           std::to_string(r.features.size()) + ", expected " +
                           std::to_string(schema.dimension()));
    }
    if (r.label == Label::MO) any_mo = true;
    max_arrival = std::max(max_arrival, r.arrival_ms);
  }
  if (!any_mo) {
    throw NoPositives("training trace holds no MO queries");
  }

  const std::size_t n = training_trace.size();
  const std::size_t n_validation = n / 5;
  const std::size_t n_training = n - n_validation;
  const rules::GeneratedRule generated = rules::generate_rule(
      training_trace.subspan(0, n_training), training_trace.subspan(n_training),
      schema, config.rule_positive_bound, config.rule_negative_bound);

  std::vector<QueryRecord> survivors;
  for (const QueryRecord& r : training_trace) {
    if (generated.rule.evaluate(r.features)) survivors.push_back(r);
  }
  model::HybridRouter router =
      model::train_hybrid(survivors, config.train, config.local_threshold);

  std::map<std::string, std::uint64_t> mo_counts;
  for (const QueryRecord& r : training_trace) {
    if (r.label == Label::MO) ++mo_counts[r.cluster_id];
  }

  traceio::ArtifactBundle bundle;
  bundle.schema = schema;
  bundle.rule = generated.rule;
  bundle.global = std::move(router.global);
  bundle.locals = std::move(router.locals);
  bundle.local_threshold = config.local_threshold;
  bundle.quota_params = config.quota;
  bundle.prev_day_mo = std::move(mo_counts);
  bundle.provenance.trace_digest = traceio::format_digest(
      traceio::trace_digest(training_trace, schema.dimension()));
  bundle.provenance.trace_records = n;
  bundle.provenance.built_at_ms = max_arrival;
  bundle.provenance.seed = config.seed;
  return bundle;
}

}  // namespace safeload::pipeline
