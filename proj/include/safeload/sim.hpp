#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "safeload/core.hpp"
#include "safeload/pipeline.hpp"
#include "safeload/traceio.hpp"

namespace safeload::sim {

struct CostModel {
  double provisioned_rate = 0.3;  // USD per CPU-hour
  double serverless_rate = 0.5;   // USD per CPU-hour
  double free_serverless_allowance = 2000.0;  // CPU-hours per day

  void validate() const;
};

struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Degenerate denominators report the metric as 0 and clear the flag.
  bool accuracy_defined = true;
  bool precision_defined = true;
  bool recall_defined = true;
  bool f1_defined = true;
};

Metrics compute_metrics(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn,
                        std::uint64_t tn);

struct CostBreakdown {
  double fn_wasted_cpu_h = 0.0;
  double tp_serverless_cpu_h = 0.0;
  double fp_serverless_cpu_h = 0.0;
  double monetary_cost_usd = 0.0;
};

/// Sums are CPU-seconds of the queries in each confusion cell. False
/// negatives waste provisioned capacity; offloaded queries (TP and FP)
/// bill serverless rates past the free allowance.
CostBreakdown compute_cost(double fn_cpu_s, double tp_cpu_s, double fp_cpu_s,
                           const CostModel& model);

struct DecisionLogEntry {
  std::string query_id;
  Verdict verdict = Verdict::Admit;
  DecisionSource source = DecisionSource::RuleFilter;
  double confidence = 0.0;
  double cost_charged = 0.0;
  OutcomeClass outcome_class = OutcomeClass::TN;
};

struct ClusterStats {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  double daily_quota = 0.0;
  double quota_remaining = 0.0;
  std::uint64_t fnc = 0;
  std::size_t index_size = 0;
};

struct ReplayReport {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  Metrics metrics;
  CostBreakdown cost;
  std::map<std::string, std::uint64_t> decision_sources;
  std::map<std::string, ClusterStats> per_cluster;
  pipeline::StageCounters counters;
  // Per-query decisions in replay order; empty when keep_log is off.
  std::vector<DecisionLogEntry> log;
};

enum class FeedbackMode {
  // Admit outcomes land when the query's own CPU time has elapsed.
  Completion,
  // Optimistic variant: outcomes land at the decision instant.
  Immediate,
};

struct ReplayOptions {
  pipeline::Toggles toggles;
  FeedbackMode feedback = FeedbackMode::Completion;
  std::uint64_t seed = 0;  // reserved; the replay itself is deterministic
  bool keep_log = true;
};

/// Single-threaded replay over a merged timeline: every record's decision
/// fires at its arrival; every Admit schedules its outcome at arrival +
/// round(cpu_time_s * 1000). Equal timestamps decide before feeding back,
/// ordering ties by query id. Trace labels stand in for execution.
/// SchemaMismatch when a record's dimension contradicts the bundle.
ReplayReport replay(std::span<const QueryRecord> trace,
                    const traceio::ArtifactBundle& bundle,
                    const CostModel& cost_model, const ReplayOptions& options);

std::string report_to_text(const ReplayReport& report);
std::string log_to_csv(const ReplayReport& report);

struct AblationRow {
  std::string label;
  ReplayReport report;
};

struct AblationResult {
  traceio::ArtifactBundle bundle;
  std::vector<AblationRow> rows;
};

/// Builds once from day 1, then replays day 2 with the full pipeline and
/// with each stage toggled off one at a time.
AblationResult run_ablation(std::span<const QueryRecord> day1,
                            std::span<const QueryRecord> day2,
                            const FeatureSchema& schema,
                            const pipeline::BuildConfig& build_config,
                            const CostModel& cost_model,
                            FeedbackMode feedback = FeedbackMode::Completion);

std::string ablation_to_text(const AblationResult& result);

struct SweepCell {
  double gamma = 0.0;
  double beta = 0.0;
  ReplayReport report;
};

struct SweepResult {
  traceio::ArtifactBundle bundle;
  std::vector<SweepCell> cells;
};

/// One bundle, one day-2 replay per (gamma, beta) combination; only the
/// quota parameters vary across cells.
SweepResult sweep_params(std::span<const QueryRecord> day1,
                         std::span<const QueryRecord> day2,
                         const FeatureSchema& schema,
                         const pipeline::BuildConfig& build_config,
                         const CostModel& cost_model,
                         std::span<const double> gammas,
                         std::span<const double> betas,
                         FeedbackMode feedback = FeedbackMode::Completion);

std::string sweep_to_text(const SweepResult& result);

}  // namespace safeload::sim
