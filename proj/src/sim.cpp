#include "safeload/sim.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "safeload/text.hpp"

namespace safeload::sim {

namespace {

struct FeedbackEvent {
  std::int64_t at_ms = 0;
  std::size_t record_index = 0;
  const std::string* query_id = nullptr;
  Decision decision;
};

struct FeedbackLater {
  bool operator()(const FeedbackEvent& a, const FeedbackEvent& b) const {
    if (a.at_ms != b.at_ms) return a.at_ms > b.at_ms;
    return *a.query_id > *b.query_id;
  }
};

void append_metric(std::string& out, const char* name, double value,
                   bool defined) {
  out += name;
  out += ' ';
  out += format_double(value);
  if (!defined) out += " (degenerate: reported as 0)";
  out += '\n';
}

}  // namespace

void CostModel::validate() const {
  if (!(provisioned_rate > 0.0) || !(serverless_rate > 0.0)) {
    throw ConfigError("cost model rates must be positive");
  }
  if (!(free_serverless_allowance >= 0.0)) {
    throw ConfigError("free serverless allowance must be non-negative");
  }
}

Metrics compute_metrics(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn,
                        std::uint64_t tn) {
  Metrics m;
  const double tpd = static_cast<double>(tp);
  const std::uint64_t total = tp + fp + fn + tn;
  if (total == 0) {
    m.accuracy_defined = false;
  } else {
    m.accuracy = (tpd + static_cast<double>(tn)) / static_cast<double>(total);
  }
  if (tp + fp == 0) {
    m.precision_defined = false;
  } else {
    m.precision = tpd / static_cast<double>(tp + fp);
  }
  if (tp + fn == 0) {
    m.recall_defined = false;
  } else {
    m.recall = tpd / static_cast<double>(tp + fn);
  }
  if (m.precision + m.recall == 0.0) {
    m.f1_defined = false;
  } else {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  }
  return m;
}

CostBreakdown compute_cost(double fn_cpu_s, double tp_cpu_s, double fp_cpu_s,
                           const CostModel& model) {
  model.validate();
  CostBreakdown cost;
  cost.fn_wasted_cpu_h = fn_cpu_s / 3600.0;
  cost.tp_serverless_cpu_h = tp_cpu_s / 3600.0;
  cost.fp_serverless_cpu_h = fp_cpu_s / 3600.0;
  const double serverless_h = cost.tp_serverless_cpu_h + cost.fp_serverless_cpu_h;
  cost.monetary_cost_usd =
      cost.fn_wasted_cpu_h * model.provisioned_rate +
      std::max(0.0, serverless_h - model.free_serverless_allowance) *
          model.serverless_rate;
  return cost;
}

ReplayReport replay(std::span<const QueryRecord> trace,
                    const traceio::ArtifactBundle& bundle,
                    const CostModel& cost_model, const ReplayOptions& options) {
  cost_model.validate();
  const std::size_t dim = bundle.schema.dimension();
  for (const QueryRecord& r : trace) {
    if (r.features.size() != dim) {
      throw SchemaMismatch("trace record " + r.query_id + " has dimension " +
                           std::to_string(r.features.size()) +
                           ", bundle expects " + std::to_string(dim));
    }
  }

  pipeline::Pipeline pipe(bundle, options.toggles);

  ReplayReport report;
  if (options.keep_log) report.log.reserve(trace.size());
  double fn_cpu_s = 0.0, tp_cpu_s = 0.0, fp_cpu_s = 0.0;

  std::priority_queue<FeedbackEvent, std::vector<FeedbackEvent>, FeedbackLater>
      pending;
  auto fire = [&](const FeedbackEvent& ev) {
    const QueryRecord& r = trace[ev.record_index];
    Outcome outcome;
    outcome.query_id = r.query_id;
    outcome.observed =
        r.label == Label::MO ? Observed::MOFailed : Observed::Succeeded;
    outcome.completed_ms = ev.at_ms;
    pipe.feedback(ev.decision, outcome, r);
  };

  for (std::size_t i = 0; i < trace.size(); ++i) {
    const QueryRecord& r = trace[i];
    while (!pending.empty() && pending.top().at_ms < r.arrival_ms) {
      fire(pending.top());
      pending.pop();
    }
    const Decision d = pipe.decide(r);
    const OutcomeClass cls = classify_outcome(d, r.label);
    switch (cls) {
      case OutcomeClass::TP:
        ++report.tp;
        tp_cpu_s += r.cpu_time_s;
        break;
      case OutcomeClass::FP:
        ++report.fp;
        fp_cpu_s += r.cpu_time_s;
        break;
      case OutcomeClass::FN:
        ++report.fn;
        fn_cpu_s += r.cpu_time_s;
        break;
      case OutcomeClass::TN:
        ++report.tn;
        break;
    }
    ++report.decision_sources[to_string(d.source)];
    ClusterStats& cs = report.per_cluster[r.cluster_id];
    switch (cls) {
      case OutcomeClass::TP: ++cs.tp; break;
      case OutcomeClass::FP: ++cs.fp; break;
      case OutcomeClass::FN: ++cs.fn; break;
      case OutcomeClass::TN: ++cs.tn; break;
    }
    if (options.keep_log) {
      report.log.push_back(
          {r.query_id, d.verdict, d.source, d.confidence, d.quota_cost_charged,
           cls});
    }
    if (d.verdict == Verdict::Admit) {
      if (options.feedback == FeedbackMode::Immediate) {
        fire({r.arrival_ms, i, &r.query_id, d});
      } else {
        const std::int64_t done =
            r.arrival_ms + std::llround(r.cpu_time_s * 1000.0);
        pending.push({done, i, &r.query_id, d});
      }
    }
  }
  while (!pending.empty()) {
    fire(pending.top());
    pending.pop();
  }

  report.metrics = compute_metrics(report.tp, report.fp, report.fn, report.tn);
  report.cost = compute_cost(fn_cpu_s, tp_cpu_s, fp_cpu_s, cost_model);
  report.counters = pipe.counters();
  for (const auto& [cluster, entry] : pipe.ledger().entries()) {
    ClusterStats& cs = report.per_cluster[cluster];
    cs.daily_quota = entry.daily_quota;
    cs.quota_remaining = entry.remaining;
    cs.fnc = entry.fnc;
  }
  for (const auto& [cluster, entries] : pipe.index().entries()) {
    report.per_cluster[cluster].index_size = entries.size();
  }

  return report;
}

std::string report_to_text(const ReplayReport& report) {
  std::string out;
  out += "replay summary\n";
  out += "tp " + std::to_string(report.tp) + "\n";
  out += "fp " + std::to_string(report.fp) + "\n";
  out += "fn " + std::to_string(report.fn) + "\n";
  out += "tn " + std::to_string(report.tn) + "\n";
  append_metric(out, "accuracy", report.metrics.accuracy,
                report.metrics.accuracy_defined);
  append_metric(out, "precision", report.metrics.precision,
                report.metrics.precision_defined);
  append_metric(out, "recall", report.metrics.recall,
                report.metrics.recall_defined);
  append_metric(out, "f1", report.metrics.f1, report.metrics.f1_defined);
  out += "fn_wasted_cpu_h " + format_double(report.cost.fn_wasted_cpu_h) + "\n";
  out += "tp_serverless_cpu_h " + format_double(report.cost.tp_serverless_cpu_h) +
         "\n";
  out += "fp_serverless_cpu_h " + format_double(report.cost.fp_serverless_cpu_h) +
         "\n";
  out +=
      "monetary_cost_usd " + format_double(report.cost.monetary_cost_usd) + "\n";
  out += "decision_sources\n";
  for (const auto& [source, count] : report.decision_sources) {
    out += "  " + source + " " + std::to_string(count) + "\n";
  }
  out += "clusters\n";
  for (const auto& [cluster, cs] : report.per_cluster) {
    out += "  " + cluster + " tp " + std::to_string(cs.tp) + " fp " +
           std::to_string(cs.fp) + " fn " + std::to_string(cs.fn) + " tn " +
           std::to_string(cs.tn) + " quota " +
           format_double(cs.quota_remaining) + "/" +
           format_double(cs.daily_quota) + " fnc " + std::to_string(cs.fnc) +
           " index " + std::to_string(cs.index_size) + "\n";
  }
  return out;
}

std::string log_to_csv(const ReplayReport& report) {
  std::string out = "query_id,verdict,source,confidence,cost_charged,outcome_class\n";
  for (const DecisionLogEntry& e : report.log) {
    out += e.query_id;
    out += ',';
    out += to_string(e.verdict);
    out += ',';
    out += to_string(e.source);
    out += ',';
    out += format_double(e.confidence);
    out += ',';
    out += format_double(e.cost_charged);
    out += ',';
    out += to_string(e.outcome_class);
    out += '\n';
  }
  return out;
}

AblationResult run_ablation(std::span<const QueryRecord> day1,
                            std::span<const QueryRecord> day2,
                            const FeatureSchema& schema,
                            const pipeline::BuildConfig& build_config,
                            const CostModel& cost_model,
                            FeedbackMode feedback) {
  AblationResult result;
  result.bundle = pipeline::build_pipeline(day1, schema, build_config);

  auto run = [&](const char* label, pipeline::Toggles toggles) {
    ReplayOptions options;
    options.toggles = toggles;
    options.feedback = feedback;
    options.keep_log = false;
    result.rows.push_back(
        {label, replay(day2, result.bundle, cost_model, options)});
  };
  pipeline::Toggles full;
  run("full", full);
  pipeline::Toggles no_rule = full;
  no_rule.rule_filter = false;
  run("no-rule-filter", no_rule);
  pipeline::Toggles no_locals = full;
  no_locals.local_models = false;
  run("no-local-models", no_locals);
  pipeline::Toggles no_correction = full;
  no_correction.correction = false;
  run("no-correction", no_correction);
  pipeline::Toggles no_quota = full;
  no_quota.quota = false;
  run("no-quota", no_quota);
  return result;
}

std::string ablation_to_text(const AblationResult& result) {
  std::string out = "variant\ttp\tfp\tfn\ttn\taccuracy\tprecision\trecall\tf1\n";
  for (const AblationRow& row : result.rows) {
    out += row.label;
    out += '\t' + std::to_string(row.report.tp);
    out += '\t' + std::to_string(row.report.fp);
    out += '\t' + std::to_string(row.report.fn);
    out += '\t' + std::to_string(row.report.tn);
    out += '\t' + format_double(row.report.metrics.accuracy);
    out += '\t' + format_double(row.report.metrics.precision);
    out += '\t' + format_double(row.report.metrics.recall);
    out += '\t' + format_double(row.report.metrics.f1);
    out += '\n';
  }
  return out;
}

SweepResult sweep_params(std::span<const QueryRecord> day1,
                         std::span<const QueryRecord> day2,
                         const FeatureSchema& schema,
                         const pipeline::BuildConfig& build_config,
                         const CostModel& cost_model,
                         std::span<const double> gammas,
                         std::span<const double> betas,
                         FeedbackMode feedback) {
  SweepResult result;
  result.bundle = pipeline::build_pipeline(day1, schema, build_config);
  for (double gamma : gammas) {
    for (double beta : betas) {
      traceio::ArtifactBundle cell_bundle = result.bundle;
      cell_bundle.quota_params.gamma = gamma;
      cell_bundle.quota_params.beta = beta;
      cell_bundle.quota_params.validate();
      ReplayOptions options;
      options.feedback = feedback;
      options.keep_log = false;
      result.cells.push_back(
          {gamma, beta, replay(day2, cell_bundle, cost_model, options)});
    }
  }
  return result;
}

std::string sweep_to_text(const SweepResult& result) {
  std::string out =
      "gamma\tbeta\taccepted\taccuracy\tprecision\trecall\tf1\n";
  for (const SweepCell& cell : result.cells) {
    out += format_double(cell.gamma);
    out += '\t' + format_double(cell.beta);
    out += '\t' + std::to_string(cell.report.counters.quota_accepts);
    out += '\t' + format_double(cell.report.metrics.accuracy);
    out += '\t' + format_double(cell.report.metrics.precision);
    out += '\t' + format_double(cell.report.metrics.recall);
    out += '\t' + format_double(cell.report.metrics.f1);
    out += '\n';
  }
  return out;
}

}  // namespace safeload::sim
