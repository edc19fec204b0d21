#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "safeload/core.hpp"
#include "safeload/rules.hpp"

namespace safeload::workloadgen {

struct GenConfig {
  std::uint64_t seed = 7;
  int n_clusters = 20;
  int queries_per_cluster = 10000;
  double mo_ratio = 0.002;         // target fraction of MO-labeled records
  double repeat_rate = 0.8;        // exact-vector re-emission probability
  int mo_group_size = 3;           // records per MO incident
  double hard_negative_rate = 0.01;
  int days = 2;
  double mean_cpu_s_mo = 2000.0;
  double mean_cpu_s_non_mo = 8.0;

  void validate() const;
};

struct WorkloadProfile {
  std::size_t total = 0;
  std::size_t mo_count = 0;
  std::string imbalance;         // positives:negatives, reduced to "1:N"
  double repetition_rate = 0.0;  // fraction equal to an earlier vector
  std::map<std::string, std::size_t> per_cluster_mo;
};

/// One trace per day, each sorted by (arrival_ms, query_id) with unique ids.
/// Deterministic given the config.
std::vector<std::vector<QueryRecord>> generate(const GenConfig& config);

WorkloadProfile describe(std::span<const QueryRecord> day);

/// The structural MO signature the generator plants:
/// (join_count > 1 OR window_rows > 0) AND scan_bytes > 1048576
/// AND prev_day_oom > 0.
rules::DiscriminativeRule planted_rule(const FeatureSchema& schema);

/// Feature positions the generator gives concrete meaning to, resolved
/// against a schema's group layout.
struct Landmarks {
  std::size_t agg_count = 0;
  std::size_t sort_count = 0;
  std::size_t window_ops = 0;
  std::size_t join_count = 0;
  std::size_t scan_bytes = 0;
  std::size_t window_rows = 0;
  std::size_t hash_begin = 0;  // first of six hash-build size features
  std::size_t spill_bytes = 0;
  std::size_t dop = 0;
  std::size_t batch_flag = 0;
  std::size_t mem_util = 0;
  std::size_t cpu_util = 0;
  std::size_t oom_prev = 0;

  static Landmarks resolve(const FeatureSchema& schema);
};

}  // namespace safeload::workloadgen
