#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "safeload/core.hpp"

namespace safeload::quota {

struct QuotaParams {
  double gamma = 1.0;   // uncertainty surcharge scale
  double beta = 0.5;    // false-negative discount per miss
  double c_min = 0.1;   // cost floor
  double alpha = 2.0;   // next-day budget multiplier over observed MO count
  double min_daily_quota = 5.0;

  void validate() const;
};

/// Binary entropy in bits; p must lie in [0, 1], endpoints give 0.
double entropy(double p);

/// max(1 + gamma * H(p) - beta * fnc, c_min).
double quota_cost(double p, std::uint64_t fnc, const QuotaParams& params);

struct AcceptResult {
  bool accepted = false;
  double cost = 0.0;
};

/// Per-cluster offload budgets with false-negative counters. Rejected
/// calls leave the ledger untouched.
class QuotaLedger {
 public:
  struct Entry {
    double daily_quota = 0.0;
    double remaining = 0.0;
    std::uint64_t fnc = 0;
  };

  /// Charges quota_cost(p, fnc) against the cluster's remaining budget.
  /// Unknown clusters are initialized at min_daily_quota and flagged.
  AcceptResult try_accept(const std::string& cluster_id, double p,
                          const QuotaParams& params);

  void record_false_negative(const std::string& cluster_id,
                             const QuotaParams& params);

  /// Rebuilds every budget from the previous day's per-cluster MO counts:
  /// max(alpha * count, min_daily_quota), with counters cleared. Clusters
  /// absent from the map reset as count 0.
  void daily_reset(const std::map<std::string, std::uint64_t>& prev_day_mo,
                   const QuotaParams& params);

  const Entry* find(const std::string& cluster_id) const;
  const std::map<std::string, Entry>& entries() const { return entries_; }
  const std::vector<std::string>& auto_initialized() const {
    return auto_initialized_;
  }

 private:
  Entry& get_or_init(const std::string& cluster_id, const QuotaParams& params);

  std::map<std::string, Entry> entries_;
  std::vector<std::string> auto_initialized_;
};

}  // namespace safeload::quota
