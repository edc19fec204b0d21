#include "safeload/quota.hpp"

#include <algorithm>
#include <cmath>

namespace safeload::quota {

void QuotaParams::validate() const {
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
  if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
  if (!(c_min > 0.0)) throw ConfigError("c_min must be > 0");
  if (!(alpha > 0.0)) throw ConfigError("alpha must be > 0");
  if (!(min_daily_quota > 0.0)) {
    throw ConfigError("min_daily_quota must be > 0");
  }
}

double entropy(double p) {
  if (!(p >= 0.0) || p > 1.0) {
    throw DomainError("entropy argument outside [0, 1]");
  }
  if (p == 0.0 || p == 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

double quota_cost(double p, std::uint64_t fnc, const QuotaParams& params) {
  const double cost =
      1.0 + params.gamma * entropy(p) - params.beta * static_cast<double>(fnc);
  return std::max(cost, params.c_min);
}

QuotaLedger::Entry& QuotaLedger::get_or_init(const std::string& cluster_id,
                                             const QuotaParams& params) {
  auto it = entries_.find(cluster_id);
  if (it == entries_.end()) {
    it = entries_
             .emplace(cluster_id, Entry{params.min_daily_quota,
                                        params.min_daily_quota, 0})
             .first;
    auto_initialized_.push_back(cluster_id);
  }
  return it->second;
}

AcceptResult QuotaLedger::try_accept(const std::string& cluster_id, double p,
                                     const QuotaParams& params) {
  Entry& e = get_or_init(cluster_id, params);
  const double cost = quota_cost(p, e.fnc, params);
  if (e.remaining >= cost) {
    e.remaining -= cost;
    return {true, cost};
  }
  return {false, cost};
}

void QuotaLedger::record_false_negative(const std::string& cluster_id,
                                        const QuotaParams& params) {
  get_or_init(cluster_id, params).fnc += 1;
}

void QuotaLedger::daily_reset(
    const std::map<std::string, std::uint64_t>& prev_day_mo,
    const QuotaParams& params) {
  params.validate();
  for (const auto& [cluster, count] : prev_day_mo) {
    entries_[cluster];  // ensure presence
  }
  for (auto& [cluster, entry] : entries_) {
    const auto it = prev_day_mo.find(cluster);
    const double observed =
        it == prev_day_mo.end() ? 0.0 : static_cast<double>(it->second);
    entry.daily_quota = std::max(params.alpha * observed,
                                 params.min_daily_quota);
    entry.remaining = entry.daily_quota;
    entry.fnc = 0;
  }
}

const QuotaLedger::Entry* QuotaLedger::find(
    const std::string& cluster_id) const {
  const auto it = entries_.find(cluster_id);
  return it == entries_.end() ? nullptr : &it->second;
}

}  // namespace safeload::quota
