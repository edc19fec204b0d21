#include "doctest.h"

#include <cmath>
#include <cstring>
#include <map>
#include <vector>

#include "safeload/quota.hpp"

using namespace safeload;
using namespace safeload::quota;

TEST_CASE("entropy values and conventions") {
  CHECK(entropy(0.5) == 1.0);
  CHECK(entropy(0.0) == 0.0);
  CHECK(entropy(1.0) == 0.0);
  CHECK(std::abs(entropy(0.9) - 0.468996) < 1e-6);
  CHECK_THROWS_AS(entropy(-0.01), DomainError);
  CHECK_THROWS_AS(entropy(1.01), DomainError);
}

TEST_CASE("entropy symmetry and monotonicity on [0, 0.5]") {
  double prev = -1.0;
  for (int i = 0; i <= 100; ++i) {
    const double p = i / 100.0;
    CHECK(entropy(p) == doctest::Approx(entropy(1.0 - p)).epsilon(1e-12));
    if (p <= 0.5) {
      CHECK(entropy(p) > prev);
      prev = entropy(p);
    }
  }
}

TEST_CASE("quota_cost worked values") {
  QuotaParams params;  // gamma 1, beta 0.5, c_min 0.1
  CHECK(quota_cost(1.0, 0, params) == 1.0);
  CHECK(quota_cost(0.5, 0, params) == 2.0);
  CHECK(std::abs(quota_cost(0.99, 0, params) - 1.080793) < 1e-6);
  CHECK(quota_cost(1.0, 4, params) == 0.1);
}

TEST_CASE("quota_cost is floored, falls with fnc, rises with entropy") {
  QuotaParams params;
  for (int i = 0; i <= 20; ++i) {
    const double p = i / 20.0;
    double prev = quota_cost(p, 0, params);
    CHECK(prev >= params.c_min);
    for (std::uint64_t fnc = 1; fnc <= 6; ++fnc) {
      const double c = quota_cost(p, fnc, params);
      CHECK(c <= prev);
      CHECK(c >= params.c_min);
      prev = c;
    }
  }
  // H is larger at 0.5 than at the ends, so cost follows.
  CHECK(quota_cost(0.5, 0, params) > quota_cost(0.9, 0, params));
  CHECK(quota_cost(0.9, 0, params) > quota_cost(1.0, 0, params));
}

TEST_CASE("try_accept boundary, rejection, and floor cases") {
  QuotaParams params;
  QuotaLedger ledger;
  ledger.daily_reset({{"a", 0}}, params);  // daily quota = min = 5.0

  SUBCASE("exact boundary accepts") {
    QuotaLedger l2;
    l2.daily_reset({{"a", 0}}, params);
    // Drain to exactly 1.0 of headroom with four unit-cost accepts.
    for (int i = 0; i < 4; ++i) {
      const auto r = l2.try_accept("a", 1.0, params);
      CHECK(r.accepted);
      CHECK(r.cost == 1.0);
    }
    CHECK(l2.find("a")->remaining == 1.0);
    const auto r = l2.try_accept("a", 1.0, params);
    CHECK(r.accepted);
    CHECK(l2.find("a")->remaining == 0.0);
    // Nothing left: even the floor cost cannot be paid from 0 remaining
    // unless cost is 0, which never happens (c_min > 0).
    CHECK_FALSE(l2.try_accept("a", 1.0, params).accepted);
  }

  SUBCASE("insufficient quota rejects and reports the cost") {
    QuotaLedger l2;
    l2.daily_reset({{"b", 0}}, params);
    for (int i = 0; i < 2; ++i) l2.try_accept("b", 0.5, params);  // 2.0 each
    CHECK(l2.find("b")->remaining == 1.0);
    const auto r = l2.try_accept("b", 0.5, params);
    CHECK_FALSE(r.accepted);
    CHECK(r.cost == 2.0);
    CHECK(l2.find("b")->remaining == 1.0);
  }

  SUBCASE("fnc discount engages the floor") {
    for (int i = 0; i < 4; ++i) ledger.record_false_negative("a", params);
    CHECK(ledger.find("a")->fnc == 4);
    const auto r = ledger.try_accept("a", 1.0, params);
    CHECK(r.accepted);
    CHECK(r.cost == 0.1);
    CHECK(ledger.find("a")->remaining == 4.9);
  }
}

TEST_CASE("rejected calls leave the ledger bitwise unchanged") {
  QuotaParams params;
  QuotaLedger ledger;
  ledger.daily_reset({{"a", 0}, {"b", 3}}, params);
  ledger.try_accept("a", 0.6, params);
  ledger.record_false_negative("b", params);
  while (ledger.try_accept("a", 0.5, params).accepted) {
  }
  const auto drained = ledger.entries();
  const auto rejected = ledger.try_accept("a", 0.5, params);
  CHECK_FALSE(rejected.accepted);
  const auto after = ledger.entries();
  CHECK(after.size() == drained.size());
  for (const auto& [cluster, entry] : drained) {
    const auto it = after.find(cluster);
    REQUIRE(it != after.end());
    CHECK(std::memcmp(&entry.daily_quota, &it->second.daily_quota,
                      sizeof entry.daily_quota) == 0);
    CHECK(std::memcmp(&entry.remaining, &it->second.remaining,
                      sizeof entry.remaining) == 0);
    CHECK(entry.fnc == it->second.fnc);
  }
}

TEST_CASE("charged costs replay to the remaining budget exactly") {
  QuotaParams params;
  QuotaLedger ledger;
  ledger.daily_reset({{"a", 7}}, params);  // daily 14.0
  std::vector<double> charged;
  const double ps[] = {0.93, 0.6, 1.0, 0.75, 0.99, 0.51};
  for (double p : ps) {
    const auto r = ledger.try_accept("a", p, params);
    if (r.accepted) charged.push_back(r.cost);
  }
  ledger.record_false_negative("a", params);
  const auto r2 = ledger.try_accept("a", 0.8, params);
  if (r2.accepted) charged.push_back(r2.cost);

  const auto* e = ledger.find("a");
  REQUIRE(e != nullptr);
  double replayed = e->daily_quota;
  for (double c : charged) replayed -= c;
  CHECK(replayed == e->remaining);
}

TEST_CASE("record_false_negative is per-cluster") {
  QuotaParams params;
  QuotaLedger ledger;
  ledger.daily_reset({{"a", 1}, {"b", 1}}, params);
  ledger.record_false_negative("a", params);
  ledger.record_false_negative("a", params);
  ledger.record_false_negative("a", params);
  CHECK(ledger.find("a")->fnc == 3);
  CHECK(ledger.find("b")->fnc == 0);
  // Three misses push the p=1 cost to the floor: max(1 - 1.5, 0.1).
  CHECK(quota_cost(1.0, ledger.find("a")->fnc, params) == 0.1);
}

TEST_CASE("daily_reset rebuilds budgets and clears counters") {
  QuotaParams params;  // alpha 2, min 5
  QuotaLedger ledger;
  ledger.daily_reset({{"a", 10}, {"b", 0}}, params);
  CHECK(ledger.find("a")->daily_quota == 20.0);
  CHECK(ledger.find("a")->remaining == 20.0);
  CHECK(ledger.find("b")->daily_quota == 5.0);

  ledger.record_false_negative("a", params);
  ledger.try_accept("a", 1.0, params);
  ledger.daily_reset({{"a", 1}}, params);
  CHECK(ledger.find("a")->daily_quota == 5.0);
  CHECK(ledger.find("a")->remaining == 5.0);
  CHECK(ledger.find("a")->fnc == 0);
  // Clusters absent from the counts reset as count 0.
  CHECK(ledger.find("b")->daily_quota == 5.0);
}

TEST_CASE("unknown clusters are auto-initialized and flagged") {
  QuotaParams params;
  QuotaLedger ledger;
  const auto r = ledger.try_accept("ghost", 1.0, params);
  CHECK(r.accepted);
  CHECK(ledger.find("ghost")->daily_quota == params.min_daily_quota);
  REQUIRE(ledger.auto_initialized().size() == 1);
  CHECK(ledger.auto_initialized()[0] == "ghost");
}

TEST_CASE("parameter validation") {
  QuotaParams p;
  CHECK_NOTHROW(p.validate());
  p.gamma = -1.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.c_min = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.beta = -0.1;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}
