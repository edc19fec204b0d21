#include "safeload/workloadgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_map>
#include <utility>

#include "safeload/rng.hpp"
#include "safeload/text.hpp"

namespace safeload::workloadgen {

namespace {

constexpr std::int64_t kDayMs = 86400000;
// Member-to-member multiplicative noise inside an incident. Small enough
// that pairwise cosine stays far above a 0.9999 match threshold.
constexpr double kGroupSigma = 0.002;
// Next member arrives only after the previous one had time to fail.
constexpr double kMemberSpacing = 1.35;
// Look-alike negatives outweigh the incident members they imitate by this
// factor after class re-weighting, so trees settle on the majority label.
constexpr double kMimicMargin = 1.5;

// Incident scan ranges per flavor family.
constexpr double kScanClearLo = 4e6, kScanClearHi = 4e8;
constexpr double kScanAmbLo = 1.5e6, kScanAmbHi = 8e6;
// Hard negatives stay out of the bottom quantile of the incident scan
// range; threshold search then has a stable negative-free band just under
// the positives instead of trading retention for filtering point by point.
constexpr double kMimicScanQ = 0.2;
constexpr double kPlainScanLo = 2.2e6, kPlainScanHi = 1e8;
// Each day one incident is pinned slightly below the scan range and early
// enough to stay inside the training split, anchoring the minimum positive
// scan value there across days.
constexpr double kAnchorScanScale = 0.98;

// vcpus, memory_gb, nodes, storage_tb, network_gbps, generation
constexpr double kInstanceTable[5][6] = {
    {16, 128, 4, 8, 10, 2},   {32, 256, 8, 16, 25, 3}, {64, 512, 12, 32, 25, 3},
    {32, 128, 16, 24, 40, 4}, {8, 64, 2, 4, 10, 1},
};
constexpr double kDopValues[4] = {8, 16, 32, 64};

double logu(Rng& rng, double lo, double hi) {
  return std::exp(rng.uniform(std::log(lo), std::log(hi)));
}

double clip(double v, double lo, double hi) {
  return std::min(hi, std::max(lo, v));
}

double sample_cpu_mo(Rng& rng, double mean) {
  // lognormal with the requested mean: median = mean / exp(sigma^2 / 2)
  return clip(rng.lognormal(mean * 0.8825, 0.5), 30.0, 7200.0);
}

double sample_cpu_non_mo(Rng& rng, double mean) {
  return clip(rng.lognormal(mean * 0.6065, 1.0), 0.02, 1800.0);
}

enum class Flavor { ClearJoin, ClearWindow, Ambiguous, Quirk };

struct ClusterCtx {
  std::string id;
  int index = 0;
  bool active = false;
  // Resource pressure drifts upward from the second day on.
  bool noisy = false;
  // Runs a batch-mode MO template that look-alike traffic elsewhere imitates,
  // so only this cluster's own history disambiguates it.
  bool quirky = false;
  int type = 0;
  double mem_base = 0.3;
  int oom_prev = 0;
  int dop_lo = 0;  // index into kDopValues
};

struct Layout {
  Landmarks lm;
  std::size_t dim = 0;
  std::size_t opcount_b = 0, opcount_e = 0;
  std::size_t opcard_b = 0, opcard_e = 0;
  std::size_t res_b = 0, res_e = 0;
  std::size_t cfg_b = 0, cfg_e = 0;
};

Layout make_layout(const FeatureSchema& schema) {
  Layout L;
  L.lm = Landmarks::resolve(schema);
  L.dim = schema.dimension();
  const FeatureGroup& opcount = schema.group("operator-count");
  const FeatureGroup& opcard = schema.group("operator-cardinality");
  const FeatureGroup& res = schema.group("resource-metrics");
  const FeatureGroup& cfg = schema.group("cluster-config");
  L.opcount_b = opcount.begin;
  L.opcount_e = opcount.end;
  L.opcard_b = opcard.begin;
  L.opcard_e = opcard.end;
  L.res_b = res.begin;
  L.res_e = res.end;
  L.cfg_b = cfg.begin;
  L.cfg_e = cfg.end;
  return L;
}

std::vector<ClusterCtx> plan_clusters(const GenConfig& cfg, int day) {
  const int n = cfg.n_clusters;
  const int n_active = std::max(1, n / 2);
  int width = 2;
  for (int v = n - 1; v >= 100; v /= 10) width = std::min(width + 1, 10);
  std::vector<ClusterCtx> out(static_cast<std::size_t>(n));
  char buf[32];
  for (int c = 0; c < n; ++c) {
    ClusterCtx& ctx = out[static_cast<std::size_t>(c)];
    std::snprintf(buf, sizeof buf, "c%0*d", width, c);
    ctx.id = buf;
    ctx.index = c;
    ctx.active = c < n_active;
    const bool tail_noisy = ctx.active && n_active >= 4 && c >= n_active - 2;
    const bool twin_noisy = ctx.active && n_active >= 7 && c == 5;
    ctx.noisy = tail_noisy || twin_noisy;
    ctx.quirky = ctx.active && c == 0 && n_active >= 7;
    ctx.type = c % 5;
    ctx.mem_base = !ctx.active               ? 0.28
                   : (ctx.noisy && day >= 1) ? 0.62
                                             : 0.34 + 0.02 * (c % 5);
    ctx.oom_prev = !ctx.active ? 0 : (tail_noisy ? 4 : 1);
    ctx.dop_lo = (c * 7 + 3) % 3;
  }
  return out;
}

struct Proto {
  std::vector<double> v;
  // Count axes that wobble by +/-1 per member, with a floor that keeps the
  // structural signature intact.
  std::vector<std::pair<std::size_t, double>> jitter;
  double cpu_s = 1.0;
};

void add_misc_ops(Rng& rng, const Layout& L, std::vector<double>& v,
                  Proto* proto) {
  const auto size = static_cast<std::int64_t>(L.opcount_e - L.opcount_b);
  for (int i = 0; i < 3; ++i) {
    const std::size_t axis =
        L.opcount_b + static_cast<std::size_t>(rng.range(0, size - 1));
    if (axis == L.lm.agg_count || axis == L.lm.sort_count ||
        axis == L.lm.window_ops || axis == L.lm.join_count) {
      continue;
    }
    v[axis] = static_cast<double>(rng.range(1, 6));
    if (proto) proto->jitter.emplace_back(axis, 0.0);
  }
}

// A handful of secondary cardinalities scaled to the scan size, so every
// query template points in its own direction in feature space instead of
// hugging a single dominant axis.
void add_cardinality_mix(Rng& rng, const Layout& L, std::vector<double>& v,
                         double scan) {
  const auto size = static_cast<std::int64_t>(L.opcard_e - L.opcard_b);
  const auto k = 4 + rng.range(0, 4);
  for (std::int64_t i = 0; i < k; ++i) {
    const std::size_t axis =
        L.opcard_b + static_cast<std::size_t>(rng.range(0, size - 1));
    if (axis == L.lm.scan_bytes || axis == L.lm.window_rows) continue;
    v[axis] = std::max(v[axis], scan * logu(rng, 0.05, 1.0));
  }
}

void add_platform(Rng& rng, const Layout& L, const ClusterCtx& ctx,
                  std::vector<double>& v, bool batch, int dop_idx) {
  v[L.lm.dop] = kDopValues[dop_idx];
  v[L.lm.batch_flag] = batch ? 1.0 : 0.0;
  for (std::size_t i = 0; i < 6; ++i) {
    v[L.cfg_b + i] = kInstanceTable[ctx.type][i];
  }
  v[L.lm.oom_prev] = static_cast<double>(ctx.oom_prev);
  v[L.lm.cpu_util] = rng.uniform(0.1, 0.9);
  for (std::size_t a = L.res_b + 2; a < L.res_e; ++a) {
    v[a] = rng.uniform(0.0, 0.2);
  }
}

std::vector<double> make_ordinary(Rng& rng, const Layout& L,
                                  const ClusterCtx& ctx) {
  std::vector<double> v(L.dim, 0.0);
  add_misc_ops(rng, L, v, nullptr);
  v[L.lm.join_count] =
      rng.chance(0.55) ? 0.0 : static_cast<double>(rng.range(1, 3));
  v[L.lm.agg_count] =
      rng.chance(0.5) ? 0.0 : static_cast<double>(rng.range(1, 4));
  v[L.lm.sort_count] =
      rng.chance(0.6) ? 0.0 : static_cast<double>(rng.range(1, 3));
  if (rng.chance(0.2)) {
    v[L.lm.window_rows] = logu(rng, 10.0, 1e4);
    v[L.lm.window_ops] = static_cast<double>(rng.range(1, 2));
  }
  const double scan = logu(rng, 1e4, 8e5);
  v[L.lm.scan_bytes] = scan;
  add_cardinality_mix(rng, L, v, scan);
  v[L.lm.hash_begin + static_cast<std::size_t>(rng.range(0, 5))] =
      scan * rng.uniform(0.0, 0.002);
  const bool batch = !ctx.quirky && rng.chance(0.15);
  const int dop_idx = ctx.dop_lo + (rng.chance(0.5) ? 1 : 0);
  add_platform(rng, L, ctx, v, batch, dop_idx);
  v[L.lm.mem_util] = clip(ctx.mem_base + rng.normal() * 0.08, 0.02, 0.98);
  return v;
}

std::vector<double> make_plain_hard_negative(Rng& rng, const Layout& L,
                                             const ClusterCtx& ctx, int day) {
  std::vector<double> v(L.dim, 0.0);
  add_misc_ops(rng, L, v, nullptr);
  v[L.lm.sort_count] = static_cast<double>(rng.range(1, 3));
  v[L.lm.agg_count] = static_cast<double>(rng.range(1, 4));
  const double scan = logu(rng, kPlainScanLo, kPlainScanHi);
  const bool drifted = ctx.noisy && day >= 1;
  const double ratio =
      drifted ? rng.uniform(0.10, 0.30) : rng.uniform(0.08, 0.25);
  if (rng.chance(0.5)) {
    v[L.lm.join_count] = static_cast<double>(rng.range(2, 4));
  } else {
    v[L.lm.join_count] = static_cast<double>(rng.range(0, 1));
    v[L.lm.window_rows] = logu(rng, 10.0, 2e3);
    v[L.lm.window_ops] = static_cast<double>(rng.range(1, 2));
  }
  if (drifted && rng.chance(0.04)) {
    v[L.lm.spill_bytes] = scan * rng.uniform(0.05, 0.2);
  }
  v[L.lm.scan_bytes] = scan;
  add_cardinality_mix(rng, L, v, scan);
  {
    const std::size_t a = static_cast<std::size_t>(rng.range(0, 5));
    std::size_t b = static_cast<std::size_t>(rng.range(0, 5));
    if (b == a) b = (a + 1) % 6;
    const double part = rng.uniform(0.3, 0.7);
    v[L.lm.hash_begin + a] = scan * ratio * part;
    v[L.lm.hash_begin + b] = scan * ratio * (1.0 - part);
  }
  const bool batch = !ctx.quirky && rng.chance(0.15);
  const int dop_idx = ctx.dop_lo + (rng.chance(0.5) ? 1 : 0);
  add_platform(rng, L, ctx, v, batch, dop_idx);
  v[L.lm.mem_util] = clip(ctx.mem_base + rng.normal() * 0.08, 0.02, 0.98);
  return v;
}

Proto make_incident_proto(Rng& rng, const Layout& L, const ClusterCtx& ctx,
                          Flavor flavor, double mean_cpu_mo,
                          double scan_floor_q = 0.0,
                          double scan_override = 0.0) {
  Proto p;
  p.v.assign(L.dim, 0.0);
  auto& v = p.v;
  add_misc_ops(rng, L, v, &p);
  v[L.lm.sort_count] = static_cast<double>(rng.range(1, 3));
  p.jitter.emplace_back(L.lm.sort_count, 0.0);

  double scan_lo = 0.0, scan_hi = 0.0;
  double ratio = 0.0, util_lo = 0.0, util_hi = 0.0;
  double spill_chance = 0.0;
  bool batch = false;
  int dop_idx = ctx.dop_lo + (rng.chance(0.5) ? 1 : 0);
  switch (flavor) {
    case Flavor::ClearJoin:
      v[L.lm.join_count] = static_cast<double>(rng.range(3, 6));
      p.jitter.emplace_back(L.lm.join_count, 2.0);
      v[L.lm.agg_count] = static_cast<double>(rng.range(1, 3));
      p.jitter.emplace_back(L.lm.agg_count, 0.0);
      scan_lo = kScanClearLo;
      scan_hi = kScanClearHi;
      ratio = rng.uniform(0.32, 0.50);
      util_lo = 0.65;
      util_hi = 0.95;
      spill_chance = 0.8;
      break;
    case Flavor::ClearWindow:
      v[L.lm.join_count] = static_cast<double>(rng.range(0, 1));
      p.jitter.emplace_back(L.lm.join_count, 0.0);
      v[L.lm.window_rows] = logu(rng, 1e3, 1e5);
      v[L.lm.window_ops] = static_cast<double>(rng.range(1, 3));
      p.jitter.emplace_back(L.lm.window_ops, 1.0);
      v[L.lm.agg_count] = static_cast<double>(rng.range(1, 3));
      p.jitter.emplace_back(L.lm.agg_count, 0.0);
      scan_lo = kScanClearLo;
      scan_hi = kScanClearHi;
      ratio = rng.uniform(0.32, 0.50);
      util_lo = 0.65;
      util_hi = 0.95;
      spill_chance = 0.8;
      break;
    case Flavor::Ambiguous:
      v[L.lm.join_count] = static_cast<double>(rng.range(2, 3));
      p.jitter.emplace_back(L.lm.join_count, 1.0);
      v[L.lm.window_rows] = logu(rng, 50.0, 500.0);
      v[L.lm.window_ops] = static_cast<double>(rng.range(1, 2));
      p.jitter.emplace_back(L.lm.window_ops, 1.0);
      v[L.lm.agg_count] = static_cast<double>(rng.range(1, 3));
      p.jitter.emplace_back(L.lm.agg_count, 0.0);
      scan_lo = kScanAmbLo;
      scan_hi = kScanAmbHi;
      ratio = rng.uniform(0.15, 0.28);
      util_lo = 0.42;
      util_hi = 0.68;
      spill_chance = 0.1;
      break;
    case Flavor::Quirk:
      v[L.lm.join_count] = static_cast<double>(rng.range(0, 1));
      p.jitter.emplace_back(L.lm.join_count, 0.0);
      v[L.lm.window_rows] = logu(rng, 1e3, 1e5);
      v[L.lm.window_ops] = static_cast<double>(rng.range(1, 3));
      p.jitter.emplace_back(L.lm.window_ops, 1.0);
      v[L.lm.agg_count] = static_cast<double>(rng.range(4, 7));
      p.jitter.emplace_back(L.lm.agg_count, 3.0);
      scan_lo = kScanAmbLo;
      scan_hi = kScanAmbHi;
      ratio = rng.uniform(0.15, 0.28);
      util_lo = 0.42;
      util_hi = 0.68;
      spill_chance = 0.1;
      batch = true;
      dop_idx = 2 + (rng.chance(0.5) ? 1 : 0);
      break;
  }
  if (scan_floor_q > 0.0) {
    scan_lo = scan_lo * std::pow(scan_hi / scan_lo, scan_floor_q);
  }
  double scan = logu(rng, scan_lo, scan_hi);
  if (scan_override > 0.0) scan = scan_override;
  v[L.lm.scan_bytes] = scan;
  add_cardinality_mix(rng, L, v, scan);
  {
    // hash build sizes split over three adjacent slots
    const std::size_t a = static_cast<std::size_t>(rng.range(0, 3));
    const double u1 = rng.uniform(0.2, 0.5);
    const double u2 = rng.uniform(0.2, 0.5);
    const double total = scan * ratio;
    v[L.lm.hash_begin + a] = total * u1;
    v[L.lm.hash_begin + a + 1] = total * (1.0 - u1) * u2;
    v[L.lm.hash_begin + a + 2] = total * (1.0 - u1) * (1.0 - u2);
  }
  if (rng.chance(spill_chance)) {
    v[L.lm.spill_bytes] = scan * rng.uniform(0.05, 0.2);
  }
  add_platform(rng, L, ctx, v, batch, dop_idx);
  v[L.lm.mem_util] = rng.uniform(util_lo, util_hi);
  p.cpu_s = sample_cpu_mo(rng, mean_cpu_mo);
  return p;
}

std::vector<double> make_member(Rng& rng, const Layout& L, const Proto& proto) {
  std::vector<double> v = proto.v;
  auto jittered = [&](std::size_t axis) {
    for (const auto& [j, floor] : proto.jitter) {
      (void)floor;
      if (j == axis) return true;
    }
    return false;
  };
  for (std::size_t a = 0; a < v.size(); ++a) {
    if (v[a] == 0.0) continue;
    if (a == L.lm.dop || a == L.lm.batch_flag || a == L.lm.oom_prev) continue;
    if (a >= L.cfg_b && a < L.cfg_e) continue;
    if (jittered(a)) continue;
    v[a] *= rng.lognormal(1.0, kGroupSigma);
  }
  for (const auto& [axis, floor] : proto.jitter) {
    v[axis] = std::max(floor, v[axis] + static_cast<double>(rng.range(-1, 1)));
  }
  return v;
}

// A look-alike negative: one member of a throwaway incident template,
// relabeled. Every feature is drawn from the same sampler as the real thing.
std::vector<double> make_mimic(Rng& rng, const Layout& L, const ClusterCtx& ctx,
                               Flavor flavor, double mean_cpu_mo) {
  const Proto proto =
      make_incident_proto(rng, L, ctx, flavor, mean_cpu_mo, kMimicScanQ);
  return make_member(rng, L, proto);
}

// Largest-remainder apportionment; ties go to the lower index.
std::vector<std::int64_t> apportion(std::int64_t total,
                                    const std::vector<double>& weights) {
  std::vector<std::int64_t> out(weights.size(), 0);
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  if (total <= 0 || wsum <= 0.0) return out;
  std::vector<std::pair<double, std::size_t>> frac;
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double share = static_cast<double>(total) * weights[i] / wsum;
    out[i] = static_cast<std::int64_t>(share);
    assigned += out[i];
    frac.emplace_back(share - std::floor(share), i);
  }
  std::stable_sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
    return a.first > b.first;
  });
  const std::int64_t leftover = total - assigned;
  for (std::int64_t r = 0; r < leftover; ++r) {
    out[frac[static_cast<std::size_t>(r)].second] += 1;
  }
  return out;
}

Flavor pick_flavor(Rng& rng, const ClusterCtx& ctx) {
  if (ctx.quirky) {
    if (rng.chance(0.5)) return Flavor::Quirk;
    return rng.chance(0.5) ? Flavor::ClearJoin : Flavor::ClearWindow;
  }
  if (rng.chance(0.25)) return Flavor::Ambiguous;
  return rng.chance(0.5) ? Flavor::ClearJoin : Flavor::ClearWindow;
}

void emit_incident(Rng& rng, const Layout& L, const ClusterCtx& ctx,
                   const GenConfig& cfg, std::int64_t day_start, bool anchor,
                   std::vector<QueryRecord>& out) {
  const Flavor flavor = anchor ? Flavor::Ambiguous : pick_flavor(rng, ctx);
  const double scan_override = anchor ? kScanAmbLo * kAnchorScanScale : 0.0;
  const Proto proto = make_incident_proto(rng, L, ctx, flavor,
                                          cfg.mean_cpu_s_mo, 0.0,
                                          scan_override);
  const int g = cfg.mo_group_size;
  std::vector<double> cpus(static_cast<std::size_t>(g));
  for (auto& c : cpus) c = proto.cpu_s * rng.uniform(0.94, 1.06);

  std::vector<std::int64_t> gaps;
  std::int64_t span = 0;
  for (int k = 0; k + 1 < g; ++k) {
    const std::int64_t gap =
        std::llround(cpus[static_cast<std::size_t>(k)] * 1000.0 *
                     kMemberSpacing) +
        rng.range(5000, 60000);
    gaps.push_back(gap);
    span += gap;
  }
  if (span >= kDayMs) {
    // degenerate configs: compress the group to fit inside one day
    for (auto& gap : gaps) gap = gap * (kDayMs - 1) / span;
    span = 0;
    for (auto gap : gaps) span += gap;
  }
  std::int64_t t0_hi = kDayMs - 1 - span;
  if (anchor) {
    // every member must land well before the holdout tail of the day
    t0_hi = std::min(t0_hi, std::max<std::int64_t>(0, kDayMs * 3 / 4 - span));
  }
  std::int64_t t = day_start + rng.range(0, t0_hi);
  for (int k = 0; k < g; ++k) {
    QueryRecord r;
    r.arrival_ms = t;
    r.cluster_id = ctx.id;
    r.label = Label::MO;
    r.cpu_time_s = cpus[static_cast<std::size_t>(k)];
    r.features = FeatureVector(make_member(rng, L, proto));
    out.push_back(std::move(r));
    if (k + 1 < g) t += gaps[static_cast<std::size_t>(k)];
  }
}

enum class SlotKind { Ordinary, Plain, MimicQuirk, MimicAmbiguous };

std::vector<QueryRecord> generate_day(const GenConfig& cfg, const Layout& L,
                                      int day) {
  const auto clusters = plan_clusters(cfg, day);
  const std::int64_t day_start = static_cast<std::int64_t>(day) * kDayMs;
  const std::int64_t total =
      static_cast<std::int64_t>(cfg.n_clusters) * cfg.queries_per_cluster;
  const std::int64_t target_mo =
      std::llround(static_cast<double>(total) * cfg.mo_ratio);
  std::int64_t n_anomalous =
      std::llround(static_cast<double>(target_mo) * 0.02);
  std::int64_t n_incidents = 0;
  if (target_mo > 0) {
    n_incidents = std::llround(static_cast<double>(target_mo - n_anomalous) /
                               cfg.mo_group_size);
    if (n_incidents <= 0) {
      n_incidents = 1;
      n_anomalous = 0;
    }
  }
  const std::int64_t n_hard =
      std::llround(static_cast<double>(total) * cfg.hard_negative_rate);

  // Incidents concentrate on low-index active clusters.
  std::vector<double> inc_weights(clusters.size(), 0.0);
  for (const ClusterCtx& ctx : clusters) {
    if (!ctx.active) continue;
    inc_weights[static_cast<std::size_t>(ctx.index)] = 1.0 / (ctx.index + 1);
  }
  const auto incidents_per = apportion(n_incidents, inc_weights);

  // The anchor incident goes to the first cluster that takes ordinary
  // flavors; only if none qualifies does it land in a quirky cluster.
  int anchor_cluster = -1;
  for (const ClusterCtx& ctx : clusters) {
    if (!ctx.active || ctx.quirky) continue;
    if (incidents_per[static_cast<std::size_t>(ctx.index)] <= 0) continue;
    anchor_cluster = ctx.index;
    break;
  }
  if (anchor_cluster < 0) {
    for (const ClusterCtx& ctx : clusters) {
      if (!ctx.active) continue;
      if (incidents_per[static_cast<std::size_t>(ctx.index)] <= 0) continue;
      anchor_cluster = ctx.index;
      break;
    }
  }

  // Look-alike negatives track each cluster's expected incident members of
  // the same shape, scaled past the class re-weight the trainer will apply.
  const double members_planned =
      static_cast<double>(n_incidents) * cfg.mo_group_size;
  const double w_est =
      members_planned > 0.0
          ? std::max(1.0, static_cast<double>(n_hard) / members_planned)
          : 1.0;
  const ClusterCtx* quirky_ctx = nullptr;
  const ClusterCtx* twin_ctx = nullptr;
  for (const ClusterCtx& ctx : clusters) {
    if (ctx.quirky) quirky_ctx = &ctx;
    if (ctx.active && ctx.index == 5 && ctx.noisy) twin_ctx = &ctx;
  }
  std::vector<std::int64_t> mimic_amb(clusters.size(), 0);
  std::vector<std::int64_t> mimic_quirk(clusters.size(), 0);
  std::int64_t n_mimics = 0;
  for (const ClusterCtx& ctx : clusters) {
    if (!ctx.active || ctx.quirky) continue;
    // The pinned incident contributes a whole group, not the 25% draw.
    double amb_members =
        static_cast<double>(
            incidents_per[static_cast<std::size_t>(ctx.index)]) *
        cfg.mo_group_size * 0.25;
    if (ctx.index == anchor_cluster) amb_members += cfg.mo_group_size * 0.75;
    const auto m = std::llround(kMimicMargin * w_est * amb_members);
    mimic_amb[static_cast<std::size_t>(ctx.index)] = m;
    n_mimics += m;
  }
  if (quirky_ctx && twin_ctx) {
    const double quirk_members =
        static_cast<double>(
            incidents_per[static_cast<std::size_t>(quirky_ctx->index)]) *
        cfg.mo_group_size * 0.5;
    const auto m = std::llround(kMimicMargin * w_est * quirk_members);
    mimic_quirk[static_cast<std::size_t>(twin_ctx->index)] = m;
    n_mimics += m;
  }

  std::vector<double> plain_weights(clusters.size(), 0.0);
  for (const ClusterCtx& ctx : clusters) {
    if (!ctx.active) continue;
    plain_weights[static_cast<std::size_t>(ctx.index)] = ctx.noisy ? 6.0 : 1.0;
  }
  const auto plain_per =
      apportion(std::max<std::int64_t>(0, n_hard - n_mimics), plain_weights);

  std::vector<std::int64_t> anomalous_per(clusters.size(), 0);
  {
    Rng rng = Rng::stream(cfg.seed, "gen.anomalous",
                          static_cast<std::uint64_t>(day));
    for (std::int64_t i = 0; i < n_anomalous; ++i) {
      anomalous_per[static_cast<std::size_t>(
          rng.range(0, cfg.n_clusters - 1))] += 1;
    }
  }

  std::vector<QueryRecord> records;
  records.reserve(static_cast<std::size_t>(total));

  for (const ClusterCtx& ctx : clusters) {
    const auto ci = static_cast<std::size_t>(ctx.index);
    Rng rng = Rng::stream(cfg.seed, "gen.cluster",
                          static_cast<std::uint64_t>(day) *
                                  static_cast<std::uint64_t>(cfg.n_clusters) +
                              static_cast<std::uint64_t>(ctx.index));

    const std::int64_t n_mo_slots = incidents_per[ci] * cfg.mo_group_size;
    const std::int64_t n_special =
        mimic_amb[ci] + mimic_quirk[ci] + plain_per[ci];
    const std::int64_t n_plain_traffic =
        cfg.queries_per_cluster - n_mo_slots - anomalous_per[ci] - n_special;
    if (n_plain_traffic < 0) {
      throw ConfigError(
          "cluster " + ctx.id +
          " cannot hold its share of incidents and hard negatives; lower "
          "mo_ratio or hard_negative_rate, or raise queries_per_cluster");
    }

    for (std::int64_t i = 0; i < incidents_per[ci]; ++i) {
      const bool anchor = ctx.index == anchor_cluster && i == 0;
      emit_incident(rng, L, ctx, cfg, day_start, anchor, records);
    }
    for (std::int64_t i = 0; i < anomalous_per[ci]; ++i) {
      QueryRecord r;
      // Anomalies carry none of the incident signature, so keep them out of
      // the validation tail where they would read as rule misses.
      r.arrival_ms = day_start + rng.range(0, kDayMs * 7 / 10 - 1);
      r.cluster_id = ctx.id;
      r.label = Label::MO;
      r.cpu_time_s = sample_cpu_mo(rng, cfg.mean_cpu_s_mo);
      r.features = FeatureVector(make_ordinary(rng, L, ctx));
      records.push_back(std::move(r));
    }

    // Ordinary traffic and hard negatives share one arrival stream.
    const std::int64_t n_slots = n_plain_traffic + n_special;
    std::vector<std::int64_t> arrivals(static_cast<std::size_t>(n_slots));
    for (auto& a : arrivals) a = day_start + rng.range(0, kDayMs - 1);
    std::sort(arrivals.begin(), arrivals.end());
    std::vector<SlotKind> kinds(static_cast<std::size_t>(n_slots),
                                SlotKind::Ordinary);
    {
      std::size_t at = 0;
      for (std::int64_t i = 0; i < mimic_quirk[ci]; ++i) {
        kinds[at++] = SlotKind::MimicQuirk;
      }
      for (std::int64_t i = 0; i < mimic_amb[ci]; ++i) {
        kinds[at++] = SlotKind::MimicAmbiguous;
      }
      for (std::int64_t i = 0; i < plain_per[ci]; ++i) {
        kinds[at++] = SlotKind::Plain;
      }
      for (std::int64_t i = static_cast<std::int64_t>(kinds.size()) - 1; i > 0;
           --i) {
        const auto j = static_cast<std::size_t>(rng.range(0, i));
        std::swap(kinds[static_cast<std::size_t>(i)], kinds[j]);
      }
    }

    struct PoolEntry {
      FeatureVector features;
      double cpu_s;
    };
    std::vector<PoolEntry> pool;
    for (std::int64_t s = 0; s < n_slots; ++s) {
      const auto si = static_cast<std::size_t>(s);
      QueryRecord r;
      r.arrival_ms = arrivals[si];
      r.cluster_id = ctx.id;
      r.label = Label::NonMO;
      switch (kinds[si]) {
        case SlotKind::MimicQuirk:
          r.features = FeatureVector(
              make_mimic(rng, L, ctx, Flavor::Quirk, cfg.mean_cpu_s_mo));
          r.cpu_time_s = sample_cpu_non_mo(rng, cfg.mean_cpu_s_non_mo);
          break;
        case SlotKind::MimicAmbiguous:
          r.features = FeatureVector(
              make_mimic(rng, L, ctx, Flavor::Ambiguous, cfg.mean_cpu_s_mo));
          r.cpu_time_s = sample_cpu_non_mo(rng, cfg.mean_cpu_s_non_mo);
          break;
        case SlotKind::Plain:
          r.features =
              FeatureVector(make_plain_hard_negative(rng, L, ctx, day));
          r.cpu_time_s = sample_cpu_non_mo(rng, cfg.mean_cpu_s_non_mo);
          break;
        case SlotKind::Ordinary:
          if (!pool.empty() && rng.chance(cfg.repeat_rate)) {
            const auto p = static_cast<std::size_t>(
                rng.range(0, static_cast<std::int64_t>(pool.size()) - 1));
            r.features = pool[p].features;
            r.cpu_time_s = pool[p].cpu_s * rng.uniform(0.92, 1.08);
          } else {
            r.features = FeatureVector(make_ordinary(rng, L, ctx));
            r.cpu_time_s = sample_cpu_non_mo(rng, cfg.mean_cpu_s_non_mo);
            pool.push_back({r.features, r.cpu_time_s});
          }
          break;
      }
      records.push_back(std::move(r));
    }
  }

  std::stable_sort(records.begin(), records.end(),
                   [](const QueryRecord& a, const QueryRecord& b) {
                     return a.arrival_ms < b.arrival_ms;
                   });
  int width = 6;
  for (std::int64_t v = total - 1; v >= 1000000; v /= 10) ++width;
  char buf[40];
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::snprintf(buf, sizeof buf, "q%d_%0*llu", day, width,
                  static_cast<unsigned long long>(i));
    records[i].query_id = buf;
  }
  return records;
}

}  // namespace

void GenConfig::validate() const {
  if (n_clusters <= 0) throw ConfigError("n_clusters must be positive");
  if (queries_per_cluster <= 0) {
    throw ConfigError("queries_per_cluster must be positive");
  }
  if (!(mo_ratio > 0.0 && mo_ratio < 1.0)) {
    throw ConfigError("mo_ratio must lie in (0, 1)");
  }
  if (!(repeat_rate >= 0.0 && repeat_rate <= 1.0)) {
    throw ConfigError("repeat_rate must lie in [0, 1]");
  }
  if (mo_group_size < 1) throw ConfigError("mo_group_size must be >= 1");
  if (!(hard_negative_rate >= 0.0 && hard_negative_rate <= 1.0)) {
    throw ConfigError("hard_negative_rate must lie in [0, 1]");
  }
  if (days <= 0) throw ConfigError("days must be positive");
  if (!(mean_cpu_s_mo > 0.0) || !(mean_cpu_s_non_mo > 0.0)) {
    throw ConfigError("mean cpu times must be positive");
  }
}

Landmarks Landmarks::resolve(const FeatureSchema& schema) {
  auto need = [&](const char* group, std::size_t size) -> const FeatureGroup& {
    const FeatureGroup& g = schema.group(group);
    if (g.end - g.begin < size) {
      throw ConfigError(std::string("schema group ") + group +
                        " is too small for the generator's layout");
    }
    return g;
  };
  const FeatureGroup& opcount = need("operator-count", 19);
  const FeatureGroup& opcard = need("operator-cardinality", 41);
  const FeatureGroup& mem = need("memory-intensive", 7);
  const FeatureGroup& exec = need("execution-config", 2);
  const FeatureGroup& res = need("resource-metrics", 2);
  need("cluster-config", 6);
  const FeatureGroup& oom = need("oom-indicator", 1);

  Landmarks lm;
  lm.agg_count = opcount.begin + 5;
  lm.sort_count = opcount.begin + 7;
  lm.window_ops = opcount.begin + 12;
  lm.join_count = opcount.begin + 18;
  lm.scan_bytes = opcard.begin + 29;
  lm.window_rows = opcard.begin + 40;
  lm.hash_begin = mem.begin;
  lm.spill_bytes = mem.begin + 6;
  lm.dop = exec.begin;
  lm.batch_flag = exec.begin + 1;
  lm.mem_util = res.begin;
  lm.cpu_util = res.begin + 1;
  lm.oom_prev = oom.begin;
  return lm;
}

std::vector<std::vector<QueryRecord>> generate(const GenConfig& config) {
  config.validate();
  const FeatureSchema schema = FeatureSchema::default_schema();
  const Layout L = make_layout(schema);
  std::vector<std::vector<QueryRecord>> days;
  days.reserve(static_cast<std::size_t>(config.days));
  for (int d = 0; d < config.days; ++d) {
    days.push_back(generate_day(config, L, d));
  }
  return days;
}

WorkloadProfile describe(std::span<const QueryRecord> day) {
  WorkloadProfile profile;
  profile.total = day.size();
  std::unordered_map<std::uint64_t, std::vector<const FeatureVector*>> seen;
  std::size_t repeats = 0;
  for (const QueryRecord& r : day) {
    if (r.label == Label::MO) {
      ++profile.mo_count;
      ++profile.per_cluster_mo[r.cluster_id];
    }
    const auto& vals = r.features.values();
    const std::uint64_t h = fnv1a64(std::string_view(
        reinterpret_cast<const char*>(vals.data()), vals.size() * 8));
    auto& bucket = seen[h];
    bool dup = false;
    for (const FeatureVector* prior : bucket) {
      if (*prior == r.features) {
        dup = true;
        break;
      }
    }
    if (dup) {
      ++repeats;
    } else {
      bucket.push_back(&r.features);
    }
  }
  profile.repetition_rate =
      day.empty()
          ? 0.0
          : static_cast<double>(repeats) / static_cast<double>(day.size());
  const std::size_t negatives = profile.total - profile.mo_count;
  if (profile.mo_count == 0) {
    profile.imbalance = "0:" + std::to_string(negatives);
  } else {
    profile.imbalance =
        "1:" + std::to_string(static_cast<long long>(std::llround(
                   static_cast<double>(negatives) /
                   static_cast<double>(profile.mo_count))));
  }
  return profile;
}

rules::DiscriminativeRule planted_rule(const FeatureSchema& schema) {
  const Landmarks lm = Landmarks::resolve(schema);
  using rules::DiscriminativeRule;
  auto gt = [](std::size_t f, double t) {
    return DiscriminativeRule::make_leaf({f, t});
  };
  DiscriminativeRule heavy_op = DiscriminativeRule::combine(
      DiscriminativeRule::Kind::Or,
      {gt(lm.join_count, 1.0), gt(lm.window_rows, 0.0)});
  return DiscriminativeRule::combine(
      DiscriminativeRule::Kind::And,
      {std::move(heavy_op), gt(lm.scan_bytes, 1048576.0),
       gt(lm.oom_prev, 0.0)});
}

}  // namespace safeload::workloadgen
