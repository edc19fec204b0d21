#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "safeload/core.hpp"
#include "safeload/correction.hpp"
#include "safeload/model.hpp"
#include "safeload/quota.hpp"
#include "safeload/rules.hpp"

namespace safeload::traceio {

/// Canonical CSV serialization of a trace: header
/// query_id,arrival_ms,cluster_id,label,cpu_time_s,f0,...,f{D-1}, rows
/// sorted by arrival then id, floats in shortest round-trip form, LF line
/// endings. Writing then reading then writing is byte-stable.
std::string serialize_trace(std::span<const QueryRecord> records,
                            std::size_t dimension);

void write_trace(std::span<const QueryRecord> records, std::size_t dimension,
                 const std::string& path);

/// Parses and validates a trace file. Raises ParseError (with line and
/// column) on malformed fields, OrderError on unsorted rows, and
/// DimensionError when a row's feature count contradicts the header.
std::vector<QueryRecord> read_trace(const std::string& path);

std::uint64_t trace_digest(std::span<const QueryRecord> records,
                           std::size_t dimension);

/// "fnv1a64:" followed by 16 lowercase hex digits.
std::string format_digest(std::uint64_t digest);

struct Provenance {
  std::string trace_digest;  // "fnv1a64:" + 16 hex digits
  std::uint64_t trace_records = 0;
  std::int64_t built_at_ms = 0;
  std::uint64_t seed = 0;
};

/// Everything a replay needs: schema, rule, models, quota configuration,
/// previous-day MO counts, provenance, and an optional index snapshot.
struct ArtifactBundle {
  FeatureSchema schema = FeatureSchema::default_schema();
  rules::DiscriminativeRule rule;
  model::TreeEnsemble global;
  std::map<std::string, model::TreeEnsemble> locals;
  std::size_t local_threshold = 100;
  quota::QuotaParams quota_params;
  std::map<std::string, std::uint64_t> prev_day_mo;
  Provenance provenance;
  std::map<std::string, std::vector<correction::CorrectionIndex::Entry>>
      index_snapshot;
};

/// Writes the bundle as a directory: schema.txt, rule.txt,
/// global_model.txt, local_models/<cluster>.txt, quota.txt, provenance.txt,
/// and index/<cluster>.txt when a snapshot is present. Deterministic for
/// identical contents.
void save_bundle(const ArtifactBundle& bundle, const std::string& dir);

/// Raises CorruptArtifact on missing or inconsistent files.
ArtifactBundle load_bundle(const std::string& dir);

/// Same, but raises SchemaMismatch when the stored dimension differs from
/// the expected schema's.
ArtifactBundle load_bundle(const std::string& dir,
                           const FeatureSchema& expected);

}  // namespace safeload::traceio
