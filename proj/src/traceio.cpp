#include "safeload/traceio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <utility>

#include "safeload/text.hpp"

namespace fs = std::filesystem;

namespace safeload::traceio {

namespace {

constexpr const char* kSchemaHeader = "safeload.schema.v1";
constexpr const char* kRuleHeader = "safeload.rule.v1";
constexpr const char* kQuotaHeader = "safeload.quota.v1";
constexpr const char* kProvenanceHeader = "safeload.provenance.v1";
constexpr const char* kIndexHeader = "safeload.index.v1";

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (in.bad()) throw Error("read failed on " + path.string());
  return text;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot create " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.flush();
  if (!out) throw Error("write failed on " + path.string());
}

std::string read_artifact(const fs::path& path) {
  if (!fs::exists(path)) {
    throw CorruptArtifact("missing " + path.string());
  }
  return read_file(path);
}

// Splits into lines on LF; a trailing newline yields no empty final line.
std::vector<std::string_view> lines_of(std::string_view text) {
  auto lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

bool is_canonical_record(const QueryRecord& r, std::size_t dimension) {
  return valid_id(r.query_id) && valid_id(r.cluster_id) &&
         r.features.size() == dimension && std::isfinite(r.cpu_time_s) &&
         r.cpu_time_s >= 0.0;
}

}  // namespace

std::string serialize_trace(std::span<const QueryRecord> records,
                            std::size_t dimension) {
  std::string out = "query_id,arrival_ms,cluster_id,label,cpu_time_s";
  for (std::size_t f = 0; f < dimension; ++f) {
    out += ",f" + format_i64(static_cast<std::int64_t>(f));
  }
  out += '\n';

  const QueryRecord* prev = nullptr;
  for (const QueryRecord& r : records) {
    if (r.features.size() != dimension) {
      throw DimensionError("record " + r.query_id + " has " +
                           std::to_string(r.features.size()) +
                           " features, trace dimension is " +
                           std::to_string(dimension));
    }
    if (!is_canonical_record(r, dimension)) {
      throw DomainError("record " + r.query_id + " violates trace invariants");
    }
    if (prev && !(prev->arrival_ms < r.arrival_ms ||
                  (prev->arrival_ms == r.arrival_ms &&
                   prev->query_id < r.query_id))) {
      throw OrderError("records " + prev->query_id + " and " + r.query_id +
                       " are not in (arrival_ms, query_id) order");
    }
    prev = &r;

    out += r.query_id;
    out += ',';
    out += format_i64(r.arrival_ms);
    out += ',';
    out += r.cluster_id;
    out += ',';
    out += (r.label == Label::MO) ? '1' : '0';
    out += ',';
    out += format_double(r.cpu_time_s);
    for (std::size_t f = 0; f < dimension; ++f) {
      out += ',';
      out += format_double(r.features[f]);
    }
    out += '\n';
  }
  return out;
}

void write_trace(std::span<const QueryRecord> records, std::size_t dimension,
                 const std::string& path) {
  write_file(path, serialize_trace(records, dimension));
}

namespace {

struct FieldCursor {
  std::string_view line;
  std::size_t line_no;   // 1-based
  std::size_t offset = 0;  // byte offset of the next field within the line

  // Returns the next comma-separated field plus its 1-based start column.
  std::pair<std::string_view, std::size_t> next() {
    std::size_t col = offset + 1;
    std::size_t end = line.find(',', offset);
    std::string_view field;
    if (end == std::string_view::npos) {
      field = line.substr(offset);
      offset = line.size() + 1;
    } else {
      field = line.substr(offset, end - offset);
      offset = end + 1;
    }
    return {field, col};
  }
};

}  // namespace

std::vector<QueryRecord> read_trace(const std::string& path) {
  const std::string text = read_file(path);
  const auto lines = lines_of(text);
  if (lines.empty()) throw ParseError("missing trace header", 1, 1);

  // Header fixes the dimension; each fN column must appear in order.
  {
    const auto fields = split(lines[0], ',');
    static const char* kFixed[] = {"query_id", "arrival_ms", "cluster_id",
                                   "label", "cpu_time_s"};
    std::size_t col = 1;
    for (std::size_t i = 0; i < 5; ++i) {
      if (fields.size() <= i || fields[i] != kFixed[i]) {
        throw ParseError(std::string("bad trace header, expected ") + kFixed[i],
                         1, col);
      }
      col += fields[i].size() + 1;
    }
    for (std::size_t i = 5; i < fields.size(); ++i) {
      const std::string want =
          "f" + format_i64(static_cast<std::int64_t>(i - 5));
      if (fields[i] != want) {
        throw ParseError("bad trace header, expected " + want, 1, col);
      }
      col += fields[i].size() + 1;
    }
  }
  const std::size_t dimension = split(lines[0], ',').size() - 5;

  std::vector<QueryRecord> records;
  records.reserve(lines.size() - 1);
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::size_t line_no = li + 1;
    const std::string_view line = lines[li];
    const std::size_t n_fields = split(line, ',').size();
    if (n_fields != 5 + dimension) {
      throw DimensionError("line " + std::to_string(line_no) + " has " +
                           std::to_string(n_fields) + " fields, expected " +
                           std::to_string(5 + dimension));
    }

    FieldCursor cur{line, line_no};
    QueryRecord r;

    auto [id, id_col] = cur.next();
    r.query_id = std::string(id);
    if (!valid_id(r.query_id)) {
      throw ParseError("invalid query_id", line_no, id_col);
    }

    auto [arrival, arrival_col] = cur.next();
    if (!try_parse_i64(arrival, r.arrival_ms)) {
      throw ParseError("invalid arrival_ms", line_no, arrival_col);
    }

    auto [cluster, cluster_col] = cur.next();
    r.cluster_id = std::string(cluster);
    if (!valid_id(r.cluster_id)) {
      throw ParseError("invalid cluster_id", line_no, cluster_col);
    }

    auto [label, label_col] = cur.next();
    if (label == "1") {
      r.label = Label::MO;
    } else if (label == "0") {
      r.label = Label::NonMO;
    } else {
      throw ParseError("label must be 0 or 1", line_no, label_col);
    }

    auto [cpu, cpu_col] = cur.next();
    if (!try_parse_double(cpu, r.cpu_time_s) || !std::isfinite(r.cpu_time_s) ||
        r.cpu_time_s < 0.0) {
      throw ParseError("invalid cpu_time_s", line_no, cpu_col);
    }

    std::vector<double> values(dimension);
    for (std::size_t f = 0; f < dimension; ++f) {
      auto [tok, tok_col] = cur.next();
      if (!try_parse_double(tok, values[f]) || !std::isfinite(values[f])) {
        throw ParseError("invalid feature value", line_no, tok_col);
      }
    }
    r.features = FeatureVector(std::move(values));

    if (!records.empty()) {
      const QueryRecord& p = records.back();
      if (!(p.arrival_ms < r.arrival_ms ||
            (p.arrival_ms == r.arrival_ms && p.query_id < r.query_id))) {
        throw OrderError("line " + std::to_string(line_no) +
                         " regresses the (arrival_ms, query_id) order");
      }
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::uint64_t trace_digest(std::span<const QueryRecord> records,
                           std::size_t dimension) {
  return fnv1a64(serialize_trace(records, dimension));
}

// ---------------------------------------------------------------------------
// Bundle
// ---------------------------------------------------------------------------

namespace {

std::string digest_string(std::uint64_t digest) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx",
                static_cast<unsigned long long>(digest));
  return buf;
}

bool valid_digest_string(const std::string& s) {
  if (s.size() != 8 + 16 || s.compare(0, 8, "fnv1a64:") != 0) return false;
  for (std::size_t i = 8; i < s.size(); ++i) {
    char c = s[i];
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  }
  return true;
}

std::string schema_to_text(const FeatureSchema& schema) {
  std::string out = std::string(kSchemaHeader) + '\n';
  out += "dimension " +
         format_i64(static_cast<std::int64_t>(schema.dimension())) + '\n';
  out += "query_level_end " +
         format_i64(static_cast<std::int64_t>(schema.query_level_range().second)) +
         '\n';
  for (const FeatureGroup& g : schema.groups()) {
    out += "group " + g.name + ' ' +
           format_i64(static_cast<std::int64_t>(g.begin)) + ' ' +
           format_i64(static_cast<std::int64_t>(g.end)) + '\n';
  }
  return out;
}

FeatureSchema schema_from_text(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines[0] != kSchemaHeader) {
    throw CorruptArtifact("missing schema format header");
  }
  std::int64_t dimension = -1, query_level_end = -1;
  std::vector<FeatureGroup> groups;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fields = split(lines[i], ' ');
    if (fields.size() == 2 && fields[0] == "dimension") {
      if (!try_parse_i64(fields[1], dimension) || dimension <= 0) {
        throw CorruptArtifact("bad schema dimension");
      }
    } else if (fields.size() == 2 && fields[0] == "query_level_end") {
      if (!try_parse_i64(fields[1], query_level_end) || query_level_end < 0) {
        throw CorruptArtifact("bad schema query_level_end");
      }
    } else if (fields.size() == 4 && fields[0] == "group") {
      std::int64_t b = -1, e = -1;
      if (!try_parse_i64(fields[2], b) || !try_parse_i64(fields[3], e) ||
          b < 0 || e < b) {
        throw CorruptArtifact("bad schema group bounds");
      }
      groups.push_back({std::string(fields[1]), static_cast<std::size_t>(b),
                        static_cast<std::size_t>(e)});
    } else {
      throw CorruptArtifact("unrecognized schema line: " +
                            std::string(lines[i]));
    }
  }
  if (dimension < 0 || query_level_end < 0) {
    throw CorruptArtifact("schema missing dimension or query_level_end");
  }
  try {
    return FeatureSchema(static_cast<std::size_t>(dimension),
                         std::move(groups),
                         static_cast<std::size_t>(query_level_end));
  } catch (const Error& e) {
    throw CorruptArtifact(std::string("inconsistent schema: ") + e.what());
  }
}

std::string quota_to_text(const quota::QuotaParams& params,
                          const std::map<std::string, std::uint64_t>& counts,
                          std::size_t local_threshold) {
  std::string out = std::string(kQuotaHeader) + '\n';
  out += "gamma " + format_double(params.gamma) + '\n';
  out += "beta " + format_double(params.beta) + '\n';
  out += "c_min " + format_double(params.c_min) + '\n';
  out += "alpha " + format_double(params.alpha) + '\n';
  out += "min_daily_quota " + format_double(params.min_daily_quota) + '\n';
  out += "local_threshold " +
         format_i64(static_cast<std::int64_t>(local_threshold)) + '\n';
  for (const auto& [cluster, count] : counts) {
    out += "prev_day_mo " + cluster + ' ' +
           format_i64(static_cast<std::int64_t>(count)) + '\n';
  }
  return out;
}

void quota_from_text(const std::string& text, quota::QuotaParams& params,
                     std::map<std::string, std::uint64_t>& counts,
                     std::size_t& local_threshold) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines[0] != kQuotaHeader) {
    throw CorruptArtifact("missing quota format header");
  }
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fields = split(lines[i], ' ');
    if (fields.size() == 2 && fields[0] == "local_threshold") {
      std::uint64_t value = 0;
      if (!try_parse_u64(fields[1], value)) {
        throw CorruptArtifact("bad quota line: " + std::string(lines[i]));
      }
      local_threshold = static_cast<std::size_t>(value);
    } else if (fields.size() == 2) {
      double* slot = nullptr;
      if (fields[0] == "gamma") slot = &params.gamma;
      else if (fields[0] == "beta") slot = &params.beta;
      else if (fields[0] == "c_min") slot = &params.c_min;
      else if (fields[0] == "alpha") slot = &params.alpha;
      else if (fields[0] == "min_daily_quota") slot = &params.min_daily_quota;
      if (!slot || !try_parse_double(fields[1], *slot)) {
        throw CorruptArtifact("bad quota line: " + std::string(lines[i]));
      }
    } else if (fields.size() == 3 && fields[0] == "prev_day_mo") {
      std::uint64_t count = 0;
      const std::string cluster(fields[1]);
      if (!valid_id(cluster) || !try_parse_u64(fields[2], count)) {
        throw CorruptArtifact("bad quota line: " + std::string(lines[i]));
      }
      counts[cluster] = count;
    } else {
      throw CorruptArtifact("bad quota line: " + std::string(lines[i]));
    }
  }
  try {
    params.validate();
  } catch (const Error& e) {
    throw CorruptArtifact(std::string("invalid quota params: ") + e.what());
  }
}

std::string provenance_to_text(const Provenance& p) {
  std::string out = std::string(kProvenanceHeader) + '\n';
  out += "trace_digest " + p.trace_digest + '\n';
  out += "trace_records " +
         format_i64(static_cast<std::int64_t>(p.trace_records)) + '\n';
  out += "built_at_ms " + format_i64(p.built_at_ms) + '\n';
  out += "seed " + std::to_string(p.seed) + '\n';
  return out;
}

Provenance provenance_from_text(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines[0] != kProvenanceHeader) {
    throw CorruptArtifact("missing provenance format header");
  }
  Provenance p;
  bool have_digest = false, have_records = false, have_built = false,
       have_seed = false;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fields = split(lines[i], ' ');
    if (fields.size() != 2) {
      throw CorruptArtifact("bad provenance line: " + std::string(lines[i]));
    }
    if (fields[0] == "trace_digest") {
      p.trace_digest = std::string(fields[1]);
      have_digest = true;
    } else if (fields[0] == "trace_records") {
      if (!try_parse_u64(fields[1], p.trace_records)) {
        throw CorruptArtifact("bad provenance trace_records");
      }
      have_records = true;
    } else if (fields[0] == "built_at_ms") {
      if (!try_parse_i64(fields[1], p.built_at_ms)) {
        throw CorruptArtifact("bad provenance built_at_ms");
      }
      have_built = true;
    } else if (fields[0] == "seed") {
      if (!try_parse_u64(fields[1], p.seed)) {
        throw CorruptArtifact("bad provenance seed");
      }
      have_seed = true;
    } else {
      throw CorruptArtifact("bad provenance line: " + std::string(lines[i]));
    }
  }
  if (!(have_digest && have_records && have_built && have_seed)) {
    throw CorruptArtifact("provenance is missing fields");
  }
  if (!valid_digest_string(p.trace_digest)) {
    throw CorruptArtifact("malformed provenance digest: " + p.trace_digest);
  }
  return p;
}

std::string index_cluster_to_text(
    std::span<const correction::CorrectionIndex::Entry> entries,
    std::size_t dimension) {
  std::string out = std::string(kIndexHeader) + '\n';
  out += "dimension " + format_i64(static_cast<std::int64_t>(dimension)) + '\n';
  for (const auto& e : entries) {
    out += format_i64(e.inserted_ms);
    for (std::size_t f = 0; f < e.features.size(); ++f) {
      out += ',';
      out += format_double(e.features[f]);
    }
    out += '\n';
  }
  return out;
}

std::vector<correction::CorrectionIndex::Entry> index_cluster_from_text(
    const std::string& text, std::size_t expect_dimension) {
  const auto lines = lines_of(text);
  if (lines.size() < 2 || lines[0] != kIndexHeader) {
    throw CorruptArtifact("missing index format header");
  }
  const auto dim_fields = split(lines[1], ' ');
  std::int64_t dim = -1;
  if (dim_fields.size() != 2 || dim_fields[0] != "dimension" ||
      !try_parse_i64(dim_fields[1], dim) ||
      dim != static_cast<std::int64_t>(expect_dimension)) {
    throw CorruptArtifact("index snapshot dimension mismatch");
  }
  std::vector<correction::CorrectionIndex::Entry> entries;
  for (std::size_t i = 2; i < lines.size(); ++i) {
    const auto fields = split(lines[i], ',');
    if (fields.size() != 1 + expect_dimension) {
      throw CorruptArtifact("bad index snapshot row width");
    }
    correction::CorrectionIndex::Entry e;
    if (!try_parse_i64(fields[0], e.inserted_ms)) {
      throw CorruptArtifact("bad index snapshot timestamp");
    }
    std::vector<double> values(expect_dimension);
    for (std::size_t f = 0; f < expect_dimension; ++f) {
      if (!try_parse_double(fields[1 + f], values[f]) ||
          !std::isfinite(values[f])) {
        throw CorruptArtifact("bad index snapshot value");
      }
    }
    e.features = FeatureVector(std::move(values));
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace

void save_bundle(const ArtifactBundle& bundle, const std::string& dir) {
  const fs::path root(dir);
  fs::create_directories(root / "local_models");

  write_file(root / "schema.txt", schema_to_text(bundle.schema));
  write_file(root / "rule.txt",
             std::string(kRuleHeader) + '\n' + bundle.rule.serialize() + '\n');
  write_file(root / "global_model.txt", model::ensemble_to_text(bundle.global));
  for (const auto& [cluster, ensemble] : bundle.locals) {
    write_file(root / "local_models" / (cluster + ".txt"),
               model::ensemble_to_text(ensemble));
  }
  write_file(root / "quota.txt",
             quota_to_text(bundle.quota_params, bundle.prev_day_mo,
                           bundle.local_threshold));
  write_file(root / "provenance.txt", provenance_to_text(bundle.provenance));

  if (!bundle.index_snapshot.empty()) {
    fs::create_directories(root / "index");
    for (const auto& [cluster, entries] : bundle.index_snapshot) {
      write_file(root / "index" / (cluster + ".txt"),
                 index_cluster_to_text(entries, bundle.schema.dimension()));
    }
  }
}

ArtifactBundle load_bundle(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::is_directory(root)) {
    throw CorruptArtifact("bundle directory missing: " + dir);
  }

  ArtifactBundle bundle;
  bundle.schema = schema_from_text(read_artifact(root / "schema.txt"));
  const std::size_t dim = bundle.schema.dimension();

  {
    const std::string text = read_artifact(root / "rule.txt");
    const auto lines = lines_of(text);
    if (lines.size() != 2 || lines[0] != kRuleHeader) {
      throw CorruptArtifact("malformed rule.txt");
    }
    try {
      bundle.rule = rules::DiscriminativeRule::parse(std::string(lines[1]));
    } catch (const Error& e) {
      throw CorruptArtifact(std::string("unparseable rule: ") + e.what());
    }
    if (bundle.rule.max_feature_index() >= dim) {
      throw CorruptArtifact("rule references features beyond the schema");
    }
  }

  bundle.global = model::ensemble_from_text(
      read_artifact(root / "global_model.txt"));
  if (bundle.global.dimension != dim) {
    throw CorruptArtifact("global model dimension disagrees with schema");
  }

  const fs::path locals_dir = root / "local_models";
  if (!fs::is_directory(locals_dir)) {
    throw CorruptArtifact("missing local_models directory");
  }
  std::vector<fs::path> local_files;
  for (const auto& entry : fs::directory_iterator(locals_dir)) {
    local_files.push_back(entry.path());
  }
  std::sort(local_files.begin(), local_files.end());
  for (const fs::path& file : local_files) {
    if (file.extension() != ".txt") {
      throw CorruptArtifact("unexpected file in local_models: " +
                            file.string());
    }
    const std::string cluster = file.stem().string();
    if (!valid_id(cluster)) {
      throw CorruptArtifact("invalid local model cluster id: " + cluster);
    }
    model::TreeEnsemble local = model::ensemble_from_text(read_file(file));
    if (local.dimension != dim) {
      throw CorruptArtifact("local model " + cluster +
                            " dimension disagrees with schema");
    }
    bundle.locals.emplace(cluster, std::move(local));
  }

  quota_from_text(read_artifact(root / "quota.txt"), bundle.quota_params,
                  bundle.prev_day_mo, bundle.local_threshold);
  bundle.provenance =
      provenance_from_text(read_artifact(root / "provenance.txt"));

  const fs::path index_dir = root / "index";
  if (fs::is_directory(index_dir)) {
    std::vector<fs::path> index_files;
    for (const auto& entry : fs::directory_iterator(index_dir)) {
      index_files.push_back(entry.path());
    }
    std::sort(index_files.begin(), index_files.end());
    for (const fs::path& file : index_files) {
      const std::string cluster = file.stem().string();
      if (file.extension() != ".txt" || !valid_id(cluster)) {
        throw CorruptArtifact("unexpected file in index: " + file.string());
      }
      bundle.index_snapshot.emplace(
          cluster, index_cluster_from_text(read_file(file), dim));
    }
  }

  return bundle;
}

ArtifactBundle load_bundle(const std::string& dir,
                           const FeatureSchema& expected) {
  ArtifactBundle bundle = load_bundle(dir);
  if (bundle.schema.dimension() != expected.dimension()) {
    throw SchemaMismatch("bundle dimension " +
                         std::to_string(bundle.schema.dimension()) +
                         " does not match expected " +
                         std::to_string(expected.dimension()));
  }
  return bundle;
}

std::string format_digest(std::uint64_t digest) { return digest_string(digest); }

}  // namespace safeload::traceio
