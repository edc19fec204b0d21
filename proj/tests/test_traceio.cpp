#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "safeload/pipeline.hpp"
#include "safeload/rng.hpp"
#include "safeload/traceio.hpp"
#include "safeload/workloadgen.hpp"

using namespace safeload;
using namespace safeload::traceio;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("safeload-test-" + std::to_string(::getpid()) + "-" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

QueryRecord record(const std::string& id, std::int64_t ms,
                   std::vector<double> features, Label label,
                   double cpu = 1.0) {
  QueryRecord r;
  r.query_id = id;
  r.arrival_ms = ms;
  r.cluster_id = "c0";
  r.features = FeatureVector(std::move(features));
  r.cpu_time_s = cpu;
  r.label = label;
  return r;
}

}  // namespace

TEST_CASE("trace round-trip preserves generated records") {
  workloadgen::GenConfig cfg;
  cfg.seed = 3;
  cfg.n_clusters = 4;
  cfg.queries_per_cluster = 50;
  cfg.days = 1;
  const auto days = workloadgen::generate(cfg);
  REQUIRE(days.size() == 1);
  const auto& records = days[0];
  REQUIRE(records.size() == 200);

  TempDir dir;
  const auto path = dir.file("day.trace");
  const std::size_t dim = records[0].features.size();
  write_trace(records, dim, path);
  const auto back = read_trace(path);
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(back[i].query_id == records[i].query_id);
    CHECK(back[i].arrival_ms == records[i].arrival_ms);
    CHECK(back[i].cluster_id == records[i].cluster_id);
    CHECK(back[i].cpu_time_s == records[i].cpu_time_s);
    CHECK(back[i].label == records[i].label);
    CHECK(back[i].features == records[i].features);
  }

  // write -> read -> write is byte stable
  const auto path2 = dir.file("day2.trace");
  write_trace(back, dim, path2);
  CHECK(read_text(path) == read_text(path2));
}

TEST_CASE("empty trace is a header-only file") {
  TempDir dir;
  const auto path = dir.file("empty.trace");
  write_trace(std::vector<QueryRecord>{}, 3, path);
  const std::string text = read_text(path);
  CHECK(text == "query_id,arrival_ms,cluster_id,label,cpu_time_s,f0,f1,f2\n");
  CHECK(read_trace(path).empty());
}

TEST_CASE("floats serialize in shortest round-trip form") {
  TempDir dir;
  const auto path = dir.file("t.trace");
  write_trace(std::vector<QueryRecord>{record("a", 1, {0.1}, Label::MO, 0.5)},
              1, path);
  const std::string text = read_text(path);
  CHECK(text.find(",0.5,") != std::string::npos);
  CHECK(text.find("0.50") == std::string::npos);
  const auto back = read_trace(path);
  CHECK(back[0].cpu_time_s == 0.5);
  CHECK(back[0].features[0] == 0.1);
}

TEST_CASE("malformed fields raise ParseError with a position") {
  TempDir dir;
  const auto path = dir.file("bad.trace");

  SUBCASE("non-finite feature") {
    write_text(path,
               "query_id,arrival_ms,cluster_id,label,cpu_time_s,f0\n"
               "a,1,c0,1,1.0,NaN\n");
    CHECK_THROWS_AS(read_trace(path), ParseError);
  }
  SUBCASE("garbage arrival") {
    write_text(path,
               "query_id,arrival_ms,cluster_id,label,cpu_time_s,f0\n"
               "a,xyz,c0,1,1.0,2\n");
    try {
      read_trace(path);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line == 2);
      CHECK(e.column > 1);
    }
  }
  SUBCASE("unknown label") {
    write_text(path,
               "query_id,arrival_ms,cluster_id,label,cpu_time_s,f0\n"
               "a,1,c0,yes,1.0,2\n");
    CHECK_THROWS_AS(read_trace(path), ParseError);
  }
  SUBCASE("missing header") {
    write_text(path, "a,1,c0,1,1.0,2\n");
    CHECK_THROWS_AS(read_trace(path), ParseError);
  }
}

TEST_CASE("regressing timestamps raise OrderError") {
  TempDir dir;
  const auto path = dir.file("order.trace");
  write_text(path,
             "query_id,arrival_ms,cluster_id,label,cpu_time_s,f0\n"
             "a,10,c0,1,1.0,2\n"
             "b,5,c0,0,1.0,3\n");
  CHECK_THROWS_AS(read_trace(path), OrderError);

  // equal timestamps must be ordered by id
  write_text(path,
             "query_id,arrival_ms,cluster_id,label,cpu_time_s,f0\n"
             "b,10,c0,1,1.0,2\n"
             "a,10,c0,0,1.0,3\n");
  CHECK_THROWS_AS(read_trace(path), OrderError);
}

TEST_CASE("row width must match the header") {
  TempDir dir;
  const auto path = dir.file("width.trace");
  write_text(path,
             "query_id,arrival_ms,cluster_id,label,cpu_time_s,f0,f1\n"
             "a,1,c0,1,1.0,2\n");
  CHECK_THROWS_AS(read_trace(path), DimensionError);
}

TEST_CASE("digest format") {
  const std::vector<QueryRecord> records = {record("a", 1, {1.0}, Label::MO)};
  const auto digest = trace_digest(records, 1);
  const auto text = format_digest(digest);
  CHECK(text.size() == std::string("fnv1a64:").size() + 16);
  CHECK(text.substr(0, 8) == "fnv1a64:");
  for (char c : text.substr(8)) {
    CHECK(((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f')));
  }
  // digest is content-sensitive
  const std::vector<QueryRecord> other = {record("a", 1, {2.0}, Label::MO)};
  CHECK(trace_digest(other, 1) != digest);
}

TEST_CASE("bundle round-trip reproduces decisions") {
  // Small hand schema: two query-level features, one cluster-level.
  const FeatureSchema schema(3, {{"q", 0, 2}, {"c", 2, 3}}, 2);

  Rng rng = Rng::stream(29, "traceio.bundle");
  auto make_records = [&](const std::string& cluster, int n,
                          std::int64_t base_ms) {
    std::vector<QueryRecord> out;
    for (int i = 0; i < n; ++i) {
      const bool pos = i % 3 == 0;
      out.push_back(record(cluster + "_" + std::to_string(i), base_ms + i,
                           {rng.uniform(0, 1) + (pos ? 1.0 : 0.0),
                            rng.uniform(0, 1), rng.uniform(0, 1)},
                           pos ? Label::MO : Label::NonMO));
      out.back().cluster_id = cluster;
    }
    return out;
  };
  auto records = make_records("a", 30, 0);
  auto more = make_records("b", 30, 1000);
  records.insert(records.end(), more.begin(), more.end());

  model::TrainConfig tc;
  tc.rounds = 4;
  ArtifactBundle bundle;
  bundle.schema = schema;
  bundle.rule = rules::DiscriminativeRule::make_leaf({0, 0.2});
  bundle.global = model::train(records, tc);
  bundle.locals["a"] = model::train(make_records("a", 24, 0), tc);
  bundle.locals["b"] = model::train(make_records("b", 24, 0), tc);
  bundle.local_threshold = 5;
  bundle.prev_day_mo = {{"a", 4}, {"b", 2}};
  bundle.provenance.trace_digest = format_digest(trace_digest(records, 3));
  bundle.provenance.trace_records = records.size();
  bundle.provenance.built_at_ms = 59;
  bundle.provenance.seed = 29;
  bundle.index_snapshot["a"] = {{FeatureVector({1.5, 0.25, 0.5}), 17}};

  TempDir dir;
  save_bundle(bundle, dir.file("bundle"));
  const auto loaded = load_bundle(dir.file("bundle"));

  CHECK(loaded.schema.dimension() == 3);
  CHECK(loaded.rule.serialize() == bundle.rule.serialize());
  CHECK(loaded.locals.size() == 2);
  CHECK(loaded.local_threshold == 5);
  CHECK(loaded.prev_day_mo == bundle.prev_day_mo);
  CHECK(loaded.provenance.trace_digest == bundle.provenance.trace_digest);
  CHECK(loaded.provenance.trace_records == records.size());
  CHECK(loaded.provenance.built_at_ms == 59);
  CHECK(loaded.provenance.seed == 29);
  REQUIRE(loaded.index_snapshot.count("a") == 1);
  CHECK(loaded.index_snapshot.at("a")[0].features ==
        bundle.index_snapshot.at("a")[0].features);
  CHECK(loaded.index_snapshot.at("a")[0].inserted_ms == 17);

  // identical decisions on a probe set
  pipeline::Pipeline original(bundle);
  pipeline::Pipeline reloaded(loaded);
  for (int i = 0; i < 50; ++i) {
    QueryRecord probe = record("p" + std::to_string(i), 1000 + i,
                               {rng.uniform(0, 2), rng.uniform(0, 1),
                                rng.uniform(0, 1)},
                               Label::NonMO);
    probe.cluster_id = i % 2 == 0 ? "a" : "b";
    const auto d1 = original.decide(probe);
    const auto d2 = reloaded.decide(probe);
    CHECK(d1.verdict == d2.verdict);
    CHECK(d1.source == d2.source);
    CHECK(d1.confidence == d2.confidence);
    CHECK(d1.quota_cost_charged == d2.quota_cost_charged);
  }

  // save -> load -> save is byte stable across every artifact file
  save_bundle(loaded, dir.file("bundle2"));
  for (const auto& entry :
       fs::recursive_directory_iterator(dir.file("bundle"))) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir.file("bundle"));
    CHECK(read_text(entry.path().string()) ==
          read_text((fs::path(dir.file("bundle2")) / rel).string()));
  }
}

TEST_CASE("bundle loading rejects damage") {
  TempDir dir;
  SUBCASE("empty directory") {
    fs::create_directories(dir.file("empty"));
    CHECK_THROWS_AS(load_bundle(dir.file("empty")), CorruptArtifact);
  }
  SUBCASE("missing directory") {
    CHECK_THROWS_AS(load_bundle(dir.file("nope")), CorruptArtifact);
  }
}

TEST_CASE("schema expectation mismatches raise SchemaMismatch") {
  const FeatureSchema small(3, {{"q", 0, 2}, {"c", 2, 3}}, 2);
  std::vector<QueryRecord> records = {
      record("a", 1, {2.0, 0.0, 0.0}, Label::MO),
      record("b", 2, {0.0, 0.0, 0.0}, Label::NonMO),
      record("c", 3, {2.1, 0.0, 0.0}, Label::MO),
      record("d", 4, {0.1, 0.0, 0.0}, Label::NonMO)};
  model::TrainConfig tc;
  tc.rounds = 2;
  ArtifactBundle bundle;
  bundle.schema = small;
  bundle.rule = rules::DiscriminativeRule::make_leaf({0, 0.0});
  bundle.global = model::train(records, tc);
  bundle.prev_day_mo = {{"c0", 1}};
  bundle.provenance.trace_digest = format_digest(trace_digest(records, 3));

  TempDir dir;
  save_bundle(bundle, dir.file("b"));
  CHECK_NOTHROW(load_bundle(dir.file("b"), small));
  CHECK_THROWS_AS(load_bundle(dir.file("b"), FeatureSchema::default_schema()),
                  SchemaMismatch);
}
