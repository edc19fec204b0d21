#include "safeload/cli.hpp"

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "CLI11.hpp"
#include "safeload/core.hpp"
#include "safeload/pipeline.hpp"
#include "safeload/sim.hpp"
#include "safeload/text.hpp"
#include "safeload/traceio.hpp"
#include "safeload/workloadgen.hpp"

namespace safeload::cli {
namespace {

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open for writing: " + path);
  f << text;
  f.flush();
  if (!f) throw Error("write failed: " + path);
}

std::string fixed(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string metric_cell(double value, bool defined, int digits) {
  std::string s = fixed(value, digits);
  if (!defined) s += " (degenerate)";
  return s;
}

// Attaches the `--config` help entry. The file itself is expanded into
// flags before parsing; see expand_config below.
void enable_config(CLI::App* sub) {
  static std::string ignored;
  sub->add_option("--config", ignored,
                  "file with one `key = value` per line; command-line flags "
                  "override it");
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' ||
                        s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

// Rewrites `--config FILE` into the flags the file holds, keeping any flag
// the command line already carries so it wins. Unknown keys surface as
// unexpected flags when the expanded line is parsed. Returns 0, or the
// exit code on failure.
int expand_config(std::vector<std::string>& args, std::ostream& err) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    std::size_t erase = 0;
    if (a == "--config") {
      if (i + 1 >= args.size()) {
        err << "error: --config requires a file\n";
        return 1;
      }
      path = args[i + 1];
      erase = 2;
    } else if (a.rfind("--config=", 0) == 0) {
      path = a.substr(std::string_view("--config=").size());
      erase = 1;
    } else {
      continue;
    }
    args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
               args.begin() + static_cast<std::ptrdiff_t>(i + erase));
    for (const std::string& rest : args) {
      if (rest == "--config" || rest.rfind("--config=", 0) == 0) {
        err << "error: --config may be given only once\n";
        return 1;
      }
    }
    break;
  }
  if (path.empty()) return 0;

  std::ifstream f(path, std::ios::binary);
  if (!f) {
    err << "error: cannot open config: " << path << "\n";
    return 2;
  }
  std::vector<std::string> injected;
  std::string raw;
  int line_no = 0;
  while (std::getline(f, raw)) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos || trim(line.substr(0, eq)).empty()) {
      err << "error: " << path << ':' << line_no
          << ": expected `key = value`\n";
      return 1;
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    const std::string flag = "--" + key;
    bool overridden = false;
    for (const std::string& a : args) {
      if (a == flag || a.rfind(flag + "=", 0) == 0) {
        overridden = true;
        break;
      }
    }
    if (!overridden) injected.push_back(flag + "=" + value);
  }
  args.insert(args.end(), injected.begin(), injected.end());
  return 0;
}

int cmd_gen(const workloadgen::GenConfig& cfg, const std::string& out_dir,
            std::ostream& out) {
  cfg.validate();
  auto days = workloadgen::generate(cfg);
  const auto schema = FeatureSchema::default_schema();
  std::filesystem::create_directories(out_dir);
  for (std::size_t d = 0; d < days.size(); ++d) {
    auto path =
        (std::filesystem::path(out_dir) / ("day" + std::to_string(d) + ".trace"))
            .string();
    traceio::write_trace(days[d], schema.dimension(), path);
    std::size_t mo = 0;
    for (const auto& r : days[d]) mo += r.label == Label::MO ? 1 : 0;
    out << "wrote " << path << ": " << days[d].size() << " records, " << mo
        << " mo\n";
  }
  return 0;
}

int cmd_build(const std::string& trace_path, const std::string& out_dir,
              const pipeline::BuildConfig& bc, std::ostream& out) {
  auto records = traceio::read_trace(trace_path);
  const auto schema = FeatureSchema::default_schema();
  auto bundle = pipeline::build_pipeline(records, schema, bc);
  traceio::save_bundle(bundle, out_dir);
  out << "wrote bundle " << out_dir << ": " << records.size()
      << " training records, " << bundle.locals.size() << " local models\n";
  return 0;
}

int cmd_replay(const std::string& bundle_dir, const std::string& trace_path,
               const sim::ReplayOptions& options,
               const std::string& report_path, const std::string& log_path,
               std::ostream& out) {
  auto bundle = traceio::load_bundle(bundle_dir);
  auto records = traceio::read_trace(trace_path);
  auto report = sim::replay(records, bundle, sim::CostModel{}, options);
  auto text = sim::report_to_text(report);
  if (report_path.empty())
    out << text;
  else
    write_file(report_path, text);
  if (!log_path.empty()) write_file(log_path, sim::log_to_csv(report));
  return 0;
}

int cmd_ablate(const std::string& train_path, const std::string& test_path,
               const pipeline::BuildConfig& bc, sim::FeedbackMode feedback,
               std::ostream& out) {
  auto day1 = traceio::read_trace(train_path);
  auto day2 = traceio::read_trace(test_path);
  const auto schema = FeatureSchema::default_schema();
  auto result =
      sim::run_ablation(day1, day2, schema, bc, sim::CostModel{}, feedback);
  out << sim::ablation_to_text(result);
  return 0;
}

int cmd_sweep(const std::string& train_path, const std::string& test_path,
              const pipeline::BuildConfig& bc,
              const std::vector<double>& gammas,
              const std::vector<double>& betas, sim::FeedbackMode feedback,
              std::ostream& out) {
  auto day1 = traceio::read_trace(train_path);
  auto day2 = traceio::read_trace(test_path);
  const auto schema = FeatureSchema::default_schema();
  auto result = sim::sweep_params(day1, day2, schema, bc, sim::CostModel{},
                                  gammas, betas, feedback);
  out << sim::sweep_to_text(result);
  return 0;
}

// Recounts a decision log from its outcome_class column and renders the
// admission metrics as a text table, plus decision counts by source.
int cmd_report(const std::string& log_path, std::ostream& out) {
  std::ifstream f(log_path, std::ios::binary);
  if (!f) throw Error("cannot open: " + log_path);

  const std::string expected_header =
      "query_id,verdict,source,confidence,cost_charged,outcome_class";
  std::string line;
  if (!std::getline(f, line)) throw ParseError("empty decision log", 1, 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != expected_header)
    throw ParseError("unexpected decision log header", 1, 1);

  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::map<std::string, std::uint64_t> by_source;
  std::map<std::string, std::uint64_t> by_verdict;
  std::size_t line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest = line;
    while (true) {
      auto comma = rest.find(',');
      if (comma == std::string_view::npos) {
        fields.push_back(rest);
        break;
      }
      fields.push_back(rest.substr(0, comma));
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != 6)
      throw ParseError("expected 6 fields", line_no, fields.size());
    ++by_verdict[std::string(fields[1])];
    ++by_source[std::string(fields[2])];
    std::string_view oc = fields[5];
    if (oc == "TP")
      ++tp;
    else if (oc == "FP")
      ++fp;
    else if (oc == "FN")
      ++fn;
    else if (oc == "TN")
      ++tn;
    else
      throw ParseError("unknown outcome class", line_no, 6);
  }

  auto m = sim::compute_metrics(tp, fp, fn, tn);
  out << "admission metrics (" << (tp + fp + fn + tn) << " decisions)\n";
  out << "tp\tfp\tfn\ttn\tprecision\trecall\tf1\taccuracy\n";
  out << tp << '\t' << fp << '\t' << fn << '\t' << tn << '\t'
      << metric_cell(m.precision, m.precision_defined, 4) << '\t'
      << metric_cell(m.recall, m.recall_defined, 4) << '\t'
      << metric_cell(m.f1, m.f1_defined, 4) << '\t'
      << metric_cell(m.accuracy, m.accuracy_defined, 6) << '\n';
  out << "decisions by verdict\n";
  for (const auto& [name, count] : by_verdict)
    out << '\t' << name << '\t' << count << '\n';
  out << "decisions by source\n";
  for (const auto& [name, count] : by_source)
    out << '\t' << name << '\t' << count << '\n';
  return 0;
}

int cmd_describe(const std::string& trace_path, std::ostream& out) {
  auto records = traceio::read_trace(trace_path);
  auto profile = workloadgen::describe(records);
  out << "total\t" << profile.total << '\n';
  out << "mo\t" << profile.mo_count << '\n';
  out << "imbalance\t" << profile.imbalance << '\n';
  out << "repetition_rate\t" << format_double(profile.repetition_rate) << '\n';
  out << "per_cluster_mo\n";
  for (const auto& [cluster, count] : profile.per_cluster_mo)
    out << '\t' << cluster << '\t' << count << '\n';
  return 0;
}

}  // namespace

int run_cli(std::vector<std::string> args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"admission-control pipeline for memory-overloading queries"};
  app.name("safeload");
  app.require_subcommand(1);

  // gen
  workloadgen::GenConfig gen_cfg;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen", "generate synthetic daily traces");
  gen->add_option("--seed", gen_cfg.seed, "generator seed")
      ->capture_default_str();
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--clusters", gen_cfg.n_clusters, "cluster count")
      ->capture_default_str();
  gen->add_option("--per-cluster", gen_cfg.queries_per_cluster,
                  "queries per cluster per day")
      ->capture_default_str();
  gen->add_option("--mo-ratio", gen_cfg.mo_ratio, "target MO fraction")
      ->capture_default_str();
  gen->add_option("--repeat-rate", gen_cfg.repeat_rate,
                  "fraction of near-duplicate queries")
      ->capture_default_str();
  gen->add_option("--group-size", gen_cfg.mo_group_size,
                  "records per MO incident")
      ->capture_default_str();
  gen->add_option("--hard-neg", gen_cfg.hard_negative_rate,
                  "rule-passing non-MO fraction")
      ->capture_default_str();
  gen->add_option("--days", gen_cfg.days, "number of daily traces")
      ->capture_default_str();
  enable_config(gen);

  // shared build knobs (build, ablate, sweep)
  struct BuildArgs {
    std::string trace;
    std::string out;
    pipeline::BuildConfig bc;
  };
  auto add_build_knobs = [](CLI::App* sub, pipeline::BuildConfig& bc) {
    sub->add_option("--seed", bc.seed, "training seed")->capture_default_str();
    sub->add_option("--rounds", bc.train.rounds, "boosting rounds")
        ->capture_default_str();
    sub->add_option("--learning-rate", bc.train.learning_rate,
                    "boosting learning rate")
        ->capture_default_str();
    sub->add_option("--max-depth", bc.train.max_depth, "tree depth limit")
        ->capture_default_str();
    sub->add_option("--local-threshold", bc.local_threshold,
                    "positive records required for a per-cluster model")
        ->capture_default_str();
    sub->add_option("--gamma", bc.quota.gamma, "quota uncertainty weight")
        ->capture_default_str();
    sub->add_option("--beta", bc.quota.beta, "false-negative discount")
        ->capture_default_str();
  };

  BuildArgs build_args;
  auto* build = app.add_subcommand("build", "train a bundle from one trace");
  build->add_option("--trace", build_args.trace, "training trace file")
      ->required();
  build->add_option("--out", build_args.out, "bundle output directory")
      ->required();
  add_build_knobs(build, build_args.bc);
  enable_config(build);

  // replay
  std::string replay_bundle, replay_trace, replay_report, replay_log;
  std::string replay_feedback = "completion";
  bool no_rule = false, no_correction = false, no_locals = false,
       no_quota = false;
  auto* replay =
      app.add_subcommand("replay", "replay a trace through a built bundle");
  replay->add_option("--bundle", replay_bundle, "bundle directory")
      ->required();
  replay->add_option("--trace", replay_trace, "trace file")->required();
  replay->add_flag("--no-rule", no_rule, "disable the rule filter");
  replay->add_flag("--no-correction", no_correction,
                   "disable the correction index");
  replay->add_flag("--no-locals", no_locals, "disable per-cluster models");
  replay->add_flag("--no-quota", no_quota, "disable the quota gate");
  replay
      ->add_option("--feedback", replay_feedback,
                   "when admit outcomes feed back")
      ->check(CLI::IsMember({"completion", "immediate"}))
      ->capture_default_str();
  replay->add_option("--report", replay_report,
                     "write the text summary here instead of stdout");
  replay->add_option("--log", replay_log, "write the per-query CSV log here");
  enable_config(replay);

  // ablate
  BuildArgs ablate_args;
  std::string ablate_test;
  std::string ablate_feedback = "completion";
  auto* ablate = app.add_subcommand(
      "ablate", "build once, replay with each stage toggled off");
  ablate->add_option("--train", ablate_args.trace, "training trace file")
      ->required();
  ablate->add_option("--test", ablate_test, "evaluation trace file")
      ->required();
  add_build_knobs(ablate, ablate_args.bc);
  ablate
      ->add_option("--feedback", ablate_feedback,
                   "when admit outcomes feed back")
      ->check(CLI::IsMember({"completion", "immediate"}))
      ->capture_default_str();
  enable_config(ablate);

  // sweep
  BuildArgs sweep_args;
  std::string sweep_test;
  std::string sweep_feedback = "completion";
  std::vector<double> sweep_gammas, sweep_betas;
  auto* sweep =
      app.add_subcommand("sweep", "replay one bundle across quota parameters");
  sweep->add_option("--train", sweep_args.trace, "training trace file")
      ->required();
  sweep->add_option("--test", sweep_test, "evaluation trace file")->required();
  sweep->add_option("--gamma", sweep_gammas, "gamma values")->required();
  sweep->add_option("--beta", sweep_betas, "beta values")->required();
  sweep->add_option("--seed", sweep_args.bc.seed, "training seed")
      ->capture_default_str();
  sweep
      ->add_option("--feedback", sweep_feedback,
                   "when admit outcomes feed back")
      ->check(CLI::IsMember({"completion", "immediate"}))
      ->capture_default_str();
  enable_config(sweep);

  // report
  std::string report_log;
  auto* report =
      app.add_subcommand("report", "recount a decision log into metrics");
  report->add_option("--log", report_log, "decision log CSV file")->required();
  enable_config(report);

  // describe
  std::string describe_trace;
  auto* describe =
      app.add_subcommand("describe", "summarize a trace's workload profile");
  describe->add_option("--trace", describe_trace, "trace file")->required();
  enable_config(describe);

  if (const int rc = expand_config(args, err); rc != 0) return rc;

  try {
    // CLI11's vector overload consumes from the back.
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    err << app.get_name() << " --help shows usage\n";
    return 1;
  }

  auto feedback_mode = [](const std::string& name) {
    return name == "immediate" ? sim::FeedbackMode::Immediate
                               : sim::FeedbackMode::Completion;
  };

  try {
    if (gen->parsed()) return cmd_gen(gen_cfg, gen_out, out);
    if (build->parsed()) {
      build_args.bc.train.seed = build_args.bc.seed;
      return cmd_build(build_args.trace, build_args.out, build_args.bc, out);
    }
    if (replay->parsed()) {
      sim::ReplayOptions options;
      options.toggles.rule_filter = !no_rule;
      options.toggles.correction = !no_correction;
      options.toggles.local_models = !no_locals;
      options.toggles.quota = !no_quota;
      options.feedback = feedback_mode(replay_feedback);
      options.keep_log = !replay_log.empty();
      return cmd_replay(replay_bundle, replay_trace, options, replay_report,
                        replay_log, out);
    }
    if (ablate->parsed()) {
      ablate_args.bc.train.seed = ablate_args.bc.seed;
      return cmd_ablate(ablate_args.trace, ablate_test, ablate_args.bc,
                        feedback_mode(ablate_feedback), out);
    }
    if (sweep->parsed()) {
      sweep_args.bc.train.seed = sweep_args.bc.seed;
      return cmd_sweep(sweep_args.trace, sweep_test, sweep_args.bc,
                       sweep_gammas, sweep_betas, feedback_mode(sweep_feedback),
                       out);
    }
    if (report->parsed()) return cmd_report(report_log, out);
    if (describe->parsed()) return cmd_describe(describe_trace, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  err << "error: no subcommand\n";
  return 1;
}

}  // namespace safeload::cli
