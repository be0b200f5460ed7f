#include "edct/cli.hpp"

#include "edct/file_io.hpp"
#include "edct/run.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <ostream>

namespace edct {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

void error_record(std::ostream& err, std::string_view code, std::string_view message, json extra = json::object()) {
  json rec{{"error", code}, {"message", message}};
  for (auto& [k, v] : extra.items()) rec[k] = v;
  err << rec.dump() << '\n';
}

void print_findings(std::ostream& out, const std::vector<Finding>& findings) {
  for (const auto& f : findings) out << f.kind << '\t' << f.subject << '\t' << f.detail << '\n';
}

std::vector<Finding> all_findings(const fs::path& run) {
  auto report = verify_run(run);
  if (report.clean()) {
    for (auto& f : check_completeness(run)) report.findings.push_back(std::move(f));
  }
  return report.findings;
}

void require_run_dir(const fs::path& p) {
  if (!fs::is_directory(p)) throw UsageError("not a run directory: " + p.string());
}

std::optional<Mode> optional_mode(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return parse_mode(s);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const CliEnvironment& environment) {
  CLI::App app{"Counterfactual faithfulness audits for vision-language model explanations", "edct"};
  app.require_subcommand(1, 1);

  // run
  struct {
    std::string config, manifest, out, mode, cache;
    std::size_t offset = 0;
    std::optional<std::size_t> limit, workers;
    std::optional<std::uint64_t> seed;
  } run_opts;
  auto* run = app.add_subcommand("run", "Audit a dataset manifest and write a run directory");
  run->add_option("--config", run_opts.config, "Run configuration (JSON)")->required();
  run->add_option("--manifest", run_opts.manifest, "Dataset manifest (JSONL)")->required();
  run->add_option("--out", run_opts.out, "Run directory to create")->required();
  run->add_option("--mode", run_opts.mode, "live, record or replay")->check(CLI::IsMember({"live", "record", "replay"}));
  run->add_option("--cache", run_opts.cache, "Response cache directory");
  run->add_option("--offset", run_opts.offset, "First manifest row");
  run->add_option("--limit", run_opts.limit, "Number of manifest rows");
  run->add_option("--seed", run_opts.seed, "Run seed");
  run->add_option("--workers", run_opts.workers, "Concurrent examples")->check(CLI::Range(1, 256));

  // replay
  struct {
    std::string run, out, manifest, cache;
  } replay_opts;
  auto* replay = app.add_subcommand("replay", "Re-execute a recorded run from the cache and compare reports");
  replay->add_option("--run", replay_opts.run, "Recorded run directory")->required();
  replay->add_option("--out", replay_opts.out, "Run directory to create")->required();
  replay->add_option("--manifest", replay_opts.manifest, "Dataset manifest (defaults to the recorded path)");
  replay->add_option("--cache", replay_opts.cache, "Response cache (defaults to the recorded path)");

  // report
  struct {
    std::vector<std::string> runs, scores;
    std::string format = "table", out, label = "model", ci = "bootstrap";
    bool ablation = false, allow_tampered = false;
    std::uint64_t seed = 0;
    std::size_t resamples = 10000;
    double level = 0.95;
  } report_opts;
  auto* report = app.add_subcommand("report", "Render the score table for one or more runs");
  report->add_option("runs", report_opts.runs, "Run directories");
  report->add_option("--scores", report_opts.scores, "Per-example score files (JSONL) instead of runs");
  report->add_option("--format", report_opts.format, "table, csv or records")
      ->check(CLI::IsMember({"table", "csv", "records"}));
  report->add_option("--out", report_opts.out, "Write to this file instead of standard output");
  report->add_flag("--ablation", report_opts.ablation, "Render the extractor/judge by editor grid");
  report->add_flag("--allow-tampered", report_opts.allow_tampered, "Report even when verification finds problems");
  report->add_option("--label", report_opts.label, "Row label for --scores input");
  report->add_option("--ci", report_opts.ci, "Interval for --scores input: bootstrap or normal")
      ->check(CLI::IsMember({"bootstrap", "normal"}));
  report->add_option("--seed", report_opts.seed, "Bootstrap seed for --scores input");
  report->add_option("--resamples", report_opts.resamples, "Bootstrap resamples for --scores input");
  report->add_option("--level", report_opts.level, "Confidence level for --scores input");

  // verify
  std::string verify_run_dir;
  bool verify_json = false;
  auto* verify = app.add_subcommand("verify", "Check a run directory's integrity");
  verify->add_option("run", verify_run_dir, "Run directory")->required();
  verify->add_flag("--json", verify_json, "Print findings as JSON lines");

  // prompts
  std::string show, overrides;
  auto* prompts = app.add_subcommand("prompts", "List or print the prompt templates");
  prompts->add_option("--show", show, "Template name to print");
  prompts->add_option("--overrides", overrides, "Directory of template overrides");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    error_record(err, "usage", e.what());
    return kExitUsage;
  }

  try {
    if (*run) {
      const auto config = load_run_config(run_opts.config);
      RunOptions o;
      o.manifest_path = run_opts.manifest;
      o.out_dir = run_opts.out;
      o.mode = optional_mode(run_opts.mode);
      if (!run_opts.cache.empty()) o.cache_dir = fs::path(run_opts.cache);
      o.offset = run_opts.offset;
      o.limit = run_opts.limit;
      o.seed = run_opts.seed;
      o.workers = run_opts.workers;
      o.env = environment.env;
      o.resolver = environment.resolver;
      const auto summary = execute_run(config, o);
      out << summary.report;
      out << fmt::format("run {}: {} completed, {} excluded\n", summary.run_dir.string(), summary.completed,
                         summary.excluded);
      return kExitOk;
    }

    if (*replay) {
      require_run_dir(replay_opts.run);
      auto plan = plan_replay(replay_opts.run, replay_opts.out,
                              replay_opts.manifest.empty() ? std::nullopt : std::optional<fs::path>(replay_opts.manifest),
                              replay_opts.cache.empty() ? std::nullopt : std::optional<fs::path>(replay_opts.cache));
      plan.options.env = environment.env;
      plan.options.resolver = environment.resolver;
      const auto summary = execute_run(plan.config, plan.options);
      std::vector<std::string> differing;
      for (const auto* name : {"results.jsonl", "report.txt", "report.csv", "report.jsonl"}) {
        const bool a = fs::exists(fs::path(replay_opts.run) / name);
        const bool b = fs::exists(summary.run_dir / name);
        if (a != b || (a && read_file(fs::path(replay_opts.run) / name) != read_file(summary.run_dir / name))) {
          differing.emplace_back(name);
        }
      }
      if (!differing.empty()) {
        error_record(err, "replay-mismatch", "replayed outputs differ from the recorded run", {{"files", differing}});
        return kExitFailure;
      }
      out << summary.report;
      out << fmt::format("replay {}: identical to {}\n", summary.run_dir.string(), replay_opts.run);
      return kExitOk;
    }

    if (*report) {
      const auto format = parse_report_format(report_opts.format);
      std::vector<ReportRow> rows;
      if (report_opts.runs.empty() == report_opts.scores.empty()) {
        throw UsageError("give either run directories or --scores files");
      }
      for (const auto& dir : report_opts.runs) {
        require_run_dir(dir);
        const auto findings = all_findings(dir);
        if (!findings.empty() && !report_opts.allow_tampered) {
          print_findings(err, findings);
          error_record(err, errc_name(Errc::verification_failed), "run " + dir + " failed verification",
                       {{"findings", findings.size()}});
          return kExitFailure;
        }
        auto row = report_row(load_run_report_source(dir));
        if (!report_opts.ablation) row.ablation.reset();
        rows.push_back(std::move(row));
      }
      for (const auto& file : report_opts.scores) {
        CiOptions ci;
        ci.method = parse_ci_method(report_opts.ci);
        ci.seed = report_opts.seed;
        ci.resamples = report_opts.resamples;
        ci.level = report_opts.level;
        const std::string label = report_opts.scores.size() == 1 ? report_opts.label : fs::path(file).stem().string();
        auto scores = parse_results_jsonl(read_file(file));
        rows.push_back(summarize(std::move(scores.completed), scores.excluded, label, ci));
      }
      const auto text = build_report(rows, format);
      if (report_opts.out.empty()) {
        out << text;
      } else {
        write_file_atomic(report_opts.out, text);
      }
      return kExitOk;
    }

    if (*verify) {
      require_run_dir(verify_run_dir);
      const auto findings = all_findings(verify_run_dir);
      if (verify_json) {
        for (const auto& f : findings) out << json{{"kind", f.kind}, {"subject", f.subject}, {"detail", f.detail}}.dump() << '\n';
      } else if (findings.empty()) {
        out << "clean\n";
      } else {
        print_findings(out, findings);
      }
      return findings.empty() ? kExitOk : kExitFailure;
    }

    if (*prompts) {
      const PromptSet set = overrides.empty() ? PromptSet::builtin() : PromptSet::with_overrides(overrides);
      if (!show.empty()) {
        for (auto kind : {TemplateKind::vqa_explanation, TemplateKind::concept_extraction, TemplateKind::llm_analysis}) {
          if (template_name(kind) == show) {
            out << set.get(kind).body() << '\n';
            return kExitOk;
          }
        }
        throw UsageError("unknown template '" + show + "'");
      }
      for (auto kind : {TemplateKind::vqa_explanation, TemplateKind::concept_extraction, TemplateKind::llm_analysis}) {
        const auto& t = set.get(kind);
        out << fmt::format("{}\t{}\t{} bytes\n", t.name(), t.digest().hex(), t.body().size());
      }
      return kExitOk;
    }
  } catch (const UsageError& e) {
    error_record(err, "usage", e.what());
    return kExitUsage;
  } catch (const ManifestError& e) {
    json issues = json::array();
    for (const auto& i : e.issues()) issues.push_back({{"line", i.line}, {"code", errc_name(i.code)}, {"reason", i.reason}});
    error_record(err, errc_name(e.code()), e.what(), {{"issues", issues}});
    return kExitFailure;
  } catch (const Error& e) {
    error_record(err, errc_name(e.code()), e.what());
    return kExitFailure;
  } catch (const std::exception& e) {
    error_record(err, "internal", e.what());
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace edct
