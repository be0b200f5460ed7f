#include "edct/run.hpp"

#include "edct/file_io.hpp"
#include "edct/mock_transport.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <set>
#include <unistd.h>

namespace edct {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void config_fail(const std::string& what) { throw Error(Errc::config_error, what); }

template <typename T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
  if (!obj.contains(key) || obj[key].is_null()) return fallback;
  try {
    return obj[key].get<T>();
  } catch (const json::exception&) {
    config_fail(where + ": field '" + key + "' has the wrong type");
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

ProviderConfig parse_provider(const std::string& name, const json& j) {
  const std::string where = "provider '" + name + "'";
  if (!j.is_object()) config_fail(where + " must be an object");
  static const std::set<std::string> known{"kind", "endpoint_url", "model_id", "api_key_env",
                                           "max_output_tokens", "timeout_ms", "max_retries",
                                           "requests_per_minute", "temperature", "label", "persona"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) config_fail(where + ": unknown field '" + key + "'");
  }
  ProviderConfig p;
  p.name = name;
  p.kind = get_or<std::string>(j, "kind", "openai", where);
  p.endpoint_url = get_or<std::string>(j, "endpoint_url", "", where);
  p.persona = get_or<std::string>(j, "persona", "", where);
  // Personas behave differently, so they must not share cache entries.
  const std::string mock_model = p.persona.empty() ? name : name + "-" + p.persona;
  p.model_id = get_or<std::string>(j, "model_id", p.kind == "mock" ? mock_model : "", where);
  p.api_key_env = get_or<std::string>(j, "api_key_env", "", where);
  p.label = get_or<std::string>(j, "label", "", where);
  p.max_output_tokens = get_or<int>(j, "max_output_tokens", p.max_output_tokens, where);
  p.timeout = std::chrono::milliseconds(get_or<long long>(j, "timeout_ms", p.timeout.count(), where));
  p.max_retries = get_or<int>(j, "max_retries", p.max_retries, where);
  p.requests_per_minute = get_or<int>(j, "requests_per_minute", p.requests_per_minute, where);
  if (j.contains("temperature") && !j["temperature"].is_null()) {
    p.temperature = get_or<double>(j, "temperature", 0.0, where);
  }
  if (p.kind != "mock" && p.api_key_env.empty()) config_fail(where + ": api_key_env must name an environment variable");
  p.validate();
  return p;
}

bool is_secret_key(std::string key) {
  std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
  static const std::set<std::string> secret{"api_key", "apikey", "api-key", "secret", "password", "authorization", "token"};
  return secret.contains(key);
}

void redact_in_place(json& j, const std::vector<std::string>& values) {
  if (j.is_object()) {
    for (auto& [key, v] : j.items()) {
      if (is_secret_key(key)) v = "[REDACTED]";
      else redact_in_place(v, values);
    }
  } else if (j.is_array()) {
    for (auto& v : j) redact_in_place(v, values);
  } else if (j.is_string()) {
    auto s = j.get<std::string>();
    bool changed = false;
    for (const auto& secret : values) {
      for (auto pos = s.find(secret); pos != std::string::npos; pos = s.find(secret, pos)) {
        s.replace(pos, secret.size(), "[REDACTED]");
        pos += 10;
        changed = true;
      }
    }
    if (changed) j = s;
  }
}

std::vector<const ProviderConfig*> used_providers(const RunConfig& c) {
  std::vector<const ProviderConfig*> out{&c.pipeline.vlm, &c.pipeline.extractor, &c.pipeline.editor};
  for (const auto& j : c.pipeline.judges) out.push_back(&j);
  return out;
}

std::string dataset_listing(const DatasetManifest& m) {
  std::string out;
  for (const auto& r : m.rows) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["question"] = r.question;
    j["image_digest"] = r.image_digest.hex();
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace

RunConfig parse_run_config(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) config_fail("config must be a JSON object");
  static const std::set<std::string> known{"label", "providers", "target_vlm", "extractor", "judges", "editor",
                                           "k_max", "workers", "seed", "mode", "cache_dir", "prompts_dir",
                                           "ci", "ablation"};
  for (const auto& [key, _] : doc.items()) {
    if (!known.contains(key)) config_fail("unknown config field '" + key + "'");
  }
  RunConfig c;
  c.raw = doc;
  c.base_dir = base_dir;
  const std::string where = "config";
  if (!doc.contains("providers") || !doc["providers"].is_object() || doc["providers"].empty()) {
    config_fail("config needs a non-empty 'providers' object");
  }
  for (const auto& [name, p] : doc["providers"].items()) c.providers.emplace(name, parse_provider(name, p));

  auto provider = [&](const std::string& role, const std::string& name) -> const ProviderConfig& {
    const auto it = c.providers.find(name);
    if (it == c.providers.end()) config_fail(role + " refers to unknown provider '" + name + "'");
    return it->second;
  };
  auto required_name = [&](const char* key) {
    const auto name = get_or<std::string>(doc, key, "", where);
    if (name.empty()) config_fail(std::string("config field '") + key + "' is required");
    return name;
  };
  c.pipeline.vlm = provider("target_vlm", required_name("target_vlm"));
  c.pipeline.extractor = provider("extractor", required_name("extractor"));
  c.pipeline.editor = provider("editor", required_name("editor"));
  if (c.pipeline.vlm.kind == "image-edit" || c.pipeline.extractor.kind == "image-edit") {
    config_fail("chat roles cannot use an image-edit provider");
  }
  if (c.pipeline.editor.kind == "openai") config_fail("editor must be an image-edit or mock provider");

  std::vector<std::string> judge_names;
  if (doc.contains("judges")) {
    judge_names = get_or<std::vector<std::string>>(doc, "judges", {}, where);
  } else {
    judge_names.push_back(c.pipeline.extractor.name);
  }
  if (judge_names.empty()) config_fail("'judges' must list at least one provider");
  for (const auto& n : judge_names) {
    const auto& j = provider("judges", n);
    if (j.kind == "image-edit") config_fail("judge '" + n + "' cannot be an image-edit provider");
    c.pipeline.judges.push_back(j);
  }

  const auto k = get_or<long long>(doc, "k_max", 1, where);
  if (k < 1 || k > 16) config_fail("k_max must lie in [1, 16]");
  c.pipeline.k_max = static_cast<std::size_t>(k);
  const auto workers = get_or<long long>(doc, "workers", 1, where);
  if (workers < 1 || workers > 256) config_fail("workers must lie in [1, 256]");
  c.workers = static_cast<std::size_t>(workers);
  c.pipeline.run_seed = get_or<std::uint64_t>(doc, "seed", 0, where);
  c.mode = parse_mode(get_or<std::string>(doc, "mode", "live", where));
  c.cache_dir = resolve(base_dir, get_or<std::string>(doc, "cache_dir", "cache", where));
  if (doc.contains("prompts_dir")) c.prompts_dir = resolve(base_dir, get_or<std::string>(doc, "prompts_dir", "", where));

  c.ci.seed = c.pipeline.run_seed;
  if (doc.contains("ci")) {
    const auto& ci = doc["ci"];
    if (!ci.is_object()) config_fail("'ci' must be an object");
    c.ci.method = parse_ci_method(get_or<std::string>(ci, "method", "bootstrap", "ci"));
    c.ci.level = get_or<double>(ci, "level", 0.95, "ci");
    const auto resamples = get_or<long long>(ci, "resamples", 10000, "ci");
    if (!(c.ci.level > 0.0 && c.ci.level < 1.0)) config_fail("ci.level must lie in (0, 1)");
    if (resamples < 1) config_fail("ci.resamples must be positive");
    c.ci.resamples = static_cast<std::size_t>(resamples);
  }

  c.label = get_or<std::string>(doc, "label", c.pipeline.vlm.display_label(), where);
  c.ablation.extractor_judge = c.pipeline.extractor.display_label();
  c.ablation.editor = c.pipeline.editor.display_label();
  if (doc.contains("ablation")) {
    const auto& a = doc["ablation"];
    if (!a.is_object()) config_fail("'ablation' must be an object");
    c.ablation.extractor_judge = get_or<std::string>(a, "extractor_judge", c.ablation.extractor_judge, "ablation");
    c.ablation.editor = get_or<std::string>(a, "editor", c.ablation.editor, "ablation");
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    config_fail(std::string("cannot read config: ") + e.what());
  }
  const auto doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) config_fail("config " + path.string() + " is not valid JSON");
  return parse_run_config(doc, fs::absolute(path).parent_path());
}

json redact_secrets(const json& doc, const RunConfig& config, const EnvLookup& env) {
  std::vector<std::string> values;
  for (const auto& [_, p] : config.providers) {
    if (p.api_key_env.empty()) continue;
    if (auto v = env(p.api_key_env); v && !v->empty()) values.push_back(*v);
  }
  json out = doc;
  redact_in_place(out, values);
  return out;
}

void check_credentials(const RunConfig& config, Mode mode, const EnvLookup& env) {
  if (mode == Mode::replay) return;
  for (const auto* p : used_providers(config)) {
    if (!p->needs_api_key()) continue;
    const auto v = env(p->api_key_env);
    if (!v || v->empty()) {
      config_fail("provider '" + p->name + "' needs environment variable " + p->api_key_env + ", which is not set");
    }
  }
}

TransportResolver default_resolver(const EnvLookup& env) {
  auto mock = std::make_shared<MockTransport>();
  auto http = std::make_shared<HttpTransport>(env);
  return [mock, http](const ProviderConfig& p) -> std::shared_ptr<Transport> {
    if (p.kind == "mock") return mock;
    return http;
  };
}

std::string report_file_name(ReportFormat f) { return fmt::format("report.{}", report_extension(f)); }

RunSummary execute_run(const RunConfig& config, const RunOptions& options) {
  const Mode mode = options.mode.value_or(config.mode);
  const std::uint64_t seed = options.seed.value_or(config.pipeline.run_seed);
  const std::size_t workers = options.workers.value_or(config.workers);
  require(workers >= 1, "workers must be positive");
  const fs::path cache_dir = options.cache_dir.value_or(config.cache_dir);

  // Everything that can be rejected up front is, before touching the disk.
  check_credentials(config, mode, options.env);
  const auto full = load_manifest(options.manifest_path);
  const auto records =
      slice(full, options.offset, options.limit.value_or(full.rows.size() - std::min(options.offset, full.rows.size())));
  if (mode == Mode::replay && !fs::is_directory(cache_dir)) {
    config_fail("replay needs an existing cache directory: " + cache_dir.string());
  }
  const PromptSet prompts = config.prompts_dir ? PromptSet::with_overrides(*config.prompts_dir) : PromptSet::builtin();

  std::error_code ec;
  if (fs::exists(options.out_dir, ec) && (!fs::is_directory(options.out_dir, ec) || !fs::is_empty(options.out_dir, ec))) {
    throw Error(Errc::directory_not_empty, "output directory is not empty: " + options.out_dir.string());
  }

  PipelineConfig pipeline = config.pipeline;
  pipeline.run_seed = seed;
  CiOptions ci = config.ci;
  ci.seed = seed;

  nlohmann::ordered_json snapshot;
  snapshot["base_dir"] = fs::absolute(config.base_dir).string();
  snapshot["config"] = redact_secrets(config.raw, config, options.env);
  snapshot["resolved"] = {{"cache_dir", fs::absolute(cache_dir).string()},
                          {"prompts_dir", config.prompts_dir ? fs::absolute(*config.prompts_dir).string() : ""}};

  const std::string listing = dataset_listing(records);
  RunInfo info;
  info.seed = seed;
  info.mode = std::string(mode_name(mode));
  info.config_snapshot = json::parse(snapshot.dump());
  info.prompt_template_digests = prompts.digests();
  {
    Sha256Builder b;
    b.field("edct-run-id").field(info.config_snapshot.dump()).field(listing).field(seed);
    info.run_id = b.finish().hex().substr(0, 16);
  }

  const fs::path out = fs::absolute(options.out_dir).lexically_normal();
  const fs::path staging = out.parent_path() / fmt::format(".{}.staging-{}", out.filename().string(), ::getpid());
  fs::remove_all(staging, ec);
  fs::create_directories(out.parent_path(), ec);

  RunSummary summary;
  try {
    auto store = open_run(staging, info);
    if (options.fault_hook) store->set_fault_hook(options.fault_hook);

    json inputs = json::object();
    inputs["dataset_manifest"] = store->put_artifact(ArtifactKind::dataset_manifest, listing, "application/x-ndjson").hex();
    for (auto kind : {TemplateKind::vqa_explanation, TemplateKind::concept_extraction, TemplateKind::llm_analysis}) {
      const auto& t = prompts.get(kind);
      inputs[std::string(t.name())] = store->put_artifact(ArtifactKind::prompt_template, t.body(), "text/plain; charset=utf-8").hex();
    }
    store->set_manifest_field("inputs", inputs);
    store->set_manifest_field("replay", {{"manifest_path", fs::absolute(options.manifest_path).string()},
                                         {"offset", options.offset},
                                         {"limit", records.rows.size()},
                                         {"cache_dir", fs::absolute(cache_dir).string()}});

    GatewayOptions gopts;
    gopts.mode = mode;
    gopts.cache_dir = cache_dir;
    gopts.clock = options.clock;
    gopts.jitter_seed = seed;
    Gateway gateway(gopts, options.resolver ? options.resolver : default_resolver(options.env));
    PipelineDeps deps{gateway, pipeline, prompts, store.get()};
    const auto results = run_examples(deps, records.rows, workers);

    ScoreFile scores;
    for (const auto& r : results) {
      if (r.status == ExampleStatus::excluded) {
        ++scores.excluded;
      } else {
        scores.completed.push_back({r.example_id, r.example_pcs, r.example_ncc, r.example_ccs});
      }
    }
    summary.completed = scores.completed.size();
    summary.excluded = scores.excluded;

    store->set_manifest_field("report", {{"label", config.label},
                                         {"ablation", {{"extractor_judge", config.ablation.extractor_judge},
                                                       {"editor", config.ablation.editor}}},
                                         {"ci", {{"method", ci_method_name(ci.method)},
                                                 {"level", ci.level},
                                                 {"resamples", ci.resamples},
                                                 {"seed", ci.seed}}}});
    store->set_manifest_field("counts", {{"examples", results.size()},
                                         {"completed", summary.completed},
                                         {"excluded", summary.excluded}});
    store->add_file("results.jsonl", results_jsonl(results));
    if (!scores.completed.empty()) {
      RunReportSource src{config.label, config.ablation, ci, scores};
      ReportRow row = report_row(src);
      if (!config.raw.contains("ablation")) row.ablation.reset();
      for (auto f : {ReportFormat::table, ReportFormat::csv, ReportFormat::records}) {
        const auto text = build_report(std::span(&row, 1), f);
        store->add_file(report_file_name(f), text);
        if (f == ReportFormat::table) summary.report = text;
      }
    }
    store->close();
    summary.gateway = gateway.stats();
    store.reset();

    if (options.fault_hook) options.fault_hook("rename");
    if (fs::exists(out, ec)) fs::remove(out, ec);
    fs::rename(staging, out, ec);
    if (ec) throw Error(Errc::io_failure, "cannot move run into place at " + out.string() + ": " + ec.message());
  } catch (...) {
    fs::remove_all(staging, ec);
    throw;
  }
  summary.run_dir = out;
  return summary;
}

RunReportSource load_run_report_source(const fs::path& run_dir) {
  const auto manifest = json::parse(read_file(run_dir / "manifest"), nullptr, false);
  if (manifest.is_discarded() || !manifest.is_object()) {
    throw Error(Errc::parse_error, "manifest of " + run_dir.string() + " is not valid JSON");
  }
  RunReportSource src;
  const auto report = manifest.value("report", json::object());
  src.label = report.value("label", run_dir.filename().string());
  const auto ablation = report.value("ablation", json::object());
  src.ablation.extractor_judge = ablation.value("extractor_judge", "");
  src.ablation.editor = ablation.value("editor", "");
  const auto ci = report.value("ci", json::object());
  src.ci.method = parse_ci_method(ci.value("method", "bootstrap"));
  src.ci.level = ci.value("level", 0.95);
  src.ci.resamples = ci.value("resamples", std::size_t{10000});
  src.ci.seed = ci.value("seed", manifest.value("seed", std::uint64_t{0}));
  src.scores = parse_results_jsonl(read_file(run_dir / "results.jsonl"));
  return src;
}

ReportRow report_row(const RunReportSource& source) {
  ReportRow row = summarize(source.scores.completed, source.scores.excluded, source.label, source.ci);
  if (!source.ablation.extractor_judge.empty() || !source.ablation.editor.empty()) row.ablation = source.ablation;
  return row;
}

std::vector<Finding> check_completeness(const fs::path& run_dir) {
  static const std::vector<ArtifactKind> required{
      ArtifactKind::original_image,   ArtifactKind::baseline_prompt,    ArtifactKind::baseline_reply,
      ArtifactKind::extractor_prompt, ArtifactKind::extractor_output,   ArtifactKind::edit_instruction,
      ArtifactKind::edited_image,     ArtifactKind::pixel_diff,         ArtifactKind::consistency_prompt,
      ArtifactKind::consistency_reply, ArtifactKind::judge_prompt,      ArtifactKind::judge_transcript,
      ArtifactKind::scores};
  std::vector<Finding> findings;
  const auto manifest = json::parse(read_file(run_dir / "manifest"), nullptr, false);
  if (manifest.is_discarded()) return {{"manifest-unreadable", "manifest", "not valid JSON"}};
  const auto artifacts = manifest.value("artifacts", json::object());

  std::map<std::string, std::set<std::string>> kinds_by_example;
  std::map<std::string, bool> terminal_score;
  const std::string log = read_file(run_dir / "events.log");
  std::size_t pos = 0;
  while (pos < log.size()) {
    auto nl = log.find('\n', pos);
    if (nl == std::string::npos) nl = log.size();
    const auto ev = json::parse(log.substr(pos, nl - pos), nullptr, false);
    pos = nl + 1;
    if (!ev.is_object()) continue;
    const auto id = ev.value("example_id", "");
    auto& kinds = kinds_by_example[id];
    const auto payload = ev.value("payload", json::object());
    for (const auto& [_, hex] : payload.items()) {
      if (!hex.is_string() || !artifacts.contains(hex.get<std::string>())) continue;
      const auto entry_kinds = artifacts[hex.get<std::string>()].value("kinds", json::array());
      for (const auto& k : entry_kinds) kinds.insert(k.get<std::string>());
    }
    const auto stage = ev.value("stage", "");
    if (stage == "score") terminal_score[id] = true;
    if (stage == "exclusion") terminal_score[id] = false;
  }
  for (const auto& [id, kinds] : kinds_by_example) {
    const auto it = terminal_score.find(id);
    if (it == terminal_score.end()) {
      findings.push_back({"incomplete-example", id, "no score or exclusion event"});
      continue;
    }
    if (!it->second) continue;
    for (auto k : required) {
      const std::string name(artifact_kind_name(k));
      if (!kinds.contains(name)) findings.push_back({"missing-artifact-kind", id, name});
    }
  }
  return findings;
}

ReplayPlan plan_replay(const fs::path& run_dir, const fs::path& out_dir, std::optional<fs::path> manifest,
                       std::optional<fs::path> cache_dir) {
  const auto m = json::parse(read_file(run_dir / "manifest"), nullptr, false);
  if (m.is_discarded() || !m.is_object()) throw Error(Errc::parse_error, "run manifest is not valid JSON");
  const auto snap_hex = m.value("config_snapshot_digest", "");
  if (!Digest::is_valid_hex(snap_hex)) throw Error(Errc::parse_error, "run manifest lacks a config snapshot digest");
  const auto snap_path = run_dir / "artifacts" / snap_hex.substr(0, 2) / snap_hex;
  const auto snapshot = json::parse(read_file(snap_path), nullptr, false);
  if (snapshot.is_discarded() || !snapshot.contains("config")) throw Error(Errc::parse_error, "config snapshot is unreadable");

  ReplayPlan plan{parse_run_config(snapshot["config"], fs::path(snapshot.value("base_dir", "."))), {}};
  const auto replay = m.value("replay", json::object());
  plan.options.manifest_path = manifest.value_or(fs::path(replay.value("manifest_path", "")));
  plan.options.offset = replay.value("offset", std::size_t{0});
  plan.options.limit = replay.value("limit", std::size_t{0});
  plan.options.cache_dir = cache_dir.value_or(fs::path(replay.value("cache_dir", plan.config.cache_dir.string())));
  plan.options.seed = m.value("seed", std::uint64_t{0});
  plan.options.mode = Mode::replay;
  plan.options.out_dir = out_dir;
  return plan;
}

}  // namespace edct
