#pragma once

#include "edct/audit_store.hpp"
#include "edct/dataset.hpp"
#include "edct/gateway.hpp"
#include "edct/http_transport.hpp"
#include "edct/pipeline.hpp"
#include "edct/stats.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace edct {

/// A parsed run configuration file.
///
/// {
///   "label": "...",                       report row label (default: VLM label)
///   "providers": {"<name>": {"kind", "endpoint_url", "model_id", "api_key_env",
///                 "max_output_tokens", "timeout_ms", "max_retries",
///                 "requests_per_minute", "temperature", "label", "persona"}},
///   "target_vlm": "<name>", "extractor": "<name>", "judges": ["<name>", ...],
///   "editor": "<name>",
///   "k_max": 1, "workers": 1, "seed": 0,
///   "mode": "live" | "record" | "replay", "cache_dir": "cache",
///   "prompts_dir": "...",                 optional template overrides
///   "ci": {"method": "bootstrap" | "normal", "level": 0.95, "resamples": 10000},
///   "ablation": {"extractor_judge": "...", "editor": "..."}   optional labels
/// }
///
/// Relative paths resolve against the config file's directory.
struct RunConfig {
  std::string label;
  std::map<std::string, ProviderConfig> providers;
  PipelineConfig pipeline;
  std::size_t workers = 1;
  Mode mode = Mode::live;
  std::filesystem::path cache_dir;
  std::optional<std::filesystem::path> prompts_dir;
  CiOptions ci;
  AblationCell ablation;
  /// Directory relative paths were resolved against.
  std::filesystem::path base_dir;
  /// The file as read, for the redacted snapshot.
  nlohmann::json raw = nlohmann::json::object();
};

/// Throws Error(config_error).
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

/// Copy of `doc` with secret-looking keys masked and any value equal to an
/// API key (looked up through each provider's api_key_env) replaced.
nlohmann::json redact_secrets(const nlohmann::json& doc, const RunConfig& config, const EnvLookup& env);

/// Throws Error(config_error) naming the first provider whose api_key_env is
/// unset. Only checked when the mode may reach the network.
void check_credentials(const RunConfig& config, Mode mode, const EnvLookup& env);

/// "mock" providers get a MockTransport, everything else an HttpTransport.
TransportResolver default_resolver(const EnvLookup& env);

struct RunOptions {
  std::filesystem::path manifest_path;
  std::filesystem::path out_dir;
  std::optional<Mode> mode;
  std::size_t offset = 0;
  std::optional<std::size_t> limit;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::filesystem::path> cache_dir;
  /// Overrides default_resolver (tests count transport calls through it).
  TransportResolver resolver;
  EnvLookup env = process_env;
  std::shared_ptr<Clock> clock;
  FaultHook fault_hook;
};

struct RunSummary {
  std::filesystem::path run_dir;
  std::size_t completed = 0;
  std::size_t excluded = 0;
  std::string report;
  GatewayStats gateway;
};

/// Runs the pipeline over the sliced manifest into `out_dir`. The run is
/// assembled in a sibling staging directory and renamed into place only
/// after the manifest is written, so a failure leaves no `out_dir` behind.
/// Errors: config_error, ManifestError, directory_not_empty, and
/// infrastructure errors from the pipeline.
RunSummary execute_run(const RunConfig& config, const RunOptions& options);

/// Names of top-level report files, one per format.
std::string report_file_name(ReportFormat f);

/// Everything needed to render a report row from a closed run directory.
struct RunReportSource {
  std::string label;
  AblationCell ablation;
  CiOptions ci;
  ScoreFile scores;
};

/// Reads results.jsonl and the report settings stored in the manifest.
/// Throws Error(parse_error) / Error(io_failure).
RunReportSource load_run_report_source(const std::filesystem::path& run_dir);

ReportRow report_row(const RunReportSource& source);

/// Per completed example, the artifact kinds that must be present:
/// original image, prompts and replies for every stage, edit instruction,
/// edited image, pixel diff, judge prompt/transcript and scores.
std::vector<Finding> check_completeness(const std::filesystem::path& run_dir);

/// Inputs needed to re-execute a closed run in strict replay.
struct ReplayPlan {
  RunConfig config;
  RunOptions options;
};

/// Reads the config snapshot and inputs from `run_dir`; the result replays
/// into `out_dir`. `manifest` / `cache_dir` override the recorded paths.
ReplayPlan plan_replay(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir,
                       std::optional<std::filesystem::path> manifest = std::nullopt,
                       std::optional<std::filesystem::path> cache_dir = std::nullopt);

}  // namespace edct
