#pragma once

#include "edct/digest.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace edct {

enum class ArtifactKind {
  config_snapshot,
  dataset_manifest,
  prompt_template,
  original_image,
  baseline_prompt,
  baseline_reply,
  extractor_prompt,
  extractor_output,
  edit_instruction,
  edited_image,
  pixel_diff,
  mask,
  consistency_prompt,
  consistency_reply,
  judge_prompt,
  judge_transcript,
  scores,
  failure_note,
};

std::string_view artifact_kind_name(ArtifactKind k) noexcept;
std::optional<ArtifactKind> parse_artifact_kind(std::string_view name) noexcept;

enum class Stage { baseline, extraction, edit, consistency, score, exclusion };

std::string_view stage_name(Stage s) noexcept;
std::optional<Stage> parse_stage(std::string_view name) noexcept;

struct AuditEvent {
  std::uint64_t sequence = 0;  // assigned by append_event
  std::string example_id;
  Stage stage = Stage::baseline;
  /// label -> artifact digest; every digest must already be stored.
  std::map<std::string, Digest> payload;
  /// Small inline facts (warnings, reasons, fractions). Must be an object.
  nlohmann::json detail = nlohmann::json::object();
  std::string timestamp;  // assigned by append_event
};

struct ArtifactEntry {
  std::set<std::string> kinds;
  std::size_t bytes = 0;
  std::string media_type;
};

/// Everything needed to open a run. `config_snapshot` must already be redacted.
struct RunInfo {
  std::string run_id;
  std::uint64_t seed = 0;
  std::string mode;
  nlohmann::json config_snapshot = nlohmann::json::object();
  std::map<std::string, std::string> prompt_template_digests;
};

/// Called with a named point before each filesystem mutation; tests throw
/// from it to simulate crashes.
using FaultHook = std::function<void(std::string_view point)>;

/// Run directory:
///   manifest                  JSON, written once by close()
///   events.log                one JSON event per line, append-only
///   artifacts/<hh>/<digest>   content-addressed blobs, write-once
///   other top-level files     registered with add_file()
class AuditStore {
public:
  AuditStore(const AuditStore&) = delete;
  AuditStore& operator=(const AuditStore&) = delete;
  ~AuditStore();

  [[nodiscard]] const std::filesystem::path& dir() const noexcept { return dir_; }
  [[nodiscard]] const RunInfo& info() const noexcept { return info_; }
  [[nodiscard]] const Digest& config_digest() const noexcept { return config_digest_; }

  /// Idempotent: the same bytes always give the same digest and one file.
  /// Throws Error(precondition) for empty bytes, Error(io_failure).
  Digest put_artifact(ArtifactKind kind, std::string_view bytes, std::string_view media_type);

  [[nodiscard]] bool has_artifact(const Digest& digest) const;
  [[nodiscard]] std::string read_artifact(const Digest& digest) const;
  [[nodiscard]] std::map<Digest, ArtifactEntry> artifact_index() const;

  /// Throws Error(dangling_digest) when a payload digest is not stored.
  std::uint64_t append_event(AuditEvent event);
  [[nodiscard]] std::uint64_t event_count() const;

  /// Writes a top-level file (e.g. results.jsonl, report.txt) and records
  /// its digest in the manifest.
  void add_file(const std::string& name, std::string_view bytes);

  /// Extra manifest fields (e.g. input digests). Must be called before close().
  void set_manifest_field(const std::string& key, nlohmann::json value);

  /// Writes the manifest. No further writes are allowed afterwards.
  void close();
  [[nodiscard]] bool closed() const;

  void set_fault_hook(FaultHook hook) { fault_hook_ = std::move(hook); }

private:
  friend std::unique_ptr<AuditStore> open_run(const std::filesystem::path& dir, RunInfo info);
  AuditStore(std::filesystem::path dir, RunInfo info);

  void fault(std::string_view point) const;
  std::filesystem::path artifact_path(const Digest& d) const;

  std::filesystem::path dir_;
  RunInfo info_;
  std::string created_at_;
  Digest config_digest_;
  FaultHook fault_hook_;

  mutable std::mutex mutex_;
  std::map<Digest, ArtifactEntry> index_;
  std::ofstream events_;
  std::uint64_t next_sequence_ = 0;
  std::map<std::string, nlohmann::json> files_;
  nlohmann::json extra_ = nlohmann::json::object();
  bool closed_ = false;
};

/// Creates the run layout in `dir` (which must be absent or empty) and
/// stores the config snapshot. Errors: directory_not_empty, io_failure.
std::unique_ptr<AuditStore> open_run(const std::filesystem::path& dir, RunInfo info);

struct Finding {
  std::string kind;
  std::string subject;
  std::string detail;
};

struct IntegrityReport {
  std::vector<Finding> findings;

  [[nodiscard]] bool clean() const noexcept { return findings.empty(); }
};

/// Read-only integrity check of a closed run: artifact digests and lengths,
/// files on disk vs index, event-log digest, sequence monotonicity, digest
/// closure and per-example stage order.
IntegrityReport verify_run(const std::filesystem::path& dir);

/// Stage order inside one example's events: baseline, extraction, edit,
/// consistency, score; exclusion may follow any of them; nothing follows a
/// terminal (score/exclusion) event. Returns the first violation, if any.
std::optional<std::string> check_stage_order(const std::vector<Stage>& stages);

/// Current UTC time as ISO-8601 with milliseconds.
std::string utc_timestamp();

}  // namespace edct
