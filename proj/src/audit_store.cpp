#include "edct/audit_store.hpp"

#include "edct/error.hpp"
#include "edct/file_io.hpp"

#include <array>
#include <chrono>
#include <ctime>
#include <fmt/format.h>

namespace edct {

namespace fs = std::filesystem;

namespace {

constexpr std::array<std::pair<ArtifactKind, std::string_view>, 18> kKindNames{{
    {ArtifactKind::config_snapshot, "config-snapshot"},
    {ArtifactKind::dataset_manifest, "dataset-manifest"},
    {ArtifactKind::prompt_template, "prompt-template"},
    {ArtifactKind::original_image, "original-image"},
    {ArtifactKind::baseline_prompt, "baseline-prompt"},
    {ArtifactKind::baseline_reply, "baseline-reply"},
    {ArtifactKind::extractor_prompt, "extractor-prompt"},
    {ArtifactKind::extractor_output, "extractor-output"},
    {ArtifactKind::edit_instruction, "edit-instruction"},
    {ArtifactKind::edited_image, "edited-image"},
    {ArtifactKind::pixel_diff, "pixel-diff"},
    {ArtifactKind::mask, "mask"},
    {ArtifactKind::consistency_prompt, "consistency-prompt"},
    {ArtifactKind::consistency_reply, "consistency-reply"},
    {ArtifactKind::judge_prompt, "judge-prompt"},
    {ArtifactKind::judge_transcript, "judge-transcript"},
    {ArtifactKind::scores, "scores"},
    {ArtifactKind::failure_note, "failure-note"},
}};

constexpr std::array<std::pair<Stage, std::string_view>, 6> kStageNames{{
    {Stage::baseline, "baseline"},
    {Stage::extraction, "extraction"},
    {Stage::edit, "edit"},
    {Stage::consistency, "consistency"},
    {Stage::score, "score"},
    {Stage::exclusion, "exclusion"},
}};

constexpr std::string_view kManifestFormat = "edct-run-v1";

}  // namespace

std::string_view artifact_kind_name(ArtifactKind k) noexcept {
  for (const auto& [kind, name] : kKindNames) {
    if (kind == k) return name;
  }
  return "unknown";
}

std::optional<ArtifactKind> parse_artifact_kind(std::string_view name) noexcept {
  for (const auto& [kind, n] : kKindNames) {
    if (n == name) return kind;
  }
  return std::nullopt;
}

std::string_view stage_name(Stage s) noexcept {
  for (const auto& [stage, name] : kStageNames) {
    if (stage == s) return name;
  }
  return "unknown";
}

std::optional<Stage> parse_stage(std::string_view name) noexcept {
  for (const auto& [stage, n] : kStageNames) {
    if (n == name) return stage;
  }
  return std::nullopt;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto secs = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}.{:03}Z", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                     tm.tm_hour, tm.tm_min, tm.tm_sec, ms);
}

std::optional<std::string> check_stage_order(const std::vector<Stage>& stages) {
  int last_rank = -1;
  bool terminated = false;
  for (auto s : stages) {
    if (terminated) return "event after terminal " + std::string(stage_name(s)) + " event";
    if (s == Stage::exclusion || s == Stage::score) terminated = true;
    if (s == Stage::exclusion) continue;
    const int rank = static_cast<int>(s);
    if (rank < last_rank) return std::string(stage_name(s)) + " event after a later stage";
    last_rank = rank;
  }
  return std::nullopt;
}

AuditStore::AuditStore(fs::path dir, RunInfo info) : dir_(std::move(dir)), info_(std::move(info)) {}

AuditStore::~AuditStore() = default;

void AuditStore::fault(std::string_view point) const {
  if (fault_hook_) fault_hook_(point);
}

fs::path AuditStore::artifact_path(const Digest& d) const {
  return dir_ / "artifacts" / std::string(d.prefix()) / d.hex();
}

std::unique_ptr<AuditStore> open_run(const fs::path& dir, RunInfo info) {
  std::error_code ec;
  if (fs::exists(dir, ec)) {
    if (!fs::is_directory(dir, ec)) throw Error(Errc::io_failure, dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir, ec)) throw Error(Errc::directory_not_empty, "run directory is not empty: " + dir.string());
  }
  fs::create_directories(dir / "artifacts", ec);
  if (ec) throw Error(Errc::io_failure, "cannot create run directory " + dir.string() + ": " + ec.message());

  std::unique_ptr<AuditStore> store(new AuditStore(dir, std::move(info)));
  store->created_at_ = utc_timestamp();
  store->events_.open(dir / "events.log", std::ios::out | std::ios::app | std::ios::binary);
  if (!store->events_) throw Error(Errc::io_failure, "cannot create events.log in " + dir.string());
  store->config_digest_ =
      store->put_artifact(ArtifactKind::config_snapshot, store->info_.config_snapshot.dump(2), "application/json");
  return store;
}

Digest AuditStore::put_artifact(ArtifactKind kind, std::string_view bytes, std::string_view media_type) {
  require(!bytes.empty(), "artifact bytes must be non-empty");
  const Digest digest = sha256(bytes);
  std::lock_guard lock(mutex_);
  require(!closed_, "run is closed");
  auto it = index_.find(digest);
  if (it == index_.end()) {
    fault("put_artifact");
    const auto path = artifact_path(digest);
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw Error(Errc::io_failure, "cannot create " + path.parent_path().string());
    write_file_atomic(path, bytes);
    it = index_.emplace(digest, ArtifactEntry{{}, bytes.size(), std::string(media_type)}).first;
  }
  it->second.kinds.insert(std::string(artifact_kind_name(kind)));
  return digest;
}

bool AuditStore::has_artifact(const Digest& digest) const {
  std::lock_guard lock(mutex_);
  return index_.contains(digest);
}

std::string AuditStore::read_artifact(const Digest& digest) const {
  if (!has_artifact(digest)) throw Error(Errc::dangling_digest, "artifact not stored: " + digest.hex());
  return read_file(artifact_path(digest));
}

std::map<Digest, ArtifactEntry> AuditStore::artifact_index() const {
  std::lock_guard lock(mutex_);
  return index_;
}

std::uint64_t AuditStore::append_event(AuditEvent event) {
  require(event.detail.is_object(), "event detail must be a JSON object");
  std::lock_guard lock(mutex_);
  require(!closed_, "run is closed");
  for (const auto& [label, digest] : event.payload) {
    if (!index_.contains(digest)) {
      throw Error(Errc::dangling_digest, "event payload '" + label + "' references unstored digest " + digest.hex());
    }
  }
  fault("append_event");
  event.sequence = next_sequence_;
  event.timestamp = utc_timestamp();

  nlohmann::ordered_json line;
  line["seq"] = event.sequence;
  line["ts"] = event.timestamp;
  line["example_id"] = event.example_id;
  line["stage"] = stage_name(event.stage);
  nlohmann::ordered_json payload = nlohmann::ordered_json::object();
  for (const auto& [label, digest] : event.payload) payload[label] = digest.hex();
  line["payload"] = std::move(payload);
  line["detail"] = event.detail;
  events_ << line.dump() << '\n';
  events_.flush();
  if (!events_) throw Error(Errc::io_failure, "cannot append to events.log");
  return next_sequence_++;
}

std::uint64_t AuditStore::event_count() const {
  std::lock_guard lock(mutex_);
  return next_sequence_;
}

void AuditStore::add_file(const std::string& name, std::string_view bytes) {
  require(!name.empty() && name.find('/') == std::string::npos && name != "manifest" && name != "events.log" &&
              name != "artifacts",
          "invalid run file name '" + name + "'");
  std::lock_guard lock(mutex_);
  require(!closed_, "run is closed");
  require(!files_.contains(name), "run file already written: " + name);
  fault("add_file");
  write_file_atomic(dir_ / name, bytes);
  files_[name] = {{"sha256", sha256(bytes).hex()}, {"bytes", bytes.size()}};
}

void AuditStore::set_manifest_field(const std::string& key, nlohmann::json value) {
  std::lock_guard lock(mutex_);
  require(!closed_, "run is closed");
  extra_[key] = std::move(value);
}

void AuditStore::close() {
  std::lock_guard lock(mutex_);
  if (closed_) return;
  events_.close();
  fault("close");

  nlohmann::ordered_json m;
  m["format"] = kManifestFormat;
  m["run_id"] = info_.run_id;
  m["created_at"] = created_at_;
  m["closed_at"] = utc_timestamp();
  m["mode"] = info_.mode;
  m["seed"] = info_.seed;
  m["config_snapshot_digest"] = config_digest_.hex();
  m["prompt_template_digests"] = info_.prompt_template_digests;
  for (const auto& [k, v] : extra_.items()) m[k] = v;
  m["event_count"] = next_sequence_;
  m["events_sha256"] = sha256(read_file(dir_ / "events.log")).hex();
  nlohmann::ordered_json artifacts = nlohmann::ordered_json::object();
  for (const auto& [digest, entry] : index_) {
    artifacts[digest.hex()] = {{"kinds", entry.kinds}, {"bytes", entry.bytes}, {"media_type", entry.media_type}};
  }
  m["artifacts"] = std::move(artifacts);
  m["files"] = files_;
  write_file_atomic(dir_ / "manifest", m.dump(2) + "\n");
  closed_ = true;
}

bool AuditStore::closed() const {
  std::lock_guard lock(mutex_);
  return closed_;
}

IntegrityReport verify_run(const fs::path& dir) {
  IntegrityReport report;
  auto add = [&](std::string kind, std::string subject, std::string detail) {
    report.findings.push_back({std::move(kind), std::move(subject), std::move(detail)});
  };

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(dir / "manifest"));
    if (!manifest.is_object() || manifest.value("format", "") != kManifestFormat) {
      add("manifest-invalid", "manifest", "unexpected format tag");
      return report;
    }
  } catch (const std::exception& e) {
    add("manifest-unreadable", "manifest", e.what());
    return report;
  }

  // Artifact index vs disk.
  std::set<std::string> indexed;
  const auto artifacts = manifest.value("artifacts", nlohmann::json::object());
  for (const auto& [hex, entry] : artifacts.items()) {
    indexed.insert(hex);
    if (!Digest::is_valid_hex(hex)) {
      add("index-invalid", hex, "artifact key is not a digest");
      continue;
    }
    const auto path = dir / "artifacts" / hex.substr(0, 2) / hex;
    if (!fs::exists(path)) {
      add("dangling-reference", hex, "indexed artifact file is missing");
      continue;
    }
    std::string bytes;
    try {
      bytes = read_file(path);
    } catch (const Error& e) {
      add("artifact-unreadable", hex, e.what());
      continue;
    }
    if (sha256(bytes).hex() != hex) add("artifact-corrupted", hex, "content does not hash to its name");
    if (bytes.size() != entry.value("bytes", std::size_t{0})) {
      add("length-mismatch", hex, fmt::format("index says {} bytes, file has {}", entry.value("bytes", 0), bytes.size()));
    }
  }
  std::error_code ec;
  if (fs::is_directory(dir / "artifacts", ec)) {
    for (const auto& e : fs::recursive_directory_iterator(dir / "artifacts", ec)) {
      if (!e.is_regular_file()) continue;
      const auto name = e.path().filename().string();
      if (!indexed.contains(name)) add("unindexed-artifact", e.path().lexically_relative(dir).string(), "file not in the artifact index");
    }
  } else {
    add("layout", "artifacts", "artifacts directory is missing");
  }

  auto check_ref = [&](const std::string& hex, const std::string& where) {
    if (!indexed.contains(hex)) add("dangling-reference", hex, "referenced by " + where + " but not indexed");
  };
  check_ref(manifest.value("config_snapshot_digest", ""), "config_snapshot_digest");
  if (manifest.contains("inputs")) {
    for (const auto& [name, hex] : manifest["inputs"].items()) {
      if (hex.is_string()) check_ref(hex.get<std::string>(), "inputs." + name);
    }
  }

  // Event log.
  std::string log;
  try {
    log = read_file(dir / "events.log");
  } catch (const Error& e) {
    add("event-log-missing", "events.log", e.what());
  }
  if (sha256(log).hex() != manifest.value("events_sha256", "")) {
    add("event-log-modified", "events.log", "digest differs from the manifest");
  }
  std::map<std::string, std::vector<Stage>> per_example;
  std::uint64_t expected = 0;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < log.size()) {
    auto nl = log.find('\n', pos);
    if (nl == std::string::npos) nl = log.size();
    const std::string line = log.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    const std::string where = fmt::format("events.log:{}", line_no);
    nlohmann::json ev = nlohmann::json::parse(line, nullptr, false);
    if (ev.is_discarded() || !ev.is_object()) {
      add("event-unparseable", where, "not a JSON object");
      continue;
    }
    const auto seq = ev.value("seq", std::uint64_t{0});
    if (!ev.contains("seq") || seq != expected) {
      add("sequence-violation", where, fmt::format("expected seq {}, found {}", expected, ev.value("seq", -1)));
    }
    expected = std::max(expected, seq) + 1;
    const auto payload = ev.value("payload", nlohmann::json::object());
    for (const auto& [label, hex] : payload.items()) {
      if (hex.is_string()) check_ref(hex.get<std::string>(), where + " payload." + label);
    }
    const auto stage = parse_stage(ev.value("stage", ""));
    if (!stage) {
      add("event-unparseable", where, "unknown stage");
      continue;
    }
    per_example[ev.value("example_id", "")].push_back(*stage);
  }
  if (line_no != manifest.value("event_count", std::size_t{0})) {
    add("event-count-mismatch", "events.log",
        fmt::format("manifest says {} events, log has {}", manifest.value("event_count", 0), line_no));
  }
  for (const auto& [id, stages] : per_example) {
    if (auto problem = check_stage_order(stages)) add("stage-order", id, *problem);
  }

  // Top-level files.
  const auto files = manifest.value("files", nlohmann::json::object());
  for (const auto& [name, entry] : files.items()) {
    const auto path = dir / name;
    if (!fs::exists(path)) {
      add("file-missing", name, "listed in manifest but absent");
      continue;
    }
    if (sha256(read_file(path)).hex() != entry.value("sha256", "")) add("file-corrupted", name, "digest differs from the manifest");
  }
  return report;
}

}  // namespace edct
