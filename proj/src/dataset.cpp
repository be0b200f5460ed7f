#include "edct/dataset.hpp"

#include "edct/file_io.hpp"
#include "edct/image.hpp"

#include <nlohmann/json.hpp>

#include <fmt/format.h>

#include <set>

namespace edct {

namespace fs = std::filesystem;

namespace {

std::string describe(const std::vector<ManifestIssue>& issues) {
  std::string out = fmt::format("manifest has {} problem(s)", issues.size());
  for (const auto& i : issues) out += fmt::format("; line {}: {}", i.line, i.reason);
  return out;
}

bool blank(std::string_view s) { return s.find_first_not_of(" \t\r\n") == std::string_view::npos; }

}  // namespace

ManifestError::ManifestError(std::vector<ManifestIssue> issues)
    : Error(issues.empty() ? Errc::parse_error : issues.front().code, describe(issues)), issues_(std::move(issues)) {}

DatasetManifest load_manifest(const fs::path& path) {
  const std::string text = read_file(path);
  const fs::path base = path.parent_path();
  DatasetManifest out;
  std::vector<ManifestIssue> issues;
  std::set<std::string> seen;

  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (blank(line)) continue;

    auto issue = [&](Errc code, std::string reason) { issues.push_back({line_no, code, std::move(reason)}); };
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      issue(Errc::parse_error, "not a JSON object");
      continue;
    }
    if (!j.contains("id")) {
      if (j.contains("source") && j["source"].is_string()) out.source = j["source"].get<std::string>();
      else issue(Errc::parse_error, "missing field 'id'");
      continue;
    }
    auto str_field = [&](const char* key) -> std::optional<std::string> {
      if (!j.contains(key) || !j[key].is_string()) return std::nullopt;
      return j[key].get<std::string>();
    };
    const auto id = str_field("id");
    const auto image = str_field("image");
    const auto question = str_field("question");
    if (!id || id->empty()) { issue(Errc::parse_error, "empty id"); continue; }
    if (!image || image->empty()) { issue(Errc::parse_error, "missing image"); continue; }
    if (!question) { issue(Errc::parse_error, "missing question"); continue; }
    if (blank(*question)) { issue(Errc::parse_error, "empty question"); continue; }
    if (!seen.insert(*id).second) { issue(Errc::duplicate_id, "duplicate id '" + *id + "'"); continue; }

    ExampleRecord rec;
    rec.id = *id;
    rec.image_ref = *image;
    rec.question = *question;
    rec.image_path = fs::path(*image).is_absolute() ? fs::path(*image) : base / *image;
    if (!fs::is_regular_file(rec.image_path)) {
      issue(Errc::missing_image, "image not found for '" + *id + "': " + rec.image_path.string());
      continue;
    }
    std::string bytes;
    try {
      bytes = read_file(rec.image_path);
      (void)decode_image(bytes);
    } catch (const Error&) {
      issue(Errc::parse_error, "undecodable image");
      continue;
    }
    rec.image_digest = sha256(bytes);
    if (const auto pinned = str_field("image_digest"); pinned && *pinned != rec.image_digest.hex()) {
      issue(Errc::parse_error, "image digest mismatch");
      continue;
    }
    out.rows.push_back(std::move(rec));
  }
  if (!issues.empty()) throw ManifestError(std::move(issues));
  return out;
}

std::string serialize_manifest(const DatasetManifest& manifest) {
  std::string out;
  if (!manifest.source.empty()) out += nlohmann::json{{"source", manifest.source}}.dump() + "\n";
  for (const auto& r : manifest.rows) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["image"] = r.image_ref;
    j["question"] = r.question;
    j["image_digest"] = r.image_digest.hex();
    out += j.dump() + "\n";
  }
  return out;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  write_file_atomic(path, serialize_manifest(manifest));
}

DatasetManifest slice(const DatasetManifest& manifest, std::size_t offset, std::size_t limit) {
  if (offset > manifest.rows.size()) {
    throw Error(Errc::out_of_range,
                fmt::format("offset {} exceeds manifest size {}", offset, manifest.rows.size()));
  }
  DatasetManifest out;
  out.source = manifest.source;
  const std::size_t end = offset + std::min(limit, manifest.rows.size() - offset);
  out.rows.assign(manifest.rows.begin() + static_cast<std::ptrdiff_t>(offset),
                  manifest.rows.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

}  // namespace edct
