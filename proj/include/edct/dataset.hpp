#pragma once

#include "edct/digest.hpp"
#include "edct/error.hpp"

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace edct {

/// One audit unit: an image and the question asked about it.
struct ExampleRecord {
  std::string id;
  /// As written in the manifest (relative to the manifest file, or absolute).
  std::string image_ref;
  /// Resolved location.
  std::filesystem::path image_path;
  Digest image_digest;
  std::string question;
};

struct DatasetManifest {
  std::string source;
  std::vector<ExampleRecord> rows;
};

struct ManifestIssue {
  std::size_t line = 0;  // 1-based
  Errc code = Errc::parse_error;
  std::string reason;
};

/// Every problem found while loading; code() is the first issue's code.
class ManifestError : public Error {
public:
  explicit ManifestError(std::vector<ManifestIssue> issues);
  [[nodiscard]] const std::vector<ManifestIssue>& issues() const noexcept { return issues_; }

private:
  std::vector<ManifestIssue> issues_;
};

/// Line-delimited JSON. Each row: {"id", "image", "question"} plus optional
/// "image_digest" (verified when present). An optional object without "id"
/// may carry {"source": "..."}. Blank lines are ignored.
/// Throws ManifestError (parse_error, duplicate_id, missing_image).
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Inverse of load_manifest; always writes image_digest.
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
std::string serialize_manifest(const DatasetManifest& manifest);

/// Rows [offset, offset + limit), clipped at the end.
/// Throws Error(out_of_range) when offset > rows.
DatasetManifest slice(const DatasetManifest& manifest, std::size_t offset, std::size_t limit);

}  // namespace edct
