#pragma once

#include "edct/gateway_types.hpp"

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>

namespace edct {

/// Content-addressed response store:
///   <dir>/<first-2-hex>/<digest>.req   canonical request JSON
///   <dir>/<first-2-hex>/<digest>.resp  raw response bytes
///   <dir>/index.jsonl                  one line per stored digest
class ResponseCache {
public:
  explicit ResponseCache(std::filesystem::path dir);

  [[nodiscard]] const std::filesystem::path& dir() const noexcept { return dir_; }

  [[nodiscard]] std::optional<std::string> load(const RequestDigest& digest) const;

  /// Idempotent; a digest already present is left untouched.
  void store(const RequestDigest& digest, Capability capability, std::string_view model_id,
             std::string_view canonical_request, std::string_view response, std::string_view media_type);

  [[nodiscard]] std::filesystem::path request_path(const RequestDigest& d) const;
  [[nodiscard]] std::filesystem::path response_path(const RequestDigest& d) const;

private:
  std::filesystem::path dir_;
  std::mutex mutex_;
};

}  // namespace edct
