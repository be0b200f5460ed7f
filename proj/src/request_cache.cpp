#include "edct/request_cache.hpp"

#include "edct/error.hpp"
#include "edct/file_io.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

namespace edct {

namespace fs = std::filesystem;

ResponseCache::ResponseCache(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw Error(Errc::io_failure, "cannot create cache directory " + dir_.string());
}

fs::path ResponseCache::request_path(const RequestDigest& d) const {
  return dir_ / std::string(d.prefix()) / (d.hex() + ".req");
}

fs::path ResponseCache::response_path(const RequestDigest& d) const {
  return dir_ / std::string(d.prefix()) / (d.hex() + ".resp");
}

std::optional<std::string> ResponseCache::load(const RequestDigest& digest) const {
  const auto path = response_path(digest);
  if (!fs::exists(path)) return std::nullopt;
  return read_file(path);
}

void ResponseCache::store(const RequestDigest& digest, Capability capability, std::string_view model_id,
                          std::string_view canonical_request, std::string_view response,
                          std::string_view media_type) {
  std::lock_guard lock(mutex_);
  const auto resp = response_path(digest);
  if (fs::exists(resp)) return;
  std::error_code ec;
  fs::create_directories(resp.parent_path(), ec);
  if (ec) throw Error(Errc::io_failure, "cannot create " + resp.parent_path().string());
  write_file_atomic(request_path(digest), canonical_request);
  // The response file is written last: its presence marks a complete entry.
  write_file_atomic(resp, response);

  nlohmann::json line{{"digest", digest.hex()},
                      {"capability", capability_name(capability)},
                      {"model", model_id},
                      {"response_bytes", response.size()},
                      {"media_type", media_type}};
  std::ofstream index(dir_ / "index.jsonl", std::ios::app | std::ios::binary);
  index << line.dump() << '\n';
  if (!index) throw Error(Errc::io_failure, "cannot append cache index");
}

}  // namespace edct
