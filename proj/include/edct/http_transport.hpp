#pragma once

#include "edct/transport.hpp"

#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace edct {

using EnvLookup = std::function<std::optional<std::string>(std::string_view name)>;

/// Reads process environment variables.
std::optional<std::string> process_env(std::string_view name);

/// Talks to real endpoints.
///
/// kind "openai": POST <endpoint_url> with an OpenAI-style chat/completions
/// body; the image travels as a base64 data URL on the first user message.
///
/// kind "image-edit": POST <endpoint_url> as multipart/form-data with parts
/// `image` (raw bytes), `prompt`, `negative_prompt`, `seed`, `model`. The
/// reply is either raw image bytes (Content-Type image/*) or JSON carrying
/// base64 under `image` or `data[0].b64_json`.
///
/// 408, 425, 429 and 5xx are transient; other non-2xx codes are refusals.
class HttpTransport final : public Transport {
public:
  explicit HttpTransport(EnvLookup env = process_env) : env_(std::move(env)) {}

  TransportResponse send(const TransportRequest& request) override;

private:
  EnvLookup env_;
};

struct ParsedUrl {
  std::string scheme_host_port;  // e.g. "https://api.example.com:443"
  std::string path;              // starts with '/'
};

/// Throws Error(config_error) for anything but http:// or https:// URLs.
ParsedUrl parse_url(std::string_view url);

}  // namespace edct
