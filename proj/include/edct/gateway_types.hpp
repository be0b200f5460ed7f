#pragma once

#include "edct/digest.hpp"

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace edct {

enum class Capability { chat_multimodal, chat_text, image_edit };

std::string_view capability_name(Capability c) noexcept;

/// Connection and budget settings for one remote model. Holds the *name*
/// of the environment variable with the API key, never the key.
struct ProviderConfig {
  std::string name;
  /// "openai" (chat/completions), "image-edit" (multipart edit endpoint) or "mock".
  std::string kind = "openai";
  std::string endpoint_url;
  std::string model_id;
  std::string api_key_env;
  /// Display name in reports; falls back to model_id.
  std::string label;
  int max_output_tokens = 2048;
  std::chrono::milliseconds timeout{120000};
  int max_retries = 3;
  int requests_per_minute = 60;
  std::optional<double> temperature;
  /// Behaviour selector for kind "mock".
  std::string persona;

  [[nodiscard]] const std::string& display_label() const noexcept { return label.empty() ? model_id : label; }
  [[nodiscard]] bool needs_api_key() const noexcept { return kind != "mock" && !api_key_env.empty(); }

  /// Throws Error(config_error) when an invariant is violated.
  void validate() const;
};

enum class Role { user, assistant };

struct ImageAttachment {
  std::string bytes;
  std::string media_type;

  [[nodiscard]] Digest digest() const { return sha256(bytes); }
};

struct ChatTurn {
  Role role = Role::user;
  std::string text;
  std::optional<ImageAttachment> image;
};

/// Alternating user/assistant turns, starting with the user. Only the first
/// user turn may carry an image.
class ChatSession {
public:
  explicit ChatSession(std::string id = {}) : id_(std::move(id)) {}

  [[nodiscard]] const std::string& id() const noexcept { return id_; }
  [[nodiscard]] const std::vector<ChatTurn>& turns() const noexcept { return turns_; }
  [[nodiscard]] bool has_image() const noexcept { return !turns_.empty() && turns_.front().image.has_value(); }

  /// Throws Error(precondition) on out-of-turn use, empty text, or an image
  /// on a later turn.
  void append_user(std::string text, std::optional<ImageAttachment> image = std::nullopt);
  void append_assistant(std::string text);

private:
  std::string id_;
  std::vector<ChatTurn> turns_;
};

struct ImageEditRequest {
  ImageAttachment source;
  std::string positive_prompt;
  std::string negative_prompt;
  std::uint64_t seed = 0;

  /// positive prompt non-empty; source bytes non-empty and decodable.
  void validate() const;
};

using RequestDigest = Digest;

/// SHA-256 over length-prefixed (tag, capability, model id, payload, seed).
/// Prompts inside `payload` are hashed verbatim.
RequestDigest compute_digest(Capability capability, std::string_view model_id, std::string_view payload,
                             std::uint64_t seed);

/// Canonical payloads: sorted-key compact JSON. Images enter as their
/// content digest and media type, never as raw bytes.
std::string canonical_chat_payload(const ProviderConfig& config, const std::vector<ChatTurn>& turns);
std::string canonical_edit_payload(const ImageEditRequest& request);

}  // namespace edct
