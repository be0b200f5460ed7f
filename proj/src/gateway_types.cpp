#include "edct/gateway_types.hpp"

#include "edct/error.hpp"
#include "edct/image.hpp"

#include <nlohmann/json.hpp>

namespace edct {

std::string_view capability_name(Capability c) noexcept {
  switch (c) {
    case Capability::chat_multimodal: return "chat-multimodal";
    case Capability::chat_text: return "chat-text";
    case Capability::image_edit: return "image-edit";
  }
  return "unknown";
}

void ProviderConfig::validate() const {
  auto fail = [&](const std::string& what) { throw Error(Errc::config_error, "provider '" + name + "': " + what); };
  if (kind != "openai" && kind != "image-edit" && kind != "mock") fail("unknown kind '" + kind + "'");
  if (kind != "mock" && endpoint_url.empty()) fail("endpoint_url must be non-empty");
  if (model_id.empty()) fail("model_id must be non-empty");
  if (max_output_tokens <= 0) fail("max_output_tokens must be positive");
  if (max_retries < 0 || max_retries > 20) fail("max_retries must lie in [0, 20]");
  if (requests_per_minute <= 0) fail("requests_per_minute must be positive");
  if (timeout.count() <= 0) fail("timeout must be positive");
}

void ChatSession::append_user(std::string text, std::optional<ImageAttachment> image) {
  require(turns_.empty() || turns_.back().role == Role::assistant, "user turn must follow an assistant turn");
  require(!text.empty(), "user turn text must be non-empty");
  require(!image || turns_.empty(), "an image may only be attached to the first user turn");
  if (image) require(!image->bytes.empty(), "image attachment is empty");
  turns_.push_back({Role::user, std::move(text), std::move(image)});
}

void ChatSession::append_assistant(std::string text) {
  require(!turns_.empty() && turns_.back().role == Role::user, "assistant turn must follow a user turn");
  turns_.push_back({Role::assistant, std::move(text), std::nullopt});
}

void ImageEditRequest::validate() const {
  require(!positive_prompt.empty(), "edit request needs a non-empty positive prompt");
  require(!source.bytes.empty(), "edit request needs source image bytes");
  try {
    (void)decode_image(source.bytes);
  } catch (const Error& e) {
    throw Error(Errc::precondition, std::string("edit source image is not decodable: ") + e.what());
  }
}

RequestDigest compute_digest(Capability capability, std::string_view model_id, std::string_view payload,
                             std::uint64_t seed) {
  Sha256Builder b;
  b.field("edct-request-v1").field(capability_name(capability)).field(model_id).field(payload).field(seed);
  return b.finish();
}

std::string canonical_chat_payload(const ProviderConfig& config, const std::vector<ChatTurn>& turns) {
  nlohmann::json j;
  j["max_output_tokens"] = config.max_output_tokens;
  if (config.temperature) j["temperature"] = *config.temperature;
  auto arr = nlohmann::json::array();
  for (const auto& t : turns) {
    nlohmann::json turn{{"role", t.role == Role::user ? "user" : "assistant"}, {"text", t.text}};
    if (t.image) {
      turn["image_digest"] = t.image->digest().hex();
      turn["image_media_type"] = t.image->media_type;
    }
    arr.push_back(std::move(turn));
  }
  j["turns"] = std::move(arr);
  return j.dump();
}

std::string canonical_edit_payload(const ImageEditRequest& request) {
  nlohmann::json j{{"source_digest", request.source.digest().hex()},
                   {"source_media_type", request.source.media_type},
                   {"positive_prompt", request.positive_prompt},
                   {"negative_prompt", request.negative_prompt}};
  return j.dump();
}

}  // namespace edct
