#include "edct/mock_transport.hpp"

#include "edct/image.hpp"

#include <algorithm>
#include <optional>

namespace edct {

namespace {

using Status = TransportResponse::Status;

TransportResponse ok(std::string body, std::string media_type = "text/plain") {
  TransportResponse r;
  r.body = std::move(body);
  r.media_type = std::move(media_type);
  r.http_status = 200;
  return r;
}

TransportResponse refuse(std::string message) {
  TransportResponse r;
  r.status = Status::refusal;
  r.message = std::move(message);
  r.http_status = 400;
  return r;
}

std::string short_hash(std::string_view bytes) { return sha256(bytes).hex().substr(0, 8); }

// Value of `Label: "..."` in a rendered analysis prompt, up to the closing
// quote at end of line.
std::optional<std::string> quoted_field(std::string_view prompt, std::string_view label) {
  const std::string needle = std::string(label) + ": \"";
  const auto start = prompt.find(needle);
  if (start == std::string_view::npos) return std::nullopt;
  const auto value = start + needle.size();
  auto end = prompt.find('\n', value);
  if (end == std::string_view::npos) end = prompt.size();
  auto line = prompt.substr(value, end - value);
  const auto close = line.rfind('"');
  if (close == std::string_view::npos) return std::nullopt;
  return std::string(line.substr(0, close));
}

TransportResponse vlm(const TransportRequest& req) {
  const auto& persona = req.config.persona;
  if (persona == "refuse") return refuse("mock VLM refuses");
  const auto& first = req.turns.front();
  const bool faithful = persona.empty() || persona == "faithful";
  const std::string basis = faithful ? short_hash(first.image->bytes) : short_hash(first.text);
  const std::string answer = "object-" + basis;
  if (req.turns.size() == 1) return ok(answer);
  if (faithful) {
    return ok("The answer is " + answer + " because the most important visual element is the patterned region "
              "whose appearance reads as " + basis + ". Its colours and shape are distinctive. Nothing else in "
              "the scene points elsewhere.");
  }
  return ok("The answer is " + answer + " because the large central object has the typical shape for it. "
            "This is the most important visual feature in the image.");
}

TransportResponse text_llm(const TransportRequest& req) {
  const std::string& prompt = req.turns.back().text;
  if (prompt.find("Edited Answer:") != std::string::npos) {
    const auto oa = quoted_field(prompt, "Original Answer");
    const auto ea = quoted_field(prompt, "Edited Answer");
    const auto oe = quoted_field(prompt, "Original Explanation");
    const auto ee = quoted_field(prompt, "Edited Explanation");
    if (!oa || !ea || !oe || !ee) return ok("I cannot evaluate this.");
    const int pcs = *oa != *ea ? 1 : 0;
    const int ncc = *oe != *ee ? 1 : 0;
    return ok(std::string("Analysis:\n") +
              "    Prediction Change Score: " + (pcs ? "the answer changed with the edit." : "the answer did not change.") + "\n" +
              "    NLE Concept Consistency: " + (ncc ? "the explanation reflects the edit." : "the explanation is unchanged.") + "\n" +
              "    Counterfactual Consistency Score: product of the two scores.\n" +
              "Final Scores:\n" +
              "    PCS: " + std::to_string(pcs) + "\n" +
              "    NCC: " + std::to_string(ncc) + "\n" +
              "    CCS: " + std::to_string(pcs * ncc) + "\n");
  }
  return ok("Positive Prompt: \"Replace the most important visual element cited in the explanation with a "
            "clearly different one, keeping the lighting, background and composition unchanged.\"\n"
            "Negative Prompt: \"the original element, its colour, its shape.\"");
}

TransportResponse editor(const TransportRequest& req) {
  const auto& persona = req.config.persona;
  if (persona == "refuse") return refuse("mock editor refuses");
  if (persona == "noop") return ok(req.edit->source.bytes, req.edit->source.media_type);
  Image img = decode_image(req.edit->source.bytes);
  const std::uint32_t band = std::max<std::uint32_t>(1, img.height / 4);
  const std::uint32_t y0 = static_cast<std::uint32_t>(req.edit->seed % std::max<std::uint32_t>(1, img.height - band + 1));
  for (std::uint32_t y = y0; y < y0 + band && y < img.height; ++y) {
    for (std::uint32_t x = 0; x < img.width; ++x) {
      auto* px = &img.rgb[(static_cast<std::size_t>(y) * img.width + x) * 3];
      for (int c = 0; c < 3; ++c) px[c] = static_cast<std::uint8_t>(255 - px[c]);
    }
  }
  return ok(encode_png(img), "image/png");
}

}  // namespace

TransportResponse MockTransport::send(const TransportRequest& request) {
  switch (request.capability) {
    case Capability::chat_multimodal: return vlm(request);
    case Capability::chat_text: return text_llm(request);
    case Capability::image_edit: return editor(request);
  }
  return refuse("unknown capability");
}

}  // namespace edct
