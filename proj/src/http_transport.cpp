#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "edct/http_transport.hpp"

#include "edct/error.hpp"
#include "edct/image.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>

namespace edct {

namespace {

using Status = TransportResponse::Status;

TransportResponse failure(Status status, std::string message, int http_status = 0) {
  TransportResponse r;
  r.status = status;
  r.message = std::move(message);
  r.http_status = http_status;
  return r;
}

bool is_transient(int code) { return code == 408 || code == 425 || code == 429 || code >= 500; }

std::string snippet(std::string_view body) {
  try {
    const auto j = nlohmann::json::parse(body);
    if (j.contains("error")) {
      const auto& e = j["error"];
      if (e.is_object() && e.contains("message") && e["message"].is_string()) return e["message"].get<std::string>();
      if (e.is_string()) return e.get<std::string>();
    }
  } catch (const nlohmann::json::exception&) {
  }
  return std::string(body.substr(0, 300));
}

nlohmann::json chat_body(const TransportRequest& req) {
  auto messages = nlohmann::json::array();
  for (const auto& turn : req.turns) {
    nlohmann::json msg;
    msg["role"] = turn.role == Role::user ? "user" : "assistant";
    if (turn.image) {
      const std::string url = "data:" + turn.image->media_type + ";base64," + base64_encode(turn.image->bytes);
      msg["content"] = nlohmann::json::array({
          {{"type", "text"}, {"text", turn.text}},
          {{"type", "image_url"}, {"image_url", {{"url", url}}}},
      });
    } else {
      msg["content"] = turn.text;
    }
    messages.push_back(std::move(msg));
  }
  nlohmann::json body{{"model", req.config.model_id},
                      {"messages", std::move(messages)},
                      {"max_tokens", req.config.max_output_tokens}};
  if (req.config.temperature) body["temperature"] = *req.config.temperature;
  return body;
}

std::optional<std::string> chat_reply_text(const std::string& body) {
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
    return std::nullopt;
  }
  const auto& msg = j["choices"][0].value("message", nlohmann::json::object());
  if (!msg.contains("content")) return std::nullopt;
  const auto& content = msg["content"];
  if (content.is_string()) return content.get<std::string>();
  if (content.is_array()) {
    std::string text;
    for (const auto& part : content) {
      if (part.is_object() && part.value("type", "") == "text") text += part.value("text", "");
    }
    return text;
  }
  if (content.is_null()) return std::string();
  return std::nullopt;
}

std::optional<std::string> edit_reply_image(const httplib::Response& res) {
  const auto type = res.get_header_value("Content-Type");
  if (type.rfind("image/", 0) == 0) return res.body;
  const auto j = nlohmann::json::parse(res.body, nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  try {
    if (j.contains("image") && j["image"].is_string()) return base64_decode(j["image"].get<std::string>());
    if (j.contains("data") && j["data"].is_array() && !j["data"].empty() && j["data"][0].contains("b64_json")) {
      return base64_decode(j["data"][0]["b64_json"].get<std::string>());
    }
  } catch (const Error&) {
    return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::string> process_env(std::string_view name) {
  const char* v = std::getenv(std::string(name).c_str());
  if (v == nullptr) return std::nullopt;
  return std::string(v);
}

ParsedUrl parse_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) throw Error(Errc::config_error, "endpoint URL lacks a scheme");
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw Error(Errc::config_error, "unsupported URL scheme '" + std::string(scheme) + "'");
  }
  const auto rest = url.substr(scheme_end + 3);
  const auto slash = rest.find('/');
  const auto authority = rest.substr(0, slash);
  if (authority.empty()) throw Error(Errc::config_error, "endpoint URL lacks a host");
  ParsedUrl out;
  out.scheme_host_port = std::string(scheme) + "://" + std::string(authority);
  out.path = slash == std::string_view::npos ? "/" : std::string(rest.substr(slash));
  return out;
}

TransportResponse HttpTransport::send(const TransportRequest& req) {
  const auto url = parse_url(req.config.endpoint_url);
  httplib::Client client(url.scheme_host_port);
  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(req.config.timeout);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  httplib::Headers headers;
  if (!req.config.api_key_env.empty()) {
    const auto key = env_(req.config.api_key_env);
    if (!key || key->empty()) {
      return failure(Status::refusal, "environment variable " + req.config.api_key_env + " is not set");
    }
    headers.emplace("Authorization", "Bearer " + *key);
  }

  httplib::Result res{nullptr, httplib::Error::Unknown};
  if (req.capability == Capability::image_edit) {
    const auto& edit = *req.edit;
    const std::string ext = edit.source.media_type == "image/jpeg" ? "jpg" : "png";
    httplib::MultipartFormDataItems items{
        {"image", edit.source.bytes, "image." + ext, edit.source.media_type},
        {"prompt", edit.positive_prompt, "", ""},
        {"negative_prompt", edit.negative_prompt, "", ""},
        {"seed", std::to_string(edit.seed), "", ""},
        {"model", req.config.model_id, "", ""},
    };
    res = client.Post(url.path, headers, items);
  } else {
    res = client.Post(url.path, headers, chat_body(req).dump(), "application/json");
  }

  if (!res) return failure(Status::transient, "transport error: " + httplib::to_string(res.error()));
  const int code = res->status;
  if (code < 200 || code >= 300) {
    return failure(is_transient(code) ? Status::transient : Status::refusal,
                   "HTTP " + std::to_string(code) + ": " + snippet(res->body), code);
  }

  TransportResponse out;
  out.http_status = code;
  if (req.capability == Capability::image_edit) {
    // Anything unrecognized is passed through so the gateway reports it as undecodable.
    auto image = edit_reply_image(*res);
    out.body = image ? std::move(*image) : res->body;
    out.media_type = detect_media_type(out.body).value_or("application/octet-stream");
  } else {
    auto text = chat_reply_text(res->body);
    if (!text) return failure(Status::refusal, "malformed chat completion: " + snippet(res->body), code);
    out.body = std::move(*text);
    out.media_type = "text/plain";
  }
  return out;
}

}  // namespace edct
