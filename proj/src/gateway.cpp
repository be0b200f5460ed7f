#include "edct/gateway.hpp"

#include "edct/error.hpp"
#include "edct/image.hpp"

#include <algorithm>
#include <cmath>

namespace edct {

namespace {

bool blank(std::string_view s) {
  return s.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

}  // namespace

std::string_view mode_name(Mode m) noexcept {
  switch (m) {
    case Mode::live: return "live";
    case Mode::record: return "record";
    case Mode::replay: return "replay";
  }
  return "live";
}

Mode parse_mode(std::string_view name) {
  if (name == "live") return Mode::live;
  if (name == "record") return Mode::record;
  if (name == "replay") return Mode::replay;
  throw Error(Errc::config_error, "unknown mode '" + std::string(name) + "' (expected live, record or replay)");
}

Gateway::Gateway(GatewayOptions options, TransportResolver resolver)
    : options_(std::move(options)), resolver_(std::move(resolver)), jitter_rng_(options_.jitter_seed) {
  if (!options_.clock) options_.clock = std::make_shared<SteadyClock>();
  if (options_.mode != Mode::live) {
    if (options_.cache_dir.empty()) {
      throw Error(Errc::config_error, "record and replay modes need a cache directory");
    }
    if (options_.mode == Mode::replay && !std::filesystem::is_directory(options_.cache_dir)) {
      throw Error(Errc::config_error, "replay cache directory does not exist: " + options_.cache_dir.string());
    }
    cache_.emplace(options_.cache_dir);
  }
}

GatewayStats Gateway::stats() const {
  std::lock_guard lock(mutex_);
  return stats_;
}

Clock::duration Gateway::backoff_delay(int attempt) {
  const double base = static_cast<double>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(options_.base_backoff).count());
  const double cap = static_cast<double>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(options_.max_backoff).count());
  const double raw = std::min(cap, base * std::ldexp(1.0, std::min(attempt, 40)));
  double jitter = 0.0;
  {
    std::lock_guard lock(mutex_);
    jitter = std::uniform_real_distribution<double>(0.5, 1.0)(jitter_rng_);
  }
  return Clock::duration(static_cast<Clock::duration::rep>(raw * jitter));
}

SlidingWindowRateLimiter& Gateway::limiter_for(const ProviderConfig& config) {
  std::lock_guard lock(mutex_);
  auto& slot = limiters_[config.name + "\n" + config.model_id];
  if (!slot) {
    slot = std::make_unique<SlidingWindowRateLimiter>(static_cast<std::size_t>(config.requests_per_minute),
                                                      std::chrono::minutes(1), *options_.clock);
  }
  return *slot;
}

Gateway::Outcome Gateway::execute(Capability capability, const ProviderConfig& config, const std::string& payload,
                                  const TransportRequest& request, const RequestDigest& digest,
                                  const std::function<void(const TransportResponse&)>& validate) {
  if (cache_) {
    if (auto hit = cache_->load(digest)) {
      std::lock_guard lock(mutex_);
      ++stats_.cache_hits;
      return {std::move(*hit), true};
    }
    if (options_.mode == Mode::replay) {
      throw Error(Errc::replay_miss, "no recorded response for " + std::string(capability_name(capability)) +
                                         " request " + digest.hex() + " (provider '" + config.name + "')");
    }
  }

  auto transport = resolver_(config);
  if (!transport) throw Error(Errc::config_error, "no transport for provider '" + config.name + "'");

  std::string last_failure;
  for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
    limiter_for(config).acquire();
    {
      std::lock_guard lock(mutex_);
      ++stats_.transport_attempts;
    }
    TransportResponse resp;
    try {
      resp = transport->send(request);
    } catch (const std::exception& e) {
      resp.status = TransportResponse::Status::transient;
      resp.message = e.what();
    }

    if (resp.status == TransportResponse::Status::ok) {
      validate(resp);
      if (cache_) {
        cache_->store(digest, capability, config.model_id, payload, resp.body,
                      resp.media_type.empty() ? "text/plain" : resp.media_type);
      }
      return {std::move(resp.body), false};
    }
    if (resp.status == TransportResponse::Status::refusal) {
      throw Error(Errc::provider_refusal, "provider '" + config.name + "' refused: " + resp.message);
    }
    last_failure = resp.message;
    if (attempt < config.max_retries) {
      {
        std::lock_guard lock(mutex_);
        ++stats_.retries;
      }
      options_.clock->sleep_for(backoff_delay(attempt));
    }
  }
  throw Error(Errc::retryable_exhausted, "provider '" + config.name + "' failed after " +
                                             std::to_string(config.max_retries + 1) + " attempts: " + last_failure);
}

ChatResult Gateway::chat_complete(const ProviderConfig& config, const ChatSession& session,
                                  std::string_view user_text, std::optional<ImageAttachment> image) {
  require(!user_text.empty(), "new user turn must be non-empty");
  ChatSession next = session;
  next.append_user(std::string(user_text), std::move(image));
  const Capability capability = next.has_image() ? Capability::chat_multimodal : Capability::chat_text;
  const std::string payload = canonical_chat_payload(config, next.turns());
  const RequestDigest digest = compute_digest(capability, config.model_id, payload, 0);

  const TransportRequest request{capability, config, next.turns(), nullptr};
  auto outcome = execute(capability, config, payload, request, digest, [&](const TransportResponse& r) {
    if (blank(r.body)) throw EmptyReplyError(Errc::provider_refusal, "provider '" + config.name + "' returned an empty reply");
  });
  ChatResult result;
  result.reply = outcome.body;
  next.append_assistant(std::move(outcome.body));
  result.session = std::move(next);
  result.digest = digest;
  result.from_cache = outcome.from_cache;
  return result;
}

EditResult Gateway::edit_image(const ProviderConfig& config, const ImageEditRequest& request) {
  request.validate();
  const std::string payload = canonical_edit_payload(request);
  const RequestDigest digest = compute_digest(Capability::image_edit, config.model_id, payload, request.seed);

  const TransportRequest treq{Capability::image_edit, config, {}, &request};
  auto outcome = execute(Capability::image_edit, config, payload, treq, digest,
                         [&](const TransportResponse& r) {
                           try {
                             (void)decode_image(r.body);
                           } catch (const Error& e) {
                             throw Error(Errc::undecodable_image,
                                         "provider '" + config.name + "' returned a non-image payload: " + e.what());
                           }
                         });
  const Image decoded = decode_image(outcome.body);
  EditResult result;
  result.media_type = detect_media_type(outcome.body).value_or("application/octet-stream");
  result.bytes = std::move(outcome.body);
  result.width = decoded.width;
  result.height = decoded.height;
  result.digest = digest;
  result.from_cache = outcome.from_cache;
  return result;
}

}  // namespace edct
