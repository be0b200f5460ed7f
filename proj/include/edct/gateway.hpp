#pragma once

#include "edct/clock.hpp"
#include "edct/error.hpp"
#include "edct/gateway_types.hpp"
#include "edct/rate_limiter.hpp"
#include "edct/request_cache.hpp"
#include "edct/transport.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>

namespace edct {

/// live: always call the provider. record: serve from cache, call and store
/// on a miss. replay: cache only; a miss is Error(replay_miss).
enum class Mode { live, record, replay };

std::string_view mode_name(Mode m) noexcept;
/// Throws Error(config_error).
Mode parse_mode(std::string_view name);

struct GatewayOptions {
  Mode mode = Mode::live;
  /// Required for record and replay.
  std::filesystem::path cache_dir;
  /// Defaults to a SteadyClock owned by the gateway.
  std::shared_ptr<Clock> clock;
  std::uint64_t jitter_seed = 0;
  std::chrono::milliseconds base_backoff{500};
  std::chrono::milliseconds max_backoff{30000};
};

/// Provider answered with a blank body. Code is provider_refusal.
class EmptyReplyError : public Error {
public:
  using Error::Error;
};

using TransportResolver = std::function<std::shared_ptr<Transport>(const ProviderConfig&)>;

struct ChatResult {
  std::string reply;
  ChatSession session;
  RequestDigest digest;
  bool from_cache = false;
};

struct EditResult {
  std::string bytes;
  std::string media_type;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  RequestDigest digest;
  bool from_cache = false;
};

struct GatewayStats {
  std::size_t transport_attempts = 0;
  std::size_t cache_hits = 0;
  std::size_t retries = 0;
};

/// Provider-agnostic access to chat and image-edit models. Safe to share
/// across worker threads; a ChatSession must stay with one worker.
class Gateway {
public:
  Gateway(GatewayOptions options, TransportResolver resolver);

  /// Appends `user_text` (plus `image`, only allowed on an empty session)
  /// and returns the assistant reply with the extended session.
  /// Errors: precondition, retryable_exhausted, provider_refusal, replay_miss.
  ChatResult chat_complete(const ProviderConfig& config, const ChatSession& session, std::string_view user_text,
                           std::optional<ImageAttachment> image = std::nullopt);

  /// As chat_complete, plus Error(undecodable_image) for non-image replies.
  EditResult edit_image(const ProviderConfig& config, const ImageEditRequest& request);

  [[nodiscard]] Mode mode() const noexcept { return options_.mode; }
  [[nodiscard]] GatewayStats stats() const;

  /// Backoff before retry number `attempt` (0-based): base * 2^attempt
  /// capped at max, scaled by a jitter factor in [0.5, 1).
  Clock::duration backoff_delay(int attempt);

private:
  struct Outcome {
    std::string body;
    bool from_cache = false;
  };

  Outcome execute(Capability capability, const ProviderConfig& config, const std::string& payload,
                  const TransportRequest& request, const RequestDigest& digest,
                  const std::function<void(const TransportResponse&)>& validate);
  SlidingWindowRateLimiter& limiter_for(const ProviderConfig& config);

  GatewayOptions options_;
  TransportResolver resolver_;
  std::optional<ResponseCache> cache_;

  mutable std::mutex mutex_;
  std::map<std::string, std::unique_ptr<SlidingWindowRateLimiter>> limiters_;
  std::mt19937_64 jitter_rng_;
  GatewayStats stats_;
};

}  // namespace edct
