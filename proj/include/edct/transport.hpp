#pragma once

#include "edct/gateway_types.hpp"

#include <atomic>
#include <memory>
#include <span>
#include <string>

namespace edct {

struct TransportRequest {
  Capability capability;
  const ProviderConfig& config;
  /// Chat: every turn including the new user turn. Empty for edits.
  std::span<const ChatTurn> turns;
  /// Set for image edits only.
  const ImageEditRequest* edit = nullptr;
};

struct TransportResponse {
  enum class Status { ok, transient, refusal };

  Status status = Status::ok;
  /// Reply text, or image bytes for edits.
  std::string body;
  std::string media_type;
  /// Human-readable failure description. Never contains credentials.
  std::string message;
  int http_status = 0;
};

/// One network round trip. Implementations may throw; the gateway treats
/// exceptions as transient failures.
class Transport {
public:
  virtual ~Transport() = default;
  virtual TransportResponse send(const TransportRequest& request) = 0;
};

/// Forwards to another transport and counts round trips.
class CountingTransport final : public Transport {
public:
  explicit CountingTransport(std::shared_ptr<Transport> inner) : inner_(std::move(inner)) {}

  TransportResponse send(const TransportRequest& request) override {
    calls_.fetch_add(1);
    return inner_->send(request);
  }
  [[nodiscard]] std::size_t calls() const noexcept { return calls_.load(); }

private:
  std::shared_ptr<Transport> inner_;
  std::atomic<std::size_t> calls_{0};
};

}  // namespace edct
