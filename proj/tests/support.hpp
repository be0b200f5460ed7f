#pragma once

#include "edct/gateway.hpp"
#include "edct/image.hpp"
#include "edct/transport.hpp"

#include <atomic>
#include <filesystem>
#include <functional>
#include <mutex>
#include <random>
#include <string>

namespace edct::tst {

class TempDir {
public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("edct-test-" + std::to_string(rd()) + "-" + std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

/// Deterministic PNG with a gradient and a seeded square.
inline std::string make_png(std::uint32_t w, std::uint32_t h, std::uint32_t seed = 0) {
  Image img;
  img.width = w;
  img.height = h;
  img.rgb.resize(static_cast<std::size_t>(w) * h * 3);
  for (std::uint32_t y = 0; y < h; ++y) {
    for (std::uint32_t x = 0; x < w; ++x) {
      auto* p = &img.rgb[(static_cast<std::size_t>(y) * w + x) * 3];
      p[0] = static_cast<std::uint8_t>((x * 7 + seed * 31) & 0xff);
      p[1] = static_cast<std::uint8_t>((y * 5 + seed * 17) & 0xff);
      p[2] = static_cast<std::uint8_t>(((x + y) * 3 + seed) & 0xff);
    }
  }
  return encode_png(img);
}

inline ImageAttachment png_attachment(std::uint32_t seed = 0) { return {make_png(16, 16, seed), "image/png"}; }

/// Transport driven by a callback, counting calls.
class ScriptedTransport final : public Transport {
public:
  using Handler = std::function<TransportResponse(const TransportRequest&)>;
  explicit ScriptedTransport(Handler h) : handler_(std::move(h)) {}

  TransportResponse send(const TransportRequest& request) override {
    std::lock_guard lock(mutex_);
    ++calls_;
    return handler_(request);
  }
  [[nodiscard]] std::size_t calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
  }

private:
  Handler handler_;
  mutable std::mutex mutex_;
  std::size_t calls_ = 0;
};

inline TransportResponse ok_text(std::string body) {
  TransportResponse r;
  r.body = std::move(body);
  r.media_type = "text/plain";
  return r;
}

inline TransportResponse refusal(std::string message) {
  TransportResponse r;
  r.status = TransportResponse::Status::refusal;
  r.message = std::move(message);
  return r;
}

inline TransportResponse transient(std::string message = "timeout") {
  TransportResponse r;
  r.status = TransportResponse::Status::transient;
  r.message = std::move(message);
  return r;
}

inline ProviderConfig mock_provider(std::string name, std::string persona = {}) {
  ProviderConfig p;
  p.name = name;
  p.kind = "mock";
  p.model_id = "mock-" + name;
  p.persona = std::move(persona);
  return p;
}

inline TransportResolver resolve_to(std::shared_ptr<Transport> t) {
  return [t](const ProviderConfig&) { return t; };
}

/// Gateway in live mode on a simulated clock, so backoff never sleeps.
inline Gateway live_gateway(std::shared_ptr<Transport> t) {
  GatewayOptions o;
  o.mode = Mode::live;
  o.clock = std::make_shared<SimulatedClock>();
  return Gateway(o, resolve_to(std::move(t)));
}

inline std::filesystem::path source_dir() { return EDCT_SOURCE_DIR; }

}  // namespace edct::tst
