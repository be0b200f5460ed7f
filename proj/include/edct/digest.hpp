#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace edct {

/// Lowercase hex SHA-256 digest. Always 64 characters once constructed.
class Digest {
public:
  Digest() = default;

  /// Throws Error(precondition) unless `hex` is 64 lowercase hex characters.
  static Digest from_hex(std::string_view hex);
  static bool is_valid_hex(std::string_view hex) noexcept;

  [[nodiscard]] const std::string& hex() const noexcept { return hex_; }
  [[nodiscard]] std::string_view prefix() const noexcept { return std::string_view(hex_).substr(0, 2); }
  [[nodiscard]] bool empty() const noexcept { return hex_.empty(); }

  auto operator<=>(const Digest&) const = default;

private:
  explicit Digest(std::string hex) : hex_(std::move(hex)) {}
  std::string hex_;
  friend Digest sha256(std::string_view);
};

Digest sha256(std::string_view bytes);

/// Streaming SHA-256 for preimages assembled from several fields.
class Sha256Builder {
public:
  Sha256Builder();
  ~Sha256Builder();
  Sha256Builder(const Sha256Builder&) = delete;
  Sha256Builder& operator=(const Sha256Builder&) = delete;

  Sha256Builder& update(std::string_view bytes);
  /// Appends an 8-byte big-endian length followed by the bytes, so field
  /// boundaries are unambiguous.
  Sha256Builder& field(std::string_view bytes);
  Sha256Builder& field(std::uint64_t value);
  Digest finish();

private:
  void* ctx_;
};

std::string base64_encode(std::string_view bytes);
/// Throws Error(parse_error) on malformed input.
std::string base64_decode(std::string_view text);

}  // namespace edct

template <>
struct std::hash<edct::Digest> {
  std::size_t operator()(const edct::Digest& d) const noexcept {
    return std::hash<std::string>{}(d.hex());
  }
};
