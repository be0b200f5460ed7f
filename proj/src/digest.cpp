#include "edct/digest.hpp"

#include "edct/error.hpp"

#include <openssl/evp.h>

#include <array>
#include <vector>

namespace edct {

namespace {

std::string to_hex(const unsigned char* data, std::size_t len) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (std::size_t i = 0; i < len; ++i) {
    out.push_back(kHex[data[i] >> 4]);
    out.push_back(kHex[data[i] & 0x0f]);
  }
  return out;
}

EVP_MD_CTX* md(void* p) { return static_cast<EVP_MD_CTX*>(p); }

}  // namespace

bool Digest::is_valid_hex(std::string_view hex) noexcept {
  if (hex.size() != 64) return false;
  for (char c : hex) {
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  }
  return true;
}

Digest Digest::from_hex(std::string_view hex) {
  require(is_valid_hex(hex), "digest must be 64 lowercase hex characters");
  return Digest(std::string(hex));
}

Digest sha256(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error(Errc::io_failure, "SHA-256 computation failed");
  }
  return Digest(to_hex(out.data(), len));
}

Sha256Builder::Sha256Builder() : ctx_(EVP_MD_CTX_new()) {
  if (ctx_ == nullptr || EVP_DigestInit_ex(md(ctx_), EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(md(ctx_));
    throw Error(Errc::io_failure, "SHA-256 init failed");
  }
}

Sha256Builder::~Sha256Builder() { EVP_MD_CTX_free(md(ctx_)); }

Sha256Builder& Sha256Builder::update(std::string_view bytes) {
  EVP_DigestUpdate(md(ctx_), bytes.data(), bytes.size());
  return *this;
}

Sha256Builder& Sha256Builder::field(std::uint64_t value) {
  std::array<char, 8> be{};
  for (int i = 7; i >= 0; --i) {
    be[static_cast<std::size_t>(i)] = static_cast<char>(value & 0xff);
    value >>= 8;
  }
  return update(std::string_view(be.data(), be.size()));
}

Sha256Builder& Sha256Builder::field(std::string_view bytes) {
  field(static_cast<std::uint64_t>(bytes.size()));
  return update(bytes);
}

Digest Sha256Builder::finish() {
  std::array<unsigned char, EVP_MAX_MD_SIZE> out{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(md(ctx_), out.data(), &len);
  return Digest::from_hex(to_hex(out.data(), len));
}

std::string base64_encode(std::string_view bytes) {
  if (bytes.empty()) return {};
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string base64_decode(std::string_view text) {
  std::string clean;
  clean.reserve(text.size());
  for (char c : text) {
    if (c != '\n' && c != '\r' && c != ' ') clean.push_back(c);
  }
  if (clean.empty()) return {};
  if (clean.size() % 4 != 0) throw Error(Errc::parse_error, "base64 length not a multiple of 4");
  std::vector<unsigned char> out(3 * clean.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(clean.data()),
                                static_cast<int>(clean.size()));
  if (n < 0) throw Error(Errc::parse_error, "malformed base64");
  std::size_t len = static_cast<std::size_t>(n);
  // EVP_DecodeBlock does not account for padding.
  if (clean.ends_with("==")) len -= 2;
  else if (clean.ends_with('=')) len -= 1;
  return std::string(reinterpret_cast<const char*>(out.data()), len);
}

}  // namespace edct
