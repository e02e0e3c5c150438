#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

#include "tit/core/error.hpp"

namespace tit {

/// 64 lowercase hex characters of a SHA-256 digest.
using Digest = std::string;

namespace detail {

inline std::string to_hex(std::span<const unsigned char> bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(bytes.size() * 2, '0');
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    out[2 * i] = kHex[bytes[i] >> 4];
    out[2 * i + 1] = kHex[bytes[i] & 0x0F];
  }
  return out;
}

}  // namespace detail

/// Incremental SHA-256.
class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1)
      throw Error(Errc::IoError, "EVP sha256 init failed");
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(std::span<const std::byte> data) {
    EVP_DigestUpdate(ctx_, data.data(), data.size());
    return *this;
  }
  Sha256& update(std::string_view s) { return update(std::as_bytes(std::span(s.data(), s.size()))); }

  Digest hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, md.data(), &len);
    return detail::to_hex(std::span(md.data(), len));
  }

 private:
  EVP_MD_CTX* ctx_;
};

inline Digest content_hash(std::span<const std::byte> bytes) { return Sha256().update(bytes).hex(); }

inline Digest content_hash(std::string_view bytes) { return Sha256().update(bytes).hex(); }

inline bool is_digest(std::string_view s) {
  if (s.size() != 64) return false;
  for (char c : s)
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  return true;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string(), {{"path", path.string()}});
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline Digest file_hash(const std::filesystem::path& path) { return content_hash(read_file_bytes(path)); }

/// Digest of several fields, each length-prefixed so that field boundaries
/// cannot be shifted to produce a collision ("ab","c" vs "a","bc").
inline Digest composite_hash(std::initializer_list<std::string_view> fields) {
  Sha256 h;
  for (auto f : fields) {
    h.update(std::to_string(f.size())).update(":").update(f);
  }
  return h.hex();
}

inline std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

}  // namespace tit
