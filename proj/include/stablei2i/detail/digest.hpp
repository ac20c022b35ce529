#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>

namespace stablei2i::detail {

/// Incremental SHA-256 over OpenSSL's EVP interface.
class Sha256
{
public:
  Sha256() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free)
  {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1)
      throw std::runtime_error("sha256: digest init failed");
  }

  Sha256& update(std::string_view bytes)
  {
    if (EVP_DigestUpdate(ctx_.get(), bytes.data(), bytes.size()) != 1)
      throw std::runtime_error("sha256: digest update failed");
    return *this;
  }

  // Length-prefixed field so that ("ab","c") and ("a","bc") never collide.
  Sha256& field(std::string_view bytes)
  {
    std::array<unsigned char, 8> len{};
    auto n = static_cast<std::uint64_t>(bytes.size());
    for (int i = 0; i < 8; ++i)
      len[i] = static_cast<unsigned char>(n >> (8 * i));
    EVP_DigestUpdate(ctx_.get(), len.data(), len.size());
    return update(bytes);
  }

  std::string hex()
  {
    std::array<unsigned char, EVP_MAX_MD_SIZE> out{};
    unsigned int n = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), out.data(), &n) != 1)
      throw std::runtime_error("sha256: digest final failed");
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    s.reserve(2 * n);
    for (unsigned int i = 0; i < n; ++i) {
      s.push_back(digits[out[i] >> 4]);
      s.push_back(digits[out[i] & 0xf]);
    }
    return s;
  }

private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

inline std::string sha256_hex(std::string_view bytes)
{
  return Sha256{}.update(bytes).hex();
}

inline std::string base64_encode(std::string_view bytes)
{
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                          reinterpret_cast<const unsigned char*>(bytes.data()),
                          static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

}  // namespace stablei2i::detail
