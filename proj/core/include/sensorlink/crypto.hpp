#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

#include "sensorlink/bytes.hpp"
#include "sensorlink/random.hpp"

// Opaque OpenSSL key handle.
struct evp_pkey_st;

namespace sensorlink {

inline constexpr std::size_t kSessionKeyBytes = 16;
inline constexpr std::size_t kIvBytes = 16;
inline constexpr unsigned kDefaultRsaBits = 4096;

/// Largest message an OAEP(SHA-256) block of `modulus_bytes` can carry.
constexpr std::size_t oaep_sha256_capacity(std::size_t modulus_bytes) noexcept {
  constexpr std::size_t kHashLen = 32;
  return modulus_bytes < 2 * kHashLen + 2 ? 0 : modulus_bytes - 2 * kHashLen - 2;
}

/// AES-128 session key.
struct SessionKey {
  std::array<std::uint8_t, kSessionKeyBytes> bytes{};

  std::string hex() const { return to_hex(bytes); }
  static SessionKey from_hex(std::string_view hex);

  friend bool operator==(const SessionKey&, const SessionKey&) = default;
};

/// 32 lowercase hex characters identifying a user without exposing the
/// address it was derived from.
class UserHash {
 public:
  static UserHash from_hex(std::string_view hex);
  const std::string& hex() const noexcept { return hex_; }

  friend bool operator==(const UserHash&, const UserHash&) = default;
  friend auto operator<=>(const UserHash&, const UserHash&) = default;

 private:
  explicit UserHash(std::string hex) : hex_(std::move(hex)) {}
  std::string hex_;
};

class PublicKey {
 public:
  static PublicKey from_pem(std::string_view pem);
  static PublicKey load(const std::filesystem::path& path);

  std::string to_pem() const;
  /// SubjectPublicKeyInfo DER.
  Bytes to_der() const;
  std::size_t modulus_bytes() const;
  std::size_t max_plaintext_len() const { return oaep_sha256_capacity(modulus_bytes()); }

  // Adopts an OpenSSL RSA key handle.
  explicit PublicKey(std::shared_ptr<evp_pkey_st> key);
  evp_pkey_st* native() const noexcept { return key_.get(); }

 private:
  std::shared_ptr<evp_pkey_st> key_;
};

class PrivateKey {
 public:
  static PrivateKey from_pem(std::string_view pem);
  static PrivateKey load(const std::filesystem::path& path);

  /// Unencrypted PKCS#8 PEM.
  std::string to_pem() const;
  PublicKey public_key() const;
  std::size_t modulus_bytes() const;

  explicit PrivateKey(std::shared_ptr<evp_pkey_st> key);
  evp_pkey_st* native() const noexcept { return key_.get(); }

 private:
  std::shared_ptr<evp_pkey_st> key_;
};

struct ServerKeyPair {
  PublicKey public_part;
  PrivateKey private_part;
};

/// bits must be 2048, 3072 or 4096.
ServerKeyPair generate_server_keypair(unsigned bits = kDefaultRsaBits);

SessionKey generate_session_key(RandomSource& rng = system_random());

/// RSA-OAEP with SHA-256 and MGF1-SHA-256. The OAEP seed is drawn from
/// `rng`, so a DeterministicRandom yields reproducible ciphertexts.
Bytes asym_encrypt(const PublicKey& key, ByteView plaintext, RandomSource& rng = system_random());
Bytes asym_decrypt(const PrivateKey& key, ByteView ciphertext);

/// IV (16 random bytes) followed by AES-128-CBC/PKCS#7 ciphertext.
Bytes sym_encrypt(const SessionKey& key, ByteView plaintext, RandomSource& rng = system_random());
Bytes sym_decrypt(const SessionKey& key, ByteView blob);

constexpr std::size_t sym_encrypted_size(std::size_t plaintext_len) noexcept {
  return kIvBytes + (plaintext_len / 16 + 1) * 16;
}

/// Trims ASCII whitespace and lowercases ASCII letters.
std::string normalize_email(std::string_view email);
/// MD5 of the normalized address as lowercase hex.
UserHash hash_user(std::string_view email);

}  // namespace sensorlink
