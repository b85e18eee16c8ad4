#include "sensorlink/crypto.hpp"

#include <openssl/bio.h>
#include <openssl/err.h>
#include <openssl/evp.h>
#include <openssl/pem.h>
#include <openssl/rsa.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "sensorlink/error.hpp"

namespace sensorlink {
namespace {

constexpr std::size_t kSha256Len = 32;

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const noexcept { Free(p); }
};

using PkeyCtxPtr = std::unique_ptr<EVP_PKEY_CTX, Deleter<EVP_PKEY_CTX, EVP_PKEY_CTX_free>>;
using CipherCtxPtr = std::unique_ptr<EVP_CIPHER_CTX, Deleter<EVP_CIPHER_CTX, EVP_CIPHER_CTX_free>>;
using MdCtxPtr = std::unique_ptr<EVP_MD_CTX, Deleter<EVP_MD_CTX, EVP_MD_CTX_free>>;
using BioPtr = std::unique_ptr<BIO, Deleter<BIO, BIO_free_all>>;

std::shared_ptr<EVP_PKEY> adopt(EVP_PKEY* raw) { return {raw, EVP_PKEY_free}; }

std::string openssl_error() {
  unsigned long code = ERR_get_error();
  ERR_clear_error();
  if (code == 0) return "unknown OpenSSL error";
  char buf[256];
  ERR_error_string_n(code, buf, sizeof buf);
  return buf;
}

void require_rsa(EVP_PKEY* key) {
  if (key == nullptr || EVP_PKEY_base_id(key) != EVP_PKEY_RSA) {
    throw Error(Errc::key_io, "not an RSA key");
  }
}

std::string bio_to_string(BIO* bio) {
  char* data = nullptr;
  long len = BIO_get_mem_data(bio, &data);
  return std::string(data, static_cast<std::size_t>(len));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::key_io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void sha256(ByteView a, ByteView b, std::uint8_t* out) {
  MdCtxPtr ctx(EVP_MD_CTX_new());
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), a.data(), a.size()) != 1 ||
      EVP_DigestUpdate(ctx.get(), b.data(), b.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), out, &len) != 1) {
    throw Error(Errc::invalid_argument, "sha256: " + openssl_error());
  }
}

// MGF1 with SHA-256, XORed into `target`.
void mgf1_xor(ByteView seed, std::span<std::uint8_t> target) {
  std::uint8_t block[kSha256Len];
  std::uint8_t counter[4] = {0, 0, 0, 0};
  for (std::size_t done = 0, c = 0; done < target.size(); ++c) {
    counter[0] = static_cast<std::uint8_t>(c >> 24);
    counter[1] = static_cast<std::uint8_t>(c >> 16);
    counter[2] = static_cast<std::uint8_t>(c >> 8);
    counter[3] = static_cast<std::uint8_t>(c);
    sha256(seed, counter, block);
    for (std::size_t i = 0; i < kSha256Len && done < target.size(); ++i, ++done) {
      target[done] ^= block[i];
    }
  }
}

// EME-OAEP encoding with an empty label. Encoding is done here rather than
// inside OpenSSL so the seed comes from the caller's RandomSource.
Bytes oaep_encode(ByteView message, std::size_t k, RandomSource& rng) {
  const std::size_t db_len = k - kSha256Len - 1;
  Bytes em(k, 0);
  auto seed = std::span(em).subspan(1, kSha256Len);
  auto db = std::span(em).subspan(1 + kSha256Len, db_len);

  sha256({}, {}, db.data());  // lHash
  db[db_len - message.size() - 1] = 0x01;
  std::copy(message.begin(), message.end(), db.end() - static_cast<std::ptrdiff_t>(message.size()));

  rng.fill(seed);
  mgf1_xor(seed, db);
  mgf1_xor(db, seed);
  return em;
}

}  // namespace

SessionKey SessionKey::from_hex(std::string_view hex) {
  if (hex.size() != 2 * kSessionKeyBytes || !is_lower_hex(hex)) {
    throw Error(Errc::invalid_argument, "session key must be 32 lowercase hex digits");
  }
  SessionKey key;
  auto raw = sensorlink::from_hex(hex);
  std::copy(raw.begin(), raw.end(), key.bytes.begin());
  return key;
}

UserHash UserHash::from_hex(std::string_view hex) {
  if (hex.size() != 32 || !is_lower_hex(hex)) {
    throw Error(Errc::invalid_argument, "user hash must be 32 lowercase hex digits");
  }
  return UserHash(std::string(hex));
}

PublicKey::PublicKey(std::shared_ptr<evp_pkey_st> key) : key_(std::move(key)) { require_rsa(key_.get()); }

PublicKey PublicKey::from_pem(std::string_view pem) {
  BioPtr bio(BIO_new_mem_buf(pem.data(), static_cast<int>(pem.size())));
  EVP_PKEY* raw = PEM_read_bio_PUBKEY(bio.get(), nullptr, nullptr, nullptr);
  if (raw == nullptr) throw Error(Errc::key_io, "bad public key PEM: " + openssl_error());
  return PublicKey(adopt(raw));
}

PublicKey PublicKey::load(const std::filesystem::path& path) { return from_pem(read_file(path)); }

std::string PublicKey::to_pem() const {
  BioPtr bio(BIO_new(BIO_s_mem()));
  if (PEM_write_bio_PUBKEY(bio.get(), key_.get()) != 1) {
    throw Error(Errc::key_io, "PEM_write_bio_PUBKEY: " + openssl_error());
  }
  return bio_to_string(bio.get());
}

Bytes PublicKey::to_der() const {
  int len = i2d_PUBKEY(key_.get(), nullptr);
  if (len <= 0) throw Error(Errc::key_io, "i2d_PUBKEY: " + openssl_error());
  Bytes out(static_cast<std::size_t>(len));
  auto* p = out.data();
  i2d_PUBKEY(key_.get(), &p);
  return out;
}

std::size_t PublicKey::modulus_bytes() const { return static_cast<std::size_t>(EVP_PKEY_get_size(key_.get())); }

PrivateKey::PrivateKey(std::shared_ptr<evp_pkey_st> key) : key_(std::move(key)) { require_rsa(key_.get()); }

PrivateKey PrivateKey::from_pem(std::string_view pem) {
  BioPtr bio(BIO_new_mem_buf(pem.data(), static_cast<int>(pem.size())));
  EVP_PKEY* raw = PEM_read_bio_PrivateKey(bio.get(), nullptr, nullptr, nullptr);
  if (raw == nullptr) throw Error(Errc::key_io, "bad private key PEM: " + openssl_error());
  return PrivateKey(adopt(raw));
}

PrivateKey PrivateKey::load(const std::filesystem::path& path) { return from_pem(read_file(path)); }

std::string PrivateKey::to_pem() const {
  BioPtr bio(BIO_new(BIO_s_mem()));
  if (PEM_write_bio_PrivateKey(bio.get(), key_.get(), nullptr, nullptr, 0, nullptr, nullptr) != 1) {
    throw Error(Errc::key_io, "PEM_write_bio_PrivateKey: " + openssl_error());
  }
  return bio_to_string(bio.get());
}

PublicKey PrivateKey::public_key() const {
  // Round-trip through SubjectPublicKeyInfo to drop the private components.
  int len = i2d_PUBKEY(key_.get(), nullptr);
  if (len <= 0) throw Error(Errc::key_io, "i2d_PUBKEY: " + openssl_error());
  Bytes der(static_cast<std::size_t>(len));
  auto* w = der.data();
  i2d_PUBKEY(key_.get(), &w);
  const auto* r = der.data();
  EVP_PKEY* pub = d2i_PUBKEY(nullptr, &r, len);
  if (pub == nullptr) throw Error(Errc::key_io, "d2i_PUBKEY: " + openssl_error());
  return PublicKey(adopt(pub));
}

std::size_t PrivateKey::modulus_bytes() const { return static_cast<std::size_t>(EVP_PKEY_get_size(key_.get())); }

ServerKeyPair generate_server_keypair(unsigned bits) {
  if (bits != 2048 && bits != 3072 && bits != 4096) {
    throw Error(Errc::unsupported_key_size, std::to_string(bits) + " bits (expected 2048, 3072 or 4096)");
  }
  PkeyCtxPtr ctx(EVP_PKEY_CTX_new_id(EVP_PKEY_RSA, nullptr));
  EVP_PKEY* raw = nullptr;
  if (!ctx || EVP_PKEY_keygen_init(ctx.get()) != 1 ||
      EVP_PKEY_CTX_set_rsa_keygen_bits(ctx.get(), static_cast<int>(bits)) != 1 ||
      EVP_PKEY_keygen(ctx.get(), &raw) != 1) {
    throw Error(Errc::entropy_unavailable, "RSA keygen: " + openssl_error());
  }
  PrivateKey priv(adopt(raw));
  return ServerKeyPair{priv.public_key(), priv};
}

SessionKey generate_session_key(RandomSource& rng) {
  SessionKey key;
  rng.fill(key.bytes);
  return key;
}

Bytes asym_encrypt(const PublicKey& key, ByteView plaintext, RandomSource& rng) {
  const std::size_t k = key.modulus_bytes();
  const std::size_t limit = oaep_sha256_capacity(k);
  if (plaintext.size() > limit) throw PlaintextTooLong(plaintext.size(), limit);

  Bytes em = oaep_encode(plaintext, k, rng);
  PkeyCtxPtr ctx(EVP_PKEY_CTX_new(key.native(), nullptr));
  Bytes out(k);
  std::size_t out_len = out.size();
  if (!ctx || EVP_PKEY_encrypt_init(ctx.get()) != 1 ||
      EVP_PKEY_CTX_set_rsa_padding(ctx.get(), RSA_NO_PADDING) != 1 ||
      EVP_PKEY_encrypt(ctx.get(), out.data(), &out_len, em.data(), em.size()) != 1) {
    throw Error(Errc::invalid_argument, "RSA encrypt: " + openssl_error());
  }
  out.resize(out_len);
  return out;
}

Bytes asym_decrypt(const PrivateKey& key, ByteView ciphertext) {
  const std::size_t k = key.modulus_bytes();
  if (ciphertext.size() != k) {
    throw Error(Errc::decrypt_failed, "ciphertext length " + std::to_string(ciphertext.size()));
  }
  PkeyCtxPtr ctx(EVP_PKEY_CTX_new(key.native(), nullptr));
  Bytes out(k);
  std::size_t out_len = out.size();
  if (!ctx || EVP_PKEY_decrypt_init(ctx.get()) != 1 ||
      EVP_PKEY_CTX_set_rsa_padding(ctx.get(), RSA_PKCS1_OAEP_PADDING) != 1 ||
      EVP_PKEY_CTX_set_rsa_oaep_md(ctx.get(), EVP_sha256()) != 1 ||
      EVP_PKEY_CTX_set_rsa_mgf1_md(ctx.get(), EVP_sha256()) != 1 ||
      EVP_PKEY_decrypt(ctx.get(), out.data(), &out_len, ciphertext.data(), ciphertext.size()) != 1) {
    ERR_clear_error();
    throw Error(Errc::decrypt_failed, "RSA-OAEP decryption failed");
  }
  out.resize(out_len);
  return out;
}

Bytes sym_encrypt(const SessionKey& key, ByteView plaintext, RandomSource& rng) {
  Bytes out(sym_encrypted_size(plaintext.size()));
  rng.fill(std::span(out).first(kIvBytes));

  CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
  int len1 = 0;
  int len2 = 0;
  if (!ctx ||
      EVP_EncryptInit_ex(ctx.get(), EVP_aes_128_cbc(), nullptr, key.bytes.data(), out.data()) != 1 ||
      EVP_EncryptUpdate(ctx.get(), out.data() + kIvBytes, &len1, plaintext.data(),
                        static_cast<int>(plaintext.size())) != 1 ||
      EVP_EncryptFinal_ex(ctx.get(), out.data() + kIvBytes + len1, &len2) != 1) {
    throw Error(Errc::invalid_argument, "AES encrypt: " + openssl_error());
  }
  out.resize(kIvBytes + static_cast<std::size_t>(len1 + len2));
  return out;
}

Bytes sym_decrypt(const SessionKey& key, ByteView blob) {
  if (blob.size() < kIvBytes + 16 || (blob.size() - kIvBytes) % 16 != 0) {
    throw Error(Errc::decrypt_failed, "bad ciphertext length " + std::to_string(blob.size()));
  }
  const auto body = blob.subspan(kIvBytes);
  Bytes out(body.size());
  CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
  int len1 = 0;
  int len2 = 0;
  if (!ctx ||
      EVP_DecryptInit_ex(ctx.get(), EVP_aes_128_cbc(), nullptr, key.bytes.data(), blob.data()) != 1 ||
      EVP_DecryptUpdate(ctx.get(), out.data(), &len1, body.data(), static_cast<int>(body.size())) != 1 ||
      EVP_DecryptFinal_ex(ctx.get(), out.data() + len1, &len2) != 1) {
    ERR_clear_error();
    throw Error(Errc::decrypt_failed, "bad padding");
  }
  out.resize(static_cast<std::size_t>(len1 + len2));
  return out;
}

std::string normalize_email(std::string_view email) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!email.empty() && is_space(email.front())) email.remove_prefix(1);
  while (!email.empty() && is_space(email.back())) email.remove_suffix(1);
  std::string out(email);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

UserHash hash_user(std::string_view email) {
  const std::string normalized = normalize_email(email);
  if (normalized.empty()) throw Error(Errc::invalid_argument, "empty e-mail address");

  MdCtxPtr ctx(EVP_MD_CTX_new());
  std::uint8_t digest[16];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_md5(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), normalized.data(), normalized.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1 || len != sizeof digest) {
    throw Error(Errc::invalid_argument, "md5: " + openssl_error());
  }
  return UserHash::from_hex(to_hex(ByteView(digest, len)));
}

}  // namespace sensorlink
