#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sensorlink/bytes.hpp"
#include "sensorlink/crypto.hpp"
#include "sensorlink/rows.hpp"

namespace sensorlink {

inline constexpr std::size_t kDefaultMaxPacketBytes = 60 * 1024;
inline constexpr std::size_t kDefaultMaxDecompressed = 4 * 1024 * 1024;
inline constexpr int kCompressionLevel = 6;
inline constexpr std::size_t kPrefixBytes = 4;

using Identifiers = std::map<std::string, std::string>;

struct AuthRequest {
  std::uint32_t seq = 0;
  UserHash hash;
  std::uint64_t time = 0;
  SessionKey key;
  std::uint16_t version = 1;
  Identifiers identifiers;  // omitted from the payload when empty

  friend bool operator==(const AuthRequest&, const AuthRequest&) = default;
};

struct AuthResponse {
  std::uint32_t seq = 0;
  std::uint64_t time = 0;
  std::uint32_t session_id = 0;

  friend bool operator==(const AuthResponse&, const AuthResponse&) = default;
};

struct DataPacket {
  std::uint32_t session_id = 0;  // plaintext prefix, not part of the JSON payload
  std::uint32_t seq = 0;
  RowBatch batch;

  friend bool operator==(const DataPacket&, const DataPacket&) = default;
};

struct FeedbackPacket {
  std::uint32_t session_id = 0;  // plaintext prefix
  std::uint32_t seq = 0;
  std::uint32_t stored = 0;

  friend bool operator==(const FeedbackPacket&, const FeedbackPacket&) = default;
};

struct CodecLimits {
  std::size_t max_packet_bytes = kDefaultMaxPacketBytes;
  std::size_t max_decompressed = kDefaultMaxDecompressed;
};

// Canonical JSON: sorted keys, no whitespace, integers as decimal literals,
// binary fields as lowercase hex. Throws Error(non_representable) for NaN or
// infinite values and invalid UTF-8.
std::string serialize_payload(const AuthRequest& req);
std::string serialize_payload(const AuthResponse& resp);
std::string serialize_payload(const DataPacket& pkt);
std::string serialize_payload(const FeedbackPacket& fb);

// Inverse of serialize_payload. Unknown keys are ignored. Throws
// Error(malformed_payload) on anything else. DataPacket/FeedbackPacket
// come back with session_id = 0; the caller owns the prefix.
template <typename T>
T deserialize_payload(std::string_view json);
template <> AuthRequest deserialize_payload<AuthRequest>(std::string_view json);
template <> AuthResponse deserialize_payload<AuthResponse>(std::string_view json);
template <> DataPacket deserialize_payload<DataPacket>(std::string_view json);
template <> FeedbackPacket deserialize_payload<FeedbackPacket>(std::string_view json);

/// Serialized size of one row as it appears inside a stream array.
std::size_t serialized_row_size(Stream stream, const Row& row);

/// zlib container (RFC 1950), level 6.
Bytes compress(ByteView data);
/// Throws Error(checksum_mismatch) for any corrupt or truncated stream and
/// Error(output_limit_exceeded) once the output would pass `max_out`.
Bytes decompress(ByteView data, std::size_t max_out = kDefaultMaxDecompressed);

/// prefix (4 bytes BE, plaintext) || sym_encrypt(key, compress(json)).
/// Shared by every symmetric packet kind.
Bytes seal_payload(std::uint32_t prefix, std::string_view json, const SessionKey& key,
                   RandomSource& rng = system_random());

// Packet encoders. `rng` supplies OAEP seeds and IVs.
Bytes encode_auth_request(const AuthRequest& req, const PublicKey& server_pub,
                          RandomSource& rng = system_random());
AuthRequest decode_auth_request(ByteView blob, const PrivateKey& server_priv, const CodecLimits& limits = {});

/// seq (4 bytes BE, plaintext) || sym_encrypt(compress(json)).
Bytes encode_auth_response(const AuthResponse& resp, const SessionKey& key, RandomSource& rng = system_random());
AuthResponse decode_auth_response(ByteView blob, const SessionKey& key, const CodecLimits& limits = {});

/// Reads the plaintext prefix (seq of an auth response, session_id of
/// data and feedback packets).
std::optional<std::uint32_t> peek_prefix(ByteView blob) noexcept;

using KeyLookup = std::function<std::optional<SessionKey>(std::uint32_t session_id)>;

/// session_id (4 bytes BE, plaintext) || sym_encrypt(compress(json)).
Bytes encode_data_packet(const DataPacket& pkt, const SessionKey& key, RandomSource& rng = system_random());
/// Throws Error(unknown_session) when `lookup` misses.
DataPacket decode_data_packet(ByteView blob, const KeyLookup& lookup, const CodecLimits& limits = {});
DataPacket decode_data_packet(ByteView blob, const SessionKey& key, const CodecLimits& limits = {});

Bytes encode_feedback(const FeedbackPacket& fb, const SessionKey& key, RandomSource& rng = system_random());
FeedbackPacket decode_feedback(ByteView blob, const SessionKey& key, const CodecLimits& limits = {});

// TCP stream framing: 4-byte big-endian length followed by the blob.
Bytes frame(ByteView blob);

/// Incremental decoder for a framed byte stream.
class FrameDecoder {
 public:
  explicit FrameDecoder(std::size_t max_frame = kDefaultMaxPacketBytes) : max_frame_(max_frame) {}

  void feed(ByteView data);
  /// Next complete blob, if any. Throws Error(frame_too_large) as soon as
  /// a header declares an oversized frame, before buffering its body.
  std::optional<Bytes> next();
  /// Throws Error(truncated_stream) if a partial frame is pending.
  void finish() const;
  std::size_t buffered() const noexcept { return buffer_.size() - offset_; }

 private:
  std::size_t max_frame_;
  Bytes buffer_;
  std::size_t offset_ = 0;
};

/// Splits a complete stream. Throws frame_too_large / truncated_stream.
std::vector<Bytes> deframe(ByteView stream, std::size_t max_frame = kDefaultMaxPacketBytes);

}  // namespace sensorlink
