#include "sensorlink/bytes.hpp"

#include "sensorlink/error.hpp"

namespace sensorlink {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::unsupported_key_size: return "UnsupportedKeySize";
    case Errc::entropy_unavailable: return "EntropyUnavailable";
    case Errc::plaintext_too_long: return "PlaintextTooLong";
    case Errc::decrypt_failed: return "DecryptFailed";
    case Errc::checksum_mismatch: return "ChecksumMismatch";
    case Errc::output_limit_exceeded: return "OutputLimitExceeded";
    case Errc::malformed_payload: return "MalformedPayload";
    case Errc::non_representable: return "NonRepresentable";
    case Errc::unknown_session: return "UnknownSession";
    case Errc::frame_too_large: return "FrameTooLarge";
    case Errc::truncated_stream: return "TruncatedStream";
    case Errc::buffer_full: return "BufferFull";
    case Errc::storage_error: return "StorageError";
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::key_io: return "KeyIo";
    case Errc::verification_failed: return "VerificationFailed";
    case Errc::config_error: return "ConfigError";
    case Errc::transport_error: return "TransportError";
  }
  return "Unknown";
}

namespace {

constexpr char kDigits[] = "0123456789abcdef";

int hex_value(char c) noexcept {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

std::string to_hex(ByteView data) {
  std::string out;
  out.reserve(data.size() * 2);
  for (auto b : data) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0x0f]);
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw Error(Errc::invalid_argument, "odd-length hex string");
  Bytes out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    int hi = hex_value(hex[i]);
    int lo = hex_value(hex[i + 1]);
    if (hi < 0 || lo < 0) throw Error(Errc::invalid_argument, "non-hex digit");
    out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
  }
  return out;
}

bool is_lower_hex(std::string_view text) noexcept {
  for (char c : text) {
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  }
  return true;
}

void put_u32_be(Bytes& out, std::uint32_t value) {
  out.push_back(static_cast<std::uint8_t>(value >> 24));
  out.push_back(static_cast<std::uint8_t>(value >> 16));
  out.push_back(static_cast<std::uint8_t>(value >> 8));
  out.push_back(static_cast<std::uint8_t>(value));
}

std::uint32_t get_u32_be(ByteView in) {
  return (std::uint32_t{in[0]} << 24) | (std::uint32_t{in[1]} << 16) |
         (std::uint32_t{in[2]} << 8) | std::uint32_t{in[3]};
}

}  // namespace sensorlink
