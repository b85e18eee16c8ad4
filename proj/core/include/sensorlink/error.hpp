#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sensorlink {

enum class Errc {
  unsupported_key_size,
  entropy_unavailable,
  plaintext_too_long,
  decrypt_failed,
  checksum_mismatch,
  output_limit_exceeded,
  malformed_payload,
  non_representable,
  unknown_session,
  frame_too_large,
  truncated_stream,
  buffer_full,
  storage_error,
  invalid_argument,
  key_io,
  verification_failed,
  config_error,
  transport_error,
};

std::string_view to_string(Errc code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers on the ingest path can count and discard by kind.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

class PlaintextTooLong : public Error {
 public:
  PlaintextTooLong(std::size_t actual, std::size_t limit)
      : Error(Errc::plaintext_too_long,
              std::to_string(actual) + " bytes exceeds limit of " + std::to_string(limit)),
        actual_(actual),
        limit_(limit) {}

  std::size_t actual() const noexcept { return actual_; }
  std::size_t limit() const noexcept { return limit_; }

 private:
  std::size_t actual_;
  std::size_t limit_;
};

}  // namespace sensorlink
