#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace sensorlink {

enum class Stream : std::uint8_t { accel, bt, events, gps, gyro, mag, obd, pressure, wifi };

inline constexpr std::array kAllStreams = {Stream::accel, Stream::bt,  Stream::events,
                                           Stream::gps,   Stream::gyro, Stream::mag,
                                           Stream::obd,   Stream::pressure, Stream::wifi};

std::string_view to_string(Stream s) noexcept;
std::optional<Stream> stream_from_string(std::string_view name) noexcept;

/// ms is mandatory for streams whose samples arrive asynchronously.
constexpr bool requires_ms(Stream s) noexcept { return s == Stream::gps || s == Stream::obd; }
constexpr bool is_motion(Stream s) noexcept {
  return s == Stream::accel || s == Stream::gyro || s == Stream::mag;
}

struct MacAddress {
  std::array<std::uint8_t, 6> octets{};

  /// "aa:bb:cc:dd:ee:ff"
  std::string to_string() const;
  static std::optional<MacAddress> parse(std::string_view text) noexcept;
  std::uint64_t as_integer() const noexcept;
  static MacAddress from_integer(std::uint64_t value) noexcept;

  friend auto operator<=>(const MacAddress&, const MacAddress&) = default;
};

struct GpsFix {
  double lat = 0;
  double lon = 0;
  double alt = 0;
  double speed = 0;
  double accuracy = 0;
  std::int64_t device_ts = 0;  // device clock, unix milliseconds

  friend bool operator==(const GpsFix&, const GpsFix&) = default;
};

using Triplet = std::array<std::int16_t, 3>;

/// One second of accelerometer/gyroscope/magnetometer readings packed as
/// fixed-point 16-bit triplets.
struct MotionSamples {
  std::uint16_t rate = 0;
  std::vector<Triplet> samples;

  friend bool operator==(const MotionSamples&, const MotionSamples&) = default;
};

/// A scanned access point. On the wire the client sends the raw
/// (mac, essid) pair; stored rows reference the interned ap_id instead.
struct WifiObservation {
  std::optional<std::uint32_t> ap_id;
  std::optional<MacAddress> mac;
  std::optional<std::string> essid;
  std::int16_t rssi = 0;

  friend bool operator==(const WifiObservation&, const WifiObservation&) = default;
};

struct BtObservation {
  MacAddress device;
  std::int16_t rssi = 0;

  friend bool operator==(const BtObservation&, const BtObservation&) = default;
};

struct PressureSample {
  double hpa = 0;

  friend bool operator==(const PressureSample&, const PressureSample&) = default;
};

/// Raw two-byte OBD-II response (A*256 + B) for a mode-01 PID.
struct ObdReading {
  std::uint16_t pid = 0;
  std::uint16_t value = 0;

  friend bool operator==(const ObdReading&, const ObdReading&) = default;
};

struct EventRecord {
  std::string kind;
  std::string detail;

  friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

using RowPayload =
    std::variant<GpsFix, MotionSamples, WifiObservation, BtObservation, PressureSample, ObdReading, EventRecord>;

struct Row {
  std::uint32_t ts = 0;               // unix seconds
  std::optional<std::uint16_t> ms;    // 0..999
  std::uint16_t idx = 0;              // disambiguates rows sharing (ts, ms)
  RowPayload payload;

  friend bool operator==(const Row&, const Row&) = default;
};

/// Rows grouped by stream. Row order inside each stream is arrival order.
struct RowBatch {
  std::map<Stream, std::vector<Row>> streams;

  std::size_t row_count() const noexcept;
  bool empty() const noexcept { return row_count() == 0; }
  void append(Stream s, Row row) { streams[s].push_back(std::move(row)); }
  void append(const RowBatch& other);

  friend bool operator==(const RowBatch&, const RowBatch&) = default;
};

/// Identity of a stored row; writes are idempotent on this key.
struct NaturalKey {
  std::uint32_t session_id = 0;
  Stream stream = Stream::gps;
  std::uint32_t ts = 0;
  std::int32_t ms = -1;  // -1 when absent
  std::uint16_t idx = 0;

  friend auto operator<=>(const NaturalKey&, const NaturalKey&) = default;
};

NaturalKey natural_key(std::uint32_t session_id, Stream stream, const Row& row) noexcept;

/// Throws Error(malformed_payload) when the payload type does not match
/// the stream or a schema rule is violated (ms range, mandatory ms,
/// empty motion array, wifi row without an AP reference).
void validate_row(Stream stream, const Row& row);
void validate_batch(const RowBatch& batch);

// Packed column sizes used for storage accounting: every row carries a
// 4-byte session_id and a 4-byte ts.
inline constexpr std::size_t kRowHeaderBytes = 8;
inline constexpr std::size_t kGpsRowBytes = kRowHeaderBytes + 2 + 1 + 8 + 8 + 4 + 4 + 4 + 8;  // 47
inline constexpr std::size_t kMotionSampleBytes = 6;
inline constexpr std::size_t kWifiRowBytes = kRowHeaderBytes + 2 + 1 + 4 + 2;  // 17
inline constexpr std::size_t kBtRowBytes = kRowHeaderBytes + 1 + 6 + 1;        // 16
inline constexpr std::size_t kPressureRowBytes = kRowHeaderBytes + 4;          // 12
inline constexpr std::size_t kObdRowBytes = kRowHeaderBytes + 2 + 2 + 2;       // 14
inline constexpr std::size_t kEventRowBytes = kRowHeaderBytes + 2 + 1;          // + text lengths

std::size_t packed_row_bytes(Stream stream, const Row& row) noexcept;

}  // namespace sensorlink
