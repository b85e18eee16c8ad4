#include "sensorlink/rows.hpp"

#include <cstdio>

#include "sensorlink/error.hpp"

namespace sensorlink {

std::string_view to_string(Stream s) noexcept {
  switch (s) {
    case Stream::accel: return "accel";
    case Stream::bt: return "bt";
    case Stream::events: return "events";
    case Stream::gps: return "gps";
    case Stream::gyro: return "gyro";
    case Stream::mag: return "mag";
    case Stream::obd: return "obd";
    case Stream::pressure: return "pressure";
    case Stream::wifi: return "wifi";
  }
  return "?";
}

std::optional<Stream> stream_from_string(std::string_view name) noexcept {
  for (auto s : kAllStreams) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

std::string MacAddress::to_string() const {
  char buf[18];
  std::snprintf(buf, sizeof buf, "%02x:%02x:%02x:%02x:%02x:%02x", octets[0], octets[1], octets[2], octets[3],
                octets[4], octets[5]);
  return buf;
}

std::optional<MacAddress> MacAddress::parse(std::string_view text) noexcept {
  if (text.size() != 17) return std::nullopt;
  MacAddress mac;
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
  };
  for (std::size_t i = 0; i < 6; ++i) {
    int hi = nibble(text[i * 3]);
    int lo = nibble(text[i * 3 + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    if (i < 5 && text[i * 3 + 2] != ':') return std::nullopt;
    mac.octets[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return mac;
}

std::uint64_t MacAddress::as_integer() const noexcept {
  std::uint64_t v = 0;
  for (auto o : octets) v = (v << 8) | o;
  return v;
}

MacAddress MacAddress::from_integer(std::uint64_t value) noexcept {
  MacAddress mac;
  for (int i = 5; i >= 0; --i) {
    mac.octets[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(value & 0xff);
    value >>= 8;
  }
  return mac;
}

std::size_t RowBatch::row_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [_, rows] : streams) n += rows.size();
  return n;
}

void RowBatch::append(const RowBatch& other) {
  for (const auto& [s, rows] : other.streams) {
    auto& dst = streams[s];
    dst.insert(dst.end(), rows.begin(), rows.end());
  }
}

NaturalKey natural_key(std::uint32_t session_id, Stream stream, const Row& row) noexcept {
  return NaturalKey{session_id, stream, row.ts, row.ms ? std::int32_t{*row.ms} : -1, row.idx};
}

namespace {

[[noreturn]] void reject(Stream stream, const std::string& why) {
  throw Error(Errc::malformed_payload, std::string(to_string(stream)) + " row: " + why);
}

template <typename T>
const T& expect(Stream stream, const Row& row, const char* type_name) {
  const T* p = std::get_if<T>(&row.payload);
  if (p == nullptr) reject(stream, std::string("payload is not ") + type_name);
  return *p;
}

}  // namespace

void validate_row(Stream stream, const Row& row) {
  if (row.ms && *row.ms > 999) reject(stream, "ms out of range");
  if (requires_ms(stream) && !row.ms) reject(stream, "ms is mandatory");

  switch (stream) {
    case Stream::gps: expect<GpsFix>(stream, row, "gps"); break;
    case Stream::accel:
    case Stream::gyro:
    case Stream::mag: {
      const auto& m = expect<MotionSamples>(stream, row, "motion samples");
      if (m.samples.empty()) reject(stream, "empty sample array");
      break;
    }
    case Stream::wifi: {
      const auto& w = expect<WifiObservation>(stream, row, "wifi observation");
      const bool raw = w.mac.has_value() && w.essid.has_value();
      if (raw == w.ap_id.has_value()) reject(stream, "needs exactly one of ap_id or (mac, essid)");
      if (w.mac.has_value() != w.essid.has_value()) reject(stream, "mac and essid must come together");
      break;
    }
    case Stream::bt: expect<BtObservation>(stream, row, "bt observation"); break;
    case Stream::pressure: expect<PressureSample>(stream, row, "pressure"); break;
    case Stream::obd: expect<ObdReading>(stream, row, "obd reading"); break;
    case Stream::events: expect<EventRecord>(stream, row, "event"); break;
  }
}

void validate_batch(const RowBatch& batch) {
  for (const auto& [stream, rows] : batch.streams) {
    for (const auto& row : rows) validate_row(stream, row);
  }
}

std::size_t packed_row_bytes(Stream stream, const Row& row) noexcept {
  switch (stream) {
    case Stream::gps: return kGpsRowBytes;
    case Stream::accel:
    case Stream::gyro:
    case Stream::mag: {
      const auto* m = std::get_if<MotionSamples>(&row.payload);
      return kRowHeaderBytes + (m ? m->samples.size() * kMotionSampleBytes : 0);
    }
    case Stream::wifi: return kWifiRowBytes;
    case Stream::bt: return kBtRowBytes;
    case Stream::pressure: return kPressureRowBytes;
    case Stream::obd: return kObdRowBytes;
    case Stream::events: {
      const auto* e = std::get_if<EventRecord>(&row.payload);
      return kEventRowBytes + (e ? e->kind.size() + e->detail.size() : 0);
    }
  }
  return kRowHeaderBytes;
}

}  // namespace sensorlink
