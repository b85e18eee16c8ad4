#include "support.hpp"

#include <set>

namespace sensorlink::testing {

std::filesystem::path golden_dir() { return SENSORLINK_GOLDEN_DIR; }

const ServerKeyPair& test_keys() {
  static const ServerKeyPair keys = [] {
    auto priv = PrivateKey::load(golden_dir() / "test_server_key.pem");
    return ServerKeyPair{priv.public_key(), priv};
  }();
  return keys;
}

Bytes random_bytes(Gen& g, std::size_t n) {
  Bytes out(n);
  for (auto& b : out) b = static_cast<std::uint8_t>(g());
  return out;
}

std::string random_text(Gen& g, std::size_t max_len) {
  static const char* const pieces[] = {"a", "b", "z", "0", "9", " ", "-", "_", "\"", "\\", "/", "\xc3\xa9",
                                       "\xe2\x82\xac", "\t", "\n", "{", "}"};
  const auto len = std::uniform_int_distribution<std::size_t>(0, max_len)(g);
  std::string out;
  while (out.size() < len) out += pieces[g() % std::size(pieces)];
  return out;
}

MacAddress random_mac(Gen& g) { return MacAddress::from_integer(g() & 0xffff'ffff'ffffULL); }

SessionKey random_key(Gen& g) {
  SessionKey k;
  for (auto& b : k.bytes) b = static_cast<std::uint8_t>(g());
  return k;
}

UserHash random_hash(Gen& g) { return UserHash::from_hex(to_hex(random_bytes(g, 16))); }

namespace {

double random_double(Gen& g, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(g); }

std::int16_t random_i16(Gen& g) { return static_cast<std::int16_t>(g()); }

}  // namespace

Row random_row(Gen& g, Stream stream, bool allow_ap_id) {
  Row row;
  row.ts = 1'400'000'000u + static_cast<std::uint32_t>(g() % 100'000);
  if (requires_ms(stream) || g() % 2) row.ms = static_cast<std::uint16_t>(g() % 1000);
  row.idx = static_cast<std::uint16_t>(g() % 8);
  switch (stream) {
    case Stream::gps:
      row.payload = GpsFix{random_double(g, -90, 90), random_double(g, -180, 180), random_double(g, -50, 3000),
                           random_double(g, 0, 60), random_double(g, 1, 50),
                           static_cast<std::int64_t>(g() % 2'000'000'000'000ULL)};
      break;
    case Stream::accel:
    case Stream::gyro:
    case Stream::mag: {
      MotionSamples m;
      m.rate = static_cast<std::uint16_t>(1 + g() % 200);
      m.samples.resize(1 + g() % m.rate);
      for (auto& t : m.samples) t = {random_i16(g), random_i16(g), random_i16(g)};
      row.payload = std::move(m);
      break;
    }
    case Stream::wifi: {
      WifiObservation w;
      if (allow_ap_id && g() % 2) {
        w.ap_id = static_cast<std::uint32_t>(1 + g() % 100000);
      } else {
        w.mac = random_mac(g);
        w.essid = random_text(g, 32);
      }
      w.rssi = static_cast<std::int16_t>(-100 + static_cast<int>(g() % 70));
      row.payload = std::move(w);
      break;
    }
    case Stream::bt: row.payload = BtObservation{random_mac(g), static_cast<std::int16_t>(-100 + static_cast<int>(g() % 60))}; break;
    case Stream::pressure: row.payload = PressureSample{random_double(g, 900, 1100)}; break;
    case Stream::obd:
      row.payload = ObdReading{static_cast<std::uint16_t>(g() % 256), static_cast<std::uint16_t>(g())};
      break;
    case Stream::events: row.payload = EventRecord{random_text(g, 12), random_text(g, 40)}; break;
  }
  return row;
}

RowBatch random_batch(Gen& g, std::size_t max_rows, bool allow_ap_id) {
  RowBatch batch;
  std::set<NaturalKey> seen;
  const auto n = std::uniform_int_distribution<std::size_t>(1, max_rows)(g);
  while (batch.row_count() < n) {
    const Stream s = kAllStreams[g() % kAllStreams.size()];
    Row r = random_row(g, s, allow_ap_id);
    if (seen.insert(natural_key(0, s, r)).second) batch.append(s, std::move(r));
  }
  return batch;
}

AuthRequest random_auth_request(Gen& g) {
  const auto seq = static_cast<std::uint32_t>(g());
  const auto hash = random_hash(g);
  const auto time = g() % 4'000'000'000ULL;
  const auto key = random_key(g);
  AuthRequest r{seq, hash, time, key, static_cast<std::uint16_t>(1 + g() % 65535), {}};
  const auto n = g() % 4;
  for (std::size_t i = 0; i < n; ++i) r.identifiers["id" + std::to_string(i) + random_text(g, 6)] = random_text(g, 16);
  return r;
}

AuthResponse random_auth_response(Gen& g) {
  return AuthResponse{static_cast<std::uint32_t>(g()), g() % 4'000'000'000ULL,
                      static_cast<std::uint32_t>(1 + g() % 0xfffffffeULL)};
}

FeedbackPacket random_feedback(Gen& g) {
  return FeedbackPacket{0, static_cast<std::uint32_t>(g()), static_cast<std::uint32_t>(g() % 100000)};
}

TempDir::TempDir() {
  auto base = std::filesystem::temp_directory_path();
  std::random_device rd;
  for (;;) {
    path_ = base / ("sensorlink-test-" + std::to_string(rd()));
    if (std::filesystem::create_directory(path_)) break;
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

ExperimentConfig small_experiment(std::uint32_t duration_s) {
  ExperimentConfig c;
  c.workload.duration_s = duration_s;
  c.keys = test_keys();
  return c;
}

}  // namespace sensorlink::testing
