#include "sensorlink/codec.hpp"

#include <zlib.h>

#include <cmath>
#include <limits>
#include <type_traits>

#include "json_codec.hpp"
#include "sensorlink/error.hpp"

namespace sensorlink {
namespace detail {
namespace {

constexpr int kMaxJsonDepth = 16;

[[noreturn]] void malformed(const std::string& why) { throw Error(Errc::malformed_payload, why); }

const Json& field(const Json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) malformed(std::string("missing field '") + key + "'");
  return *it;
}

template <typename T>
T as_int(const Json& v, const char* key) {
  static_assert(std::is_integral_v<T>);
  if (!v.is_number_integer()) malformed(std::string("field '") + key + "' is not an integer");
  if constexpr (std::is_unsigned_v<T>) {
    if (!v.is_number_unsigned()) malformed(std::string("field '") + key + "' is negative");
    auto raw = v.get<std::uint64_t>();
    if (raw > std::numeric_limits<T>::max()) malformed(std::string("field '") + key + "' out of range");
    return static_cast<T>(raw);
  } else {
    if (v.is_number_unsigned() && v.get<std::uint64_t>() > static_cast<std::uint64_t>(std::numeric_limits<T>::max())) {
      malformed(std::string("field '") + key + "' out of range");
    }
    auto raw = v.get<std::int64_t>();
    if (raw < std::numeric_limits<T>::min() || raw > std::numeric_limits<T>::max()) {
      malformed(std::string("field '") + key + "' out of range");
    }
    return static_cast<T>(raw);
  }
}

template <typename T>
T get_int(const Json& obj, const char* key) {
  return as_int<T>(field(obj, key), key);
}

double get_double(const Json& obj, const char* key) {
  const auto& v = field(obj, key);
  if (!v.is_number()) malformed(std::string("field '") + key + "' is not a number");
  return v.get<double>();
}

const std::string& get_string(const Json& obj, const char* key) {
  const auto& v = field(obj, key);
  if (!v.is_string()) malformed(std::string("field '") + key + "' is not a string");
  return v.get_ref<const std::string&>();
}

const Json& get_object(const Json& v, const char* what) {
  if (!v.is_object()) malformed(std::string(what) + " is not an object");
  return v;
}

double finite(double v, const char* key) {
  if (!std::isfinite(v)) throw Error(Errc::non_representable, std::string("field '") + key + "' is not finite");
  return v;
}

MacAddress get_mac(const Json& obj, const char* key) {
  auto mac = MacAddress::parse(get_string(obj, key));
  if (!mac) malformed(std::string("field '") + key + "' is not a mac address");
  return *mac;
}

struct PayloadWriter {
  Json& j;

  void operator()(const GpsFix& g) const {
    j["lat"] = finite(g.lat, "lat");
    j["lon"] = finite(g.lon, "lon");
    j["alt"] = finite(g.alt, "alt");
    j["speed"] = finite(g.speed, "speed");
    j["accuracy"] = finite(g.accuracy, "accuracy");
    j["device_ts"] = g.device_ts;
  }
  void operator()(const MotionSamples& m) const {
    j["rate"] = m.rate;
    Json flat = Json::array();
    flat.get_ref<Json::array_t&>().reserve(m.samples.size() * 3);
    for (const auto& t : m.samples) {
      for (auto v : t) flat.push_back(v);
    }
    j["samples"] = std::move(flat);
  }
  void operator()(const WifiObservation& w) const {
    if (w.ap_id) j["ap_id"] = *w.ap_id;
    if (w.mac) j["mac"] = w.mac->to_string();
    if (w.essid) j["essid"] = *w.essid;
    j["rssi"] = w.rssi;
  }
  void operator()(const BtObservation& b) const {
    j["device"] = b.device.to_string();
    j["rssi"] = b.rssi;
  }
  void operator()(const PressureSample& p) const { j["hpa"] = finite(p.hpa, "hpa"); }
  void operator()(const ObdReading& o) const {
    j["pid"] = o.pid;
    j["value"] = o.value;
  }
  void operator()(const EventRecord& e) const {
    j["kind"] = e.kind;
    j["detail"] = e.detail;
  }
};

RowPayload payload_from_json(Stream stream, const Json& j) {
  switch (stream) {
    case Stream::gps:
      return GpsFix{get_double(j, "lat"),      get_double(j, "lon"),      get_double(j, "alt"),
                    get_double(j, "speed"),    get_double(j, "accuracy"), get_int<std::int64_t>(j, "device_ts")};
    case Stream::accel:
    case Stream::gyro:
    case Stream::mag: {
      MotionSamples m;
      m.rate = get_int<std::uint16_t>(j, "rate");
      const auto& flat = field(j, "samples");
      if (!flat.is_array() || flat.size() % 3 != 0) malformed("samples must be a flat array of triplets");
      m.samples.reserve(flat.size() / 3);
      for (std::size_t i = 0; i < flat.size(); i += 3) {
        m.samples.push_back(
            {as_int<std::int16_t>(flat[i], "samples"), as_int<std::int16_t>(flat[i + 1], "samples"),
             as_int<std::int16_t>(flat[i + 2], "samples")});
      }
      return m;
    }
    case Stream::wifi: {
      WifiObservation w;
      if (j.contains("ap_id")) w.ap_id = get_int<std::uint32_t>(j, "ap_id");
      if (j.contains("mac")) w.mac = get_mac(j, "mac");
      if (j.contains("essid")) w.essid = get_string(j, "essid");
      w.rssi = get_int<std::int16_t>(j, "rssi");
      return w;
    }
    case Stream::bt: return BtObservation{get_mac(j, "device"), get_int<std::int16_t>(j, "rssi")};
    case Stream::pressure: return PressureSample{get_double(j, "hpa")};
    case Stream::obd: return ObdReading{get_int<std::uint16_t>(j, "pid"), get_int<std::uint16_t>(j, "value")};
    case Stream::events: return EventRecord{get_string(j, "kind"), get_string(j, "detail")};
  }
  malformed("unknown stream");
}

// Rejects nesting before nlohmann builds a DOM; strings are skipped.
void check_depth(std::string_view text) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{' || c == '[') {
      if (++depth > kMaxJsonDepth) malformed("nesting too deep");
    } else if (c == '}' || c == ']') --depth;
  }
}

}  // namespace

Json row_to_json(Stream stream, const Row& row) {
  validate_row(stream, row);
  Json j = Json::object();
  j["ts"] = row.ts;
  if (row.ms) j["ms"] = *row.ms;
  if (row.idx != 0) j["idx"] = row.idx;
  std::visit(PayloadWriter{j}, row.payload);
  return j;
}

Row row_from_json(Stream stream, const Json& j) {
  get_object(j, "row");
  Row row;
  row.ts = get_int<std::uint32_t>(j, "ts");
  if (j.contains("ms")) row.ms = get_int<std::uint16_t>(j, "ms");
  if (j.contains("idx")) row.idx = get_int<std::uint16_t>(j, "idx");
  row.payload = payload_from_json(stream, j);
  validate_row(stream, row);
  return row;
}

Json batch_to_json(const RowBatch& batch) {
  Json j = Json::object();
  for (const auto& [stream, rows] : batch.streams) {
    if (rows.empty()) continue;
    Json arr = Json::array();
    arr.get_ref<Json::array_t&>().reserve(rows.size());
    for (const auto& row : rows) arr.push_back(row_to_json(stream, row));
    j[std::string(to_string(stream))] = std::move(arr);
  }
  return j;
}

RowBatch batch_from_json(const Json& j) {
  get_object(j, "streams");
  RowBatch batch;
  for (const auto& [name, rows] : j.items()) {
    auto stream = stream_from_string(name);
    if (!stream) continue;  // forward compatibility
    if (!rows.is_array()) malformed("stream '" + name + "' is not an array");
    auto& dst = batch.streams[*stream];
    dst.reserve(rows.size());
    for (const auto& r : rows) dst.push_back(row_from_json(*stream, r));
  }
  return batch;
}

std::string dump_canonical(const Json& j) {
  try {
    return j.dump();
  } catch (const Json::exception& e) {
    throw Error(Errc::non_representable, e.what());
  }
}

Json parse_json(std::string_view text) {
  check_depth(text);
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    malformed(e.what());
  }
}

}  // namespace detail

using detail::Json;

// ---- payload serialization ----

std::string serialize_payload(const AuthRequest& req) {
  if (req.version == 0) throw Error(Errc::invalid_argument, "version must be >= 1");
  Json j = Json::object();
  j["seq"] = req.seq;
  j["hash"] = req.hash.hex();
  j["time"] = req.time;
  j["key"] = req.key.hex();
  j["version"] = req.version;
  if (!req.identifiers.empty()) {
    Json ids = Json::object();
    for (const auto& [k, v] : req.identifiers) {
      if (k.empty()) throw Error(Errc::invalid_argument, "identifier keys must be non-empty");
      ids[k] = v;
    }
    j["identifiers"] = std::move(ids);
  }
  return detail::dump_canonical(j);
}

std::string serialize_payload(const AuthResponse& resp) {
  return detail::dump_canonical(Json{{"seq", resp.seq}, {"time", resp.time}, {"session_id", resp.session_id}});
}

std::string serialize_payload(const DataPacket& pkt) {
  Json j = Json::object();
  j["seq"] = pkt.seq;
  j["streams"] = detail::batch_to_json(pkt.batch);
  return detail::dump_canonical(j);
}

std::string serialize_payload(const FeedbackPacket& fb) {
  return detail::dump_canonical(Json{{"seq", fb.seq}, {"stored", fb.stored}});
}

template <>
AuthRequest deserialize_payload<AuthRequest>(std::string_view text) {
  using detail::get_int;
  Json j = detail::parse_json(text);
  detail::get_object(j, "auth request");
  const auto& hash = detail::get_string(j, "hash");
  const auto& key = detail::get_string(j, "key");
  if (hash.size() != 32 || !is_lower_hex(hash)) detail::malformed("bad user hash");
  if (key.size() != 2 * kSessionKeyBytes || !is_lower_hex(key)) detail::malformed("bad session key");
  AuthRequest req{
      .seq = get_int<std::uint32_t>(j, "seq"),
      .hash = UserHash::from_hex(hash),
      .time = get_int<std::uint64_t>(j, "time"),
      .key = SessionKey::from_hex(key),
      .version = get_int<std::uint16_t>(j, "version"),
      .identifiers = {},
  };
  if (req.version == 0) detail::malformed("version must be >= 1");
  if (auto it = j.find("identifiers"); it != j.end()) {
    detail::get_object(*it, "identifiers");
    for (const auto& [k, v] : it->items()) {
      if (k.empty()) detail::malformed("empty identifier key");
      if (!v.is_string()) detail::malformed("identifier values must be strings");
      req.identifiers.emplace(k, v.get<std::string>());
    }
  }
  return req;
}

template <>
AuthResponse deserialize_payload<AuthResponse>(std::string_view text) {
  using detail::get_int;
  Json j = detail::parse_json(text);
  detail::get_object(j, "auth response");
  AuthResponse resp{get_int<std::uint32_t>(j, "seq"), get_int<std::uint64_t>(j, "time"),
                    get_int<std::uint32_t>(j, "session_id")};
  if (resp.session_id == 0) detail::malformed("session_id 0 is reserved");
  return resp;
}

template <>
DataPacket deserialize_payload<DataPacket>(std::string_view text) {
  Json j = detail::parse_json(text);
  detail::get_object(j, "data payload");
  DataPacket pkt;
  pkt.seq = detail::get_int<std::uint32_t>(j, "seq");
  pkt.batch = detail::batch_from_json(detail::field(j, "streams"));
  if (pkt.batch.empty()) detail::malformed("empty batch");
  return pkt;
}

template <>
FeedbackPacket deserialize_payload<FeedbackPacket>(std::string_view text) {
  using detail::get_int;
  Json j = detail::parse_json(text);
  detail::get_object(j, "feedback");
  FeedbackPacket fb;
  fb.seq = get_int<std::uint32_t>(j, "seq");
  fb.stored = get_int<std::uint32_t>(j, "stored");
  return fb;
}

std::size_t serialized_row_size(Stream stream, const Row& row) {
  return detail::dump_canonical(detail::row_to_json(stream, row)).size();
}

// ---- zlib ----

Bytes compress(ByteView data) {
  uLongf bound = compressBound(static_cast<uLong>(data.size()));
  Bytes out(bound);
  if (compress2(out.data(), &bound, data.data(), static_cast<uLong>(data.size()), kCompressionLevel) != Z_OK) {
    throw Error(Errc::invalid_argument, "zlib compress2 failed");
  }
  out.resize(bound);
  return out;
}

Bytes decompress(ByteView data, std::size_t max_out) {
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) throw Error(Errc::invalid_argument, "inflateInit failed");
  struct Guard {
    z_stream* zs;
    ~Guard() { inflateEnd(zs); }
  } guard{&zs};

  zs.next_in = const_cast<Bytef*>(data.data());
  zs.avail_in = static_cast<uInt>(data.size());

  Bytes out;
  std::uint8_t chunk[16384];
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk;
    zs.avail_out = sizeof chunk;
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc == Z_STREAM_ERROR || rc == Z_DATA_ERROR || rc == Z_NEED_DICT || rc == Z_MEM_ERROR) {
      throw Error(Errc::checksum_mismatch, zs.msg ? zs.msg : "corrupt zlib stream");
    }
    std::size_t produced = sizeof chunk - zs.avail_out;
    if (out.size() + produced > max_out) {
      throw Error(Errc::output_limit_exceeded, "decompressed size exceeds " + std::to_string(max_out));
    }
    out.insert(out.end(), chunk, chunk + produced);
    if (rc == Z_BUF_ERROR || (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0)) {
      throw Error(Errc::checksum_mismatch, "truncated zlib stream");
    }
  }
  if (zs.avail_in != 0) throw Error(Errc::checksum_mismatch, "trailing bytes after zlib stream");
  return out;
}

// ---- packets ----

namespace {

std::string_view as_text(const Bytes& b) { return {reinterpret_cast<const char*>(b.data()), b.size()}; }

Bytes open_sealed(ByteView blob, const SessionKey& key, const CodecLimits& limits) {
  if (blob.size() > limits.max_packet_bytes) throw Error(Errc::malformed_payload, "packet too large");
  if (blob.size() <= kPrefixBytes) throw Error(Errc::malformed_payload, "packet too short");
  return decompress(sym_decrypt(key, blob.subspan(kPrefixBytes)), limits.max_decompressed);
}

}  // namespace

Bytes seal_payload(std::uint32_t prefix, std::string_view json, const SessionKey& key, RandomSource& rng) {
  Bytes out;
  put_u32_be(out, prefix);
  Bytes sealed = sym_encrypt(key, compress(as_bytes(json)), rng);
  out.insert(out.end(), sealed.begin(), sealed.end());
  return out;
}

Bytes encode_auth_request(const AuthRequest& req, const PublicKey& server_pub, RandomSource& rng) {
  return asym_encrypt(server_pub, compress(as_bytes(serialize_payload(req))), rng);
}

AuthRequest decode_auth_request(ByteView blob, const PrivateKey& server_priv, const CodecLimits& limits) {
  Bytes json = decompress(asym_decrypt(server_priv, blob), limits.max_decompressed);
  return deserialize_payload<AuthRequest>(as_text(json));
}

Bytes encode_auth_response(const AuthResponse& resp, const SessionKey& key, RandomSource& rng) {
  return seal_payload(resp.seq, serialize_payload(resp), key, rng);
}

AuthResponse decode_auth_response(ByteView blob, const SessionKey& key, const CodecLimits& limits) {
  auto resp = deserialize_payload<AuthResponse>(as_text(open_sealed(blob, key, limits)));
  if (resp.seq != get_u32_be(blob)) throw Error(Errc::malformed_payload, "seq prefix does not match payload");
  return resp;
}

std::optional<std::uint32_t> peek_prefix(ByteView blob) noexcept {
  if (blob.size() < kPrefixBytes) return std::nullopt;
  return get_u32_be(blob);
}

Bytes encode_data_packet(const DataPacket& pkt, const SessionKey& key, RandomSource& rng) {
  if (pkt.batch.empty()) throw Error(Errc::invalid_argument, "data packet needs at least one row");
  return seal_payload(pkt.session_id, serialize_payload(pkt), key, rng);
}

DataPacket decode_data_packet(ByteView blob, const KeyLookup& lookup, const CodecLimits& limits) {
  auto id = peek_prefix(blob);
  if (!id || blob.size() <= kPrefixBytes) throw Error(Errc::malformed_payload, "packet too short");
  auto key = lookup(*id);
  if (!key) throw Error(Errc::unknown_session, "session " + std::to_string(*id));
  return decode_data_packet(blob, *key, limits);
}

DataPacket decode_data_packet(ByteView blob, const SessionKey& key, const CodecLimits& limits) {
  auto pkt = deserialize_payload<DataPacket>(as_text(open_sealed(blob, key, limits)));
  pkt.session_id = get_u32_be(blob);
  return pkt;
}

Bytes encode_feedback(const FeedbackPacket& fb, const SessionKey& key, RandomSource& rng) {
  return seal_payload(fb.session_id, serialize_payload(fb), key, rng);
}

FeedbackPacket decode_feedback(ByteView blob, const SessionKey& key, const CodecLimits& limits) {
  auto fb = deserialize_payload<FeedbackPacket>(as_text(open_sealed(blob, key, limits)));
  fb.session_id = get_u32_be(blob);
  return fb;
}

// ---- framing ----

Bytes frame(ByteView blob) {
  Bytes out;
  out.reserve(blob.size() + kPrefixBytes);
  put_u32_be(out, static_cast<std::uint32_t>(blob.size()));
  out.insert(out.end(), blob.begin(), blob.end());
  return out;
}

void FrameDecoder::feed(ByteView data) {
  if (offset_ > 0 && offset_ == buffer_.size()) {
    buffer_.clear();
    offset_ = 0;
  }
  buffer_.insert(buffer_.end(), data.begin(), data.end());
}

std::optional<Bytes> FrameDecoder::next() {
  if (buffered() < kPrefixBytes) return std::nullopt;
  const std::uint32_t len = get_u32_be(ByteView(buffer_).subspan(offset_));
  if (len > max_frame_) {
    throw Error(Errc::frame_too_large, "declared frame of " + std::to_string(len) + " bytes");
  }
  if (buffered() < kPrefixBytes + len) return std::nullopt;
  auto begin = buffer_.begin() + static_cast<std::ptrdiff_t>(offset_ + kPrefixBytes);
  Bytes blob(begin, begin + len);
  offset_ += kPrefixBytes + len;
  if (offset_ > 65536 && offset_ * 2 > buffer_.size()) {
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(offset_));
    offset_ = 0;
  }
  return blob;
}

void FrameDecoder::finish() const {
  if (buffered() != 0) throw Error(Errc::truncated_stream, std::to_string(buffered()) + " bytes of partial frame");
}

std::vector<Bytes> deframe(ByteView stream, std::size_t max_frame) {
  FrameDecoder decoder(max_frame);
  decoder.feed(stream);
  std::vector<Bytes> out;
  while (auto blob = decoder.next()) out.push_back(std::move(*blob));
  decoder.finish();
  return out;
}

}  // namespace sensorlink
