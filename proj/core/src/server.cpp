#include "sensorlink/server.hpp"

#include <sstream>

namespace sensorlink {

namespace {

std::string_view errc_key(Errc code) noexcept {
  switch (code) {
    case Errc::unsupported_key_size: return "unsupported_key_size";
    case Errc::entropy_unavailable: return "entropy_unavailable";
    case Errc::plaintext_too_long: return "plaintext_too_long";
    case Errc::decrypt_failed: return "decrypt_failed";
    case Errc::checksum_mismatch: return "checksum_mismatch";
    case Errc::output_limit_exceeded: return "output_limit_exceeded";
    case Errc::malformed_payload: return "malformed_payload";
    case Errc::non_representable: return "non_representable";
    case Errc::unknown_session: return "unknown_session";
    case Errc::frame_too_large: return "frame_too_large";
    case Errc::truncated_stream: return "truncated_stream";
    case Errc::buffer_full: return "buffer_full";
    case Errc::storage_error: return "storage_error";
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::key_io: return "key_io";
    case Errc::verification_failed: return "verification_failed";
    case Errc::config_error: return "config_error";
    case Errc::transport_error: return "transport_error";
  }
  return "unknown";
}

}  // namespace

SessionKeyCache::SessionKeyCache(std::shared_ptr<Storage> storage, std::size_t capacity)
    : storage_(std::move(storage)), capacity_(capacity) {}

std::optional<SessionKey> SessionKeyCache::lookup(std::uint32_t session_id) {
  {
    std::lock_guard lock(mu_);
    if (auto it = index_.find(session_id); it != index_.end()) {
      order_.splice(order_.begin(), order_, it->second);
      ++hits_;
      return it->second->second;
    }
  }
  ++misses_;
  auto info = storage_->lookup_session_key(session_id);
  if (!info) return std::nullopt;
  std::lock_guard lock(mu_);
  // An auth may have raced us with a newer key; keep that one.
  if (auto it = index_.find(session_id); it != index_.end()) return it->second->second;
  put_locked(session_id, info->key);
  return info->key;
}

void SessionKeyCache::put(std::uint32_t session_id, const SessionKey& key) {
  std::lock_guard lock(mu_);
  put_locked(session_id, key);
}

void SessionKeyCache::put_locked(std::uint32_t session_id, const SessionKey& key) {
  if (capacity_ == 0) return;
  if (auto it = index_.find(session_id); it != index_.end()) {
    it->second->second = key;
    order_.splice(order_.begin(), order_, it->second);
    return;
  }
  order_.emplace_front(session_id, key);
  index_[session_id] = order_.begin();
  if (order_.size() > capacity_) {
    index_.erase(order_.back().first);
    order_.pop_back();
  }
}

void SessionKeyCache::clear() {
  std::lock_guard lock(mu_);
  order_.clear();
  index_.clear();
}

std::size_t SessionKeyCache::size() const {
  std::lock_guard lock(mu_);
  return order_.size();
}

std::string format_metrics(const MetricsSnapshot& metrics) {
  std::ostringstream out;
  for (const auto& [k, v] : metrics) out << k << ' ' << v << '\n';
  return out.str();
}

IngestEngine::IngestEngine(PrivateKey server_key, std::shared_ptr<Storage> storage, IngestConfig config,
                           RandomSource& rng)
    : key_(std::move(server_key)),
      storage_(std::move(storage)),
      config_(config),
      rng_(&rng),
      cache_(storage_, config.cache_capacity) {}

std::optional<Bytes> IngestEngine::handle_auth_packet(ByteView blob) {
  auto result = process_auth(blob);
  if (!result) return std::nullopt;
  return std::move(result->wire);
}

std::optional<IngestEngine::AuthResult> IngestEngine::process_auth(ByteView blob) {
  ++auth_packets_;
  try {
    const CodecLimits limits{config_.max_packet_bytes, kDefaultMaxDecompressed};
    AuthRequest req = decode_auth_request(blob, key_, limits);
    std::uint32_t session_id = 0;
    {
      std::lock_guard lock(auth_mu_);
      session_id = storage_->upsert_session(req.hash, req.time, req.key, req.version, req.identifiers);
      cache_.put(session_id, req.key);
    }
    Bytes wire = encode_auth_response(AuthResponse{req.seq, req.time, session_id}, req.key, *rng_);
    ++auth_accepted_;
    return AuthResult{std::move(wire), session_id, req.seq};
  } catch (const Error& e) {
    ++auth_discards_[static_cast<std::size_t>(e.code())];
  } catch (const std::exception&) {
    ++auth_discards_[static_cast<std::size_t>(Errc::malformed_payload)];
  }
  return std::nullopt;
}

std::optional<DecodedData> IngestEngine::decode_data(ByteView blob) {
  ++data_packets_;
  try {
    const CodecLimits limits{config_.max_packet_bytes, kDefaultMaxDecompressed};
    if (blob.size() <= kPrefixBytes) throw Error(Errc::malformed_payload, "packet too short");
    const std::uint32_t session_id = get_u32_be(blob);
    auto key = cache_.lookup(session_id);
    if (!key) throw Error(Errc::unknown_session, "session " + std::to_string(session_id));
    DataPacket pkt = decode_data_packet(blob, *key, limits);
    rows_received_ += pkt.batch.row_count();
    return DecodedData{session_id, pkt.seq, *key, std::move(pkt.batch)};
  } catch (const Error& e) {
    ++data_discards_[static_cast<std::size_t>(e.code())];
  } catch (const std::exception&) {
    ++data_discards_[static_cast<std::size_t>(Errc::malformed_payload)];
  }
  return std::nullopt;
}

std::optional<Bytes> IngestEngine::store_and_acknowledge(const DecodedData& data) {
  try {
    // write_rows returns only once the rows are flushed.
    const std::size_t stored = storage_->write_rows(data.session_id, data.batch);
    rows_stored_ += stored;
    Bytes wire = encode_feedback(FeedbackPacket{data.session_id, data.seq, static_cast<std::uint32_t>(stored)},
                                 data.key, *rng_);
    ++data_accepted_;
    ++feedback_sent_;
    return wire;
  } catch (const Error& e) {
    ++data_discards_[static_cast<std::size_t>(e.code())];
  } catch (const std::exception&) {
    ++data_discards_[static_cast<std::size_t>(Errc::storage_error)];
  }
  return std::nullopt;
}

std::optional<Bytes> IngestEngine::handle_data_packet(ByteView blob) {
  auto decoded = decode_data(blob);
  if (!decoded) return std::nullopt;
  return store_and_acknowledge(*decoded);
}

MetricsSnapshot IngestEngine::metrics() const {
  MetricsSnapshot m;
  m["auth_packets"] = auth_packets_;
  m["auth_accepted"] = auth_accepted_;
  m["data_packets"] = data_packets_;
  m["data_accepted"] = data_accepted_;
  m["feedback_sent"] = feedback_sent_;
  m["rows_received"] = rows_received_;
  m["rows_stored"] = rows_stored_;
  m["cache_hits"] = cache_.hits();
  m["cache_misses"] = cache_.misses();
  std::uint64_t auth_total = 0;
  std::uint64_t data_total = 0;
  for (std::size_t i = 0; i < kErrcCount; ++i) {
    const auto key = std::string(errc_key(static_cast<Errc>(i)));
    if (auto v = auth_discards_[i].load(); v != 0) m["auth_discarded_" + key] = v;
    if (auto v = data_discards_[i].load(); v != 0) m["data_discarded_" + key] = v;
    auth_total += auth_discards_[i];
    data_total += data_discards_[i];
  }
  m["auth_discarded"] = auth_total;
  m["data_discarded"] = data_total;
  return m;
}

}  // namespace sensorlink
