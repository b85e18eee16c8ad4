#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include "sensorlink/bytes.hpp"
#include "sensorlink/codec.hpp"
#include "sensorlink/crypto.hpp"
#include "sensorlink/error.hpp"
#include "sensorlink/random.hpp"
#include "sensorlink/storage.hpp"

namespace sensorlink {

inline constexpr std::size_t kDefaultCacheCapacity = 10'000;

/// LRU map of session_id to key in front of Storage::lookup_session_key.
/// Storage stays authoritative; eviction only costs a read.
class SessionKeyCache {
 public:
  SessionKeyCache(std::shared_ptr<Storage> storage, std::size_t capacity);

  std::optional<SessionKey> lookup(std::uint32_t session_id);
  void put(std::uint32_t session_id, const SessionKey& key);
  void clear();

  std::size_t size() const;
  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t hits() const noexcept { return hits_; }
  std::size_t misses() const noexcept { return misses_; }

 private:
  using Order = std::list<std::pair<std::uint32_t, SessionKey>>;

  void put_locked(std::uint32_t session_id, const SessionKey& key);

  std::shared_ptr<Storage> storage_;
  std::size_t capacity_;
  mutable std::mutex mu_;
  Order order_;  // most recent first
  std::unordered_map<std::uint32_t, Order::iterator> index_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

struct IngestConfig {
  std::size_t cache_capacity = kDefaultCacheCapacity;
  std::size_t max_packet_bytes = kDefaultMaxPacketBytes;
};

/// Counter snapshot in a stable, sorted key order.
using MetricsSnapshot = std::map<std::string, std::uint64_t>;

/// Plain-text "key value" lines.
std::string format_metrics(const MetricsSnapshot& metrics);

/// A data packet that decrypted and parsed, waiting for its rows to be
/// written.
struct DecodedData {
  std::uint32_t session_id = 0;
  std::uint32_t seq = 0;
  SessionKey key;
  RowBatch batch;
};

/// Transport-free packet handler. Every handled packet is independent of the
/// ones before it; the only state is storage plus a cache of it.
class IngestEngine {
 public:
  IngestEngine(PrivateKey server_key, std::shared_ptr<Storage> storage, IngestConfig config = {},
               RandomSource& rng = system_random());

  struct AuthResult {
    Bytes wire;
    std::uint32_t session_id = 0;
    std::uint32_t seq = 0;
  };

  /// Response blob, or nullopt when the packet is discarded.
  std::optional<Bytes> handle_auth_packet(ByteView blob);
  std::optional<AuthResult> process_auth(ByteView blob);

  /// handle_data_packet split at the storage boundary.
  std::optional<DecodedData> decode_data(ByteView blob);
  std::optional<Bytes> store_and_acknowledge(const DecodedData& data);
  std::optional<Bytes> handle_data_packet(ByteView blob);

  SessionKeyCache& cache() noexcept { return cache_; }
  Storage& storage() noexcept { return *storage_; }
  MetricsSnapshot metrics() const;

 private:
  static constexpr std::size_t kErrcCount = static_cast<std::size_t>(Errc::transport_error) + 1;
  using Counters = std::array<std::atomic<std::uint64_t>, kErrcCount>;

  PrivateKey key_;
  std::shared_ptr<Storage> storage_;
  IngestConfig config_;
  RandomSource* rng_;
  SessionKeyCache cache_;
  std::mutex auth_mu_;  // the single logical auth connection

  std::atomic<std::uint64_t> auth_packets_{0};
  std::atomic<std::uint64_t> auth_accepted_{0};
  std::atomic<std::uint64_t> data_packets_{0};
  std::atomic<std::uint64_t> data_accepted_{0};
  std::atomic<std::uint64_t> feedback_sent_{0};
  std::atomic<std::uint64_t> rows_received_{0};
  std::atomic<std::uint64_t> rows_stored_{0};
  Counters auth_discards_{};
  Counters data_discards_{};
};

}  // namespace sensorlink
