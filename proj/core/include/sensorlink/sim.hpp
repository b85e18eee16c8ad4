#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "sensorlink/client.hpp"
#include "sensorlink/crypto.hpp"
#include "sensorlink/rows.hpp"
#include "sensorlink/server.hpp"
#include "sensorlink/storage.hpp"

namespace sensorlink {

// ---- workload ----

struct WorkloadConfig {
  std::uint32_t duration_s = 3600;
  std::uint32_t start_time = 1'400'000'000;  // unix seconds of the first row
  double gps_hz = 1;                          // <= 1; 0 disables
  std::uint16_t accel_hz = 5;                 // samples per second packed into one row; 0 disables
  std::uint16_t gyro_hz = 0;
  std::uint16_t mag_hz = 0;
  std::uint32_t wifi_scan_min_s = 2;  // scan period drawn uniformly from [min, max]; 0 disables
  std::uint32_t wifi_scan_max_s = 3;
  std::uint32_t wifi_aps_min = 4;  // visible APs per scan
  std::uint32_t wifi_aps_max = 8;
  std::uint32_t ap_pool_size = 40;
  double zipf_exponent = 1.2;
  std::uint32_t bt_period_s = 0;  // 0 disables
  std::uint32_t bt_devices = 10;
  std::uint32_t pressure_period_s = 10;  // 0 disables
  std::uint16_t obd_hz = 0;              // 0 disables
  std::uint32_t event_period_s = 0;      // 0 disables
  std::uint64_t seed = 1;

  /// GPS 1 Hz, accelerometer 5 Hz, Wi-Fi every 2-3 s, pressure every 10 s.
  static WorkloadConfig typical();
  /// Every sensor at its highest rate.
  static WorkloadConfig maximum();
};

/// One second of gathered rows.
struct TimedBatch {
  std::uint32_t offset_s = 0;
  RowBatch batch;
};

/// Deterministic for a given config: seeded random walks for position,
/// sinusoid-plus-noise motion packed per second, Zipf-drawn access points.
std::vector<TimedBatch> generate_session(const WorkloadConfig& config);

/// Rows a workload produces, by stream.
std::map<Stream, std::size_t> count_rows(const std::vector<TimedBatch>& session);

/// Packed bytes (see packed_row_bytes) of a generated session.
std::size_t packed_session_bytes(const std::vector<TimedBatch>& session);

// ---- channel ----

struct ChannelConfig {
  double loss_prob = 0;
  Millis latency{0};
  Millis jitter{0};  // uniform in [-jitter, +jitter]
  double reorder_prob = 0;
  Millis reorder_delay{0};  // extra hold-back for reordered packets; 0 means 2 * latency + 1
  double duplicate_prob = 0;
  std::uint64_t seed = 1;
};

struct ChannelStats {
  std::size_t sent = 0;
  std::size_t lost = 0;
  std::size_t duplicated = 0;
  std::size_t reordered = 0;
  std::size_t delivered = 0;
};

/// One direction of a lossy link. Decides each packet's fate from a seeded
/// generator, so the same config yields the same sequence of fates.
class LossyChannel {
 public:
  explicit LossyChannel(ChannelConfig config);

  /// Arrival times (none when lost, two when duplicated) for a packet
  /// sent at `now`. Payloads are never altered.
  std::vector<Millis> transmit(Millis now);

  const ChannelConfig& config() const noexcept { return config_; }
  const ChannelStats& stats() const noexcept { return stats_; }

 private:
  Millis delay();

  ChannelConfig config_;
  std::mt19937_64 rng_;
  ChannelStats stats_;
};

// ---- storage decorator ----

struct FaultPlan {
  std::size_t fail_writes = 0;     // the next N write_rows calls throw storage_error
  std::size_t partial_writes = 0;  // then the next N write only part of their batch
  std::size_t partial_drop = 1;    // rows left out of each partial write
};

struct StorageCallCounts {
  std::size_t upsert_session = 0;
  std::size_t lookup_session_key = 0;
  std::size_t write_rows = 0;
  std::size_t intern_auxiliary = 0;
  std::size_t read_session_rows = 0;
};

/// Storage wrapper that counts calls and injects write failures.
class FaultInjectingStorage final : public Storage {
 public:
  explicit FaultInjectingStorage(std::shared_ptr<Storage> inner, FaultPlan plan = {});

  void set_plan(FaultPlan plan);
  StorageCallCounts counts() const;

  std::uint32_t upsert_session(const UserHash& user_hash, std::uint64_t start_time, const SessionKey& key,
                               std::uint16_t version, const Identifiers& identifiers) override;
  std::optional<SessionKeyInfo> lookup_session_key(std::uint32_t session_id) override;
  std::optional<SessionRecord> read_session(std::uint32_t session_id) override;
  std::size_t write_rows(std::uint32_t session_id, const RowBatch& batch) override;
  std::uint32_t intern_auxiliary(const MacAddress& mac, std::string_view essid) override;
  std::optional<AuxiliaryEntry> lookup_auxiliary(std::uint32_t ap_id) override;
  std::vector<StoredRow> read_session_rows(std::uint32_t session_id, const RowQuery& query) override;
  StorageStats storage_stats() override;

 private:
  std::shared_ptr<Storage> inner_;
  mutable std::mutex mu_;
  FaultPlan plan_;
  StorageCallCounts counts_;
};

// ---- experiments ----

enum class Network : std::uint8_t {
  simulated,  // in-process LossyChannels on a virtual clock
  udp,        // live Daemon on loopback; channel and restart settings do not apply
  tcp,
};

struct ExperimentConfig {
  Network network = Network::simulated;
  WorkloadConfig workload;
  ChannelConfig uplink;    // client -> server
  ChannelConfig downlink;  // server -> client
  ClientConfig client;
  IngestConfig server;

  /// Real-time mode enqueues rows as the virtual clock reaches them and
  /// flushes every `flush_period`; batch mode enqueues everything at start.
  bool realtime = false;
  Millis flush_period{5000};

  /// The server goes down when it has received this many client packets
  /// (auth and data), stays down for `restart_downtime`, and comes back as
  /// a fresh engine over the same storage.
  std::vector<std::size_t> restart_at_packets;
  Millis restart_downtime{1000};

  /// Virtual times at which the client rotates its session key.
  std::vector<Millis> rotate_key_at;

  std::string storage = "memory";
  std::string email = "gatherer@example.com";
  std::uint16_t version = 1;
  Identifiers identifiers;
  std::uint64_t client_seed = 7;
  Millis drain_timeout{6 * 3600 * 1000};

  /// Server key. Generated (4096 bits) when absent.
  std::optional<ServerKeyPair> keys;
  /// Optionally replaces the storage selector, e.g. with a fault injector.
  std::shared_ptr<Storage> storage_override;
};

struct ExperimentReport {
  std::size_t rows_generated = 0;
  std::size_t rows_stored = 0;   // natural-key rows of the session found in storage
  std::size_t rows_delivered = 0;  // acknowledged by feedback
  std::size_t rows_failed = 0;
  std::size_t retransmissions = 0;
  std::size_t packets_sent = 0;  // client -> server, including retransmissions
  std::size_t packets_lost = 0;  // both directions
  std::size_t packets_duplicated = 0;
  std::size_t packets_reordered = 0;
  std::size_t responses_sent = 0;
  std::size_t data_packets = 0;  // first transmissions
  std::size_t packets_reencoded = 0;
  std::size_t reauths = 0;
  std::size_t bytes_on_wire = 0;  // client -> server, including retransmissions
  std::size_t data_wire_bytes = 0;
  std::size_t json_bytes = 0;
  double compression_ratio = 0;  // data_wire_bytes / json_bytes
  std::size_t stored_bytes = 0;
  double stored_bytes_per_second = 0;  // per workload second
  double virtual_time_s = 0;
  double wall_time_s = 0;
  double throughput_rows_per_s = 0;  // rows_delivered per virtual second
  std::size_t handshake_client_packets = 0;  // auth packets before authentication
  std::size_t handshake_server_packets = 0;  // auth responses before authentication
  double first_data_delay_ms = 0;  // auth response arrival to first data packet
  std::size_t restarts = 0;
  std::size_t server_discards = 0;
  std::size_t feedback_stored_total = 0;  // sum of stored counts in accepted feedback
  std::uint32_t session_id = 0;
  std::vector<std::uint32_t> session_ids_seen;  // distinct ids returned by auth
  bool verified = false;
  std::string first_divergence;
  bool timed_out = false;
};

/// Runs client and server in process over two LossyChannels on a virtual
/// clock, drains, then compares storage with the generated rows. Throws
/// Error(verification_failed) naming the first divergent row when every row
/// was reported delivered yet storage disagrees.
ExperimentReport run_experiment(const ExperimentConfig& config);

/// Rows of `session_id` with auxiliary references resolved, keyed by
/// natural key (session_id zeroed so different runs compare).
std::map<NaturalKey, std::pair<Stream, Row>> snapshot_session(Storage& storage, std::uint32_t session_id);

/// Parses the key=value experiment file format; '#' starts a comment.
/// Throws Error(config_error) for unknown keys and bad values.
ExperimentConfig parse_experiment_config(std::string_view text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

std::string report_to_json(const ExperimentReport& report);
std::string report_to_table(const ExperimentReport& report);

}  // namespace sensorlink
