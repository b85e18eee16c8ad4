#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "sensorlink/bytes.hpp"
#include "sensorlink/codec.hpp"
#include "sensorlink/crypto.hpp"
#include "sensorlink/random.hpp"
#include "sensorlink/rows.hpp"

namespace sensorlink {

using Millis = std::chrono::milliseconds;

class Journal;

enum class Channel : std::uint8_t { auth, data };

struct Outgoing {
  Channel channel = Channel::data;
  Bytes wire;
};

struct Incoming {
  Channel channel = Channel::data;
  Bytes wire;
};

/// Exponential backoff: the n-th transmission (n = 0 first) times out after
/// min(base * factor^n, max).
struct RetryPolicy {
  Millis base{500};
  double factor = 2.0;
  Millis max{30'000};
  unsigned max_retries = 10;

  Millis timeout(unsigned transmissions_so_far) const;
};

struct ClientConfig {
  std::size_t window = 16;
  std::size_t max_packet_bytes = kDefaultMaxPacketBytes;
  std::size_t buffer_limit_bytes = 64 * 1024 * 1024;
  RetryPolicy retry;
  /// When a data packet has been retried this many times without any
  /// feedback arriving since it was first sent, the client re-sends its
  /// auth packet with the current key.
  unsigned reauth_after_retries = 3;
};

struct AckResult {
  std::uint32_t seq = 0;
  std::size_t sent_rows = 0;
  std::size_t stored_rows = 0;
  std::size_t requeued_rows = 0;  // shortfall when stored < sent

  friend bool operator==(const AckResult&, const AckResult&) = default;
};

enum class AuthOutcome { authenticated, unknown_seq, time_mismatch };

struct ClientStats {
  std::size_t auth_packets_sent = 0;
  std::size_t data_packets_sent = 0;   // first transmissions
  std::size_t retransmissions = 0;     // auth + data re-sends
  std::size_t packets_reencoded = 0;   // retries re-encrypted after a key change
  std::size_t reauths = 0;
  std::size_t bytes_sent = 0;
  std::size_t json_bytes = 0;          // payload JSON of first transmissions
  std::size_t delivered_rows = 0;
  std::size_t failed_rows = 0;
  std::size_t requeued_rows = 0;
  std::size_t max_in_flight = 0;
  std::size_t feedback_received = 0;
  std::size_t feedback_ignored = 0;
};

struct DrainReport {
  std::size_t delivered_rows = 0;
  std::size_t failed_rows = 0;
  std::size_t retransmissions = 0;
  bool timed_out = false;
};

struct AuthSend {
  AuthRequest request;
  Outgoing out;
};

/// Gathering-unit protocol engine. Performs no I/O: `pump` hands back wire
/// blobs and the caller feeds received blobs to `receive`.
///
/// `enqueue_rows` may be called from a producer thread concurrently with
/// the pump/receive loop; every other member belongs to that loop.
class ClientSession {
 public:
  struct Begin;

  static Begin begin_session(const PublicKey& server_pub, const UserHash& user_hash, std::uint64_t start_time,
                             std::uint16_t version, Identifiers identifiers, Millis now, ClientConfig config = {},
                             RandomSource& rng = system_random());

  ClientSession(ClientSession&&) noexcept;
  ClientSession& operator=(ClientSession&&) noexcept;
  ~ClientSession();

  AuthOutcome handle_auth_response(const AuthResponse& resp);

  /// Re-authenticates with the same (hash, time). A missing key reuses the
  /// latest proposed key. Data keeps flowing under the old key until the
  /// response arrives.
  AuthSend update_session(std::optional<SessionKey> new_key, std::optional<Identifiers> identifiers, Millis now);

  /// Throws Error(buffer_full) when the buffer bound would be exceeded.
  std::size_t enqueue_rows(const RowBatch& batch);

  std::vector<Outgoing> pump(Millis now);

  /// nullopt for feedback that matches nothing in flight.
  std::optional<AckResult> handle_feedback(const FeedbackPacket& fb);

  /// Decrypts and dispatches a received blob. Undecodable blobs are
  /// ignored (nullopt). Auth responses report their outcome; feedback
  /// reports its AckResult.
  std::optional<AuthOutcome> receive_auth(ByteView wire);
  std::optional<AckResult> receive_feedback(ByteView wire);
  void receive(const Incoming& in);

  /// Earliest time at which `pump` has retransmission work.
  std::optional<Millis> next_deadline() const;

  /// Authenticated with nothing unsent or in flight, or authentication
  /// gave up.
  bool finished() const;
  bool authenticated() const noexcept { return session_id_.has_value(); }
  bool auth_failed() const noexcept { return auth_failed_; }

  std::optional<std::uint32_t> session_id() const noexcept { return session_id_; }
  const UserHash& user_hash() const noexcept { return user_hash_; }
  std::uint64_t start_time() const noexcept { return start_time_; }
  std::optional<SessionKey> current_key() const noexcept { return current_key_; }
  std::size_t in_flight() const noexcept { return in_flight_.size(); }
  std::size_t pending_auths() const noexcept;
  std::size_t unsent_rows() const;
  std::size_t buffered_rows() const;  // every row not yet released
  const ClientStats& stats() const noexcept { return stats_; }
  const ClientConfig& config() const noexcept { return config_; }

  /// Rows are journaled on enqueue; acknowledged prefixes advance the
  /// journal watermark.
  void attach_journal(std::shared_ptr<Journal> journal);
  /// Re-enqueues rows recovered from a journal, keeping their ordinals.
  void restore_rows(std::uint64_t first_ordinal, const std::vector<RowBatch>& batches);

 private:
  struct PendingAuth {
    std::uint32_t seq = 0;
    SessionKey key;
    Bytes wire;
    Millis sent_at{0};
    unsigned retries = 0;
    Millis next_retry_at{0};
    bool stale = false;  // superseded; no longer retransmitted
  };

  struct OutstandingPacket {
    std::uint32_t seq = 0;
    std::vector<std::uint64_t> ordinals;
    Bytes wire;
    std::uint64_t key_epoch = 0;
    Millis first_sent_at{0};
    unsigned retries = 0;
    Millis next_retry_at{0};
    std::size_t feedback_seen_at_send = 0;
  };

  class Buffer;

  ClientSession(const PublicKey& server_pub, const UserHash& user_hash, std::uint64_t start_time, std::uint16_t version,
                Identifiers identifiers, ClientConfig config, RandomSource& rng);

  AuthSend send_auth(const SessionKey& key, Millis now);
  std::optional<Outgoing> pack_next(Millis now);
  void fail_packet(const OutstandingPacket& pkt);
  void release(const OutstandingPacket& pkt);
  void advance_watermark();

  ClientConfig config_;
  RandomSource* rng_;
  PublicKey server_pub_;
  UserHash user_hash_;
  std::uint64_t start_time_;
  std::uint16_t version_;
  Identifiers identifiers_;

  std::optional<std::uint32_t> session_id_;
  std::optional<SessionKey> current_key_;
  SessionKey latest_key_;
  std::vector<SessionKey> key_history_;  // newest first, bounded
  std::uint64_t key_epoch_ = 0;
  bool auth_failed_ = false;

  std::uint32_t next_auth_seq_ = 1;
  std::uint32_t next_seq_ = 1;
  std::map<std::uint32_t, PendingAuth> pending_auths_;
  std::map<std::uint32_t, OutstandingPacket> in_flight_;
  std::map<std::uint64_t, unsigned> requeue_counts_;  // keyed by first ordinal of a short-stored packet
  double compression_estimate_ = 0.5;

  std::unique_ptr<Buffer> buffer_;
  std::shared_ptr<Journal> journal_;
  std::uint64_t journaled_watermark_ = 0;
  ClientStats stats_;
};

struct ClientSession::Begin {
  ClientSession session;
  AuthRequest request;
  Outgoing out;
};

/// Transport seen by the client loop. `wait` blocks (or advances a virtual
/// clock) until a blob arrives or `deadline` passes.
class ClientLink {
 public:
  virtual ~ClientLink() = default;
  virtual Millis now() = 0;
  virtual void send(const Outgoing& out) = 0;
  virtual std::optional<Incoming> wait(Millis deadline) = 0;
};

/// Pumps until the session is finished or `timeout` elapses.
DrainReport drain(ClientSession& session, ClientLink& link, Millis timeout);

}  // namespace sensorlink
