#include "sensorlink/client.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <functional>
#include <mutex>
#include <set>

#include "sensorlink/error.hpp"
#include "sensorlink/journal.hpp"

namespace sensorlink {

Millis RetryPolicy::timeout(unsigned transmissions_so_far) const {
  double ms = static_cast<double>(base.count()) * std::pow(factor, static_cast<double>(transmissions_so_far));
  if (!std::isfinite(ms) || ms > static_cast<double>(max.count())) return max;
  return Millis(static_cast<Millis::rep>(ms));
}

namespace {

constexpr std::size_t kKeyHistory = 4;
constexpr std::size_t kEntryOverhead = 64;
constexpr double kPacketFill = 0.9;
constexpr double kEstimateWeight = 0.3;

}  // namespace

// Rows wait here from enqueue until a covering feedback releases them.
// Shared between the producer thread and the pump loop.
class ClientSession::Buffer {
 public:
  explicit Buffer(std::size_t limit) : limit_(limit) {}

  std::uint64_t add(const RowBatch& batch, const std::function<void(std::uint64_t)>& on_assigned) {
    std::vector<std::pair<Stream, const Row*>> rows;
    std::vector<std::size_t> sizes;
    std::size_t total = 0;
    for (const auto& [stream, list] : batch.streams) {
      for (const auto& row : list) {
        validate_row(stream, row);
        rows.emplace_back(stream, &row);
        sizes.push_back(serialized_row_size(stream, row));
        total += sizes.back() + kEntryOverhead;
      }
    }
    std::lock_guard lock(mu_);
    if (bytes_ + total > limit_) {
      throw Error(Errc::buffer_full, std::to_string(bytes_ + total) + " bytes would exceed " + std::to_string(limit_));
    }
    const std::uint64_t first = next_;
    if (on_assigned) on_assigned(first);
    insert_locked(rows, sizes);
    bytes_ += total;
    return first;
  }

  void add_at(std::uint64_t first, const RowBatch& batch) {
    std::vector<std::pair<Stream, const Row*>> rows;
    std::vector<std::size_t> sizes;
    std::size_t total = 0;
    for (const auto& [stream, list] : batch.streams) {
      for (const auto& row : list) {
        rows.emplace_back(stream, &row);
        sizes.push_back(serialized_row_size(stream, row));
        total += sizes.back() + kEntryOverhead;
      }
    }
    std::lock_guard lock(mu_);
    next_ = std::max(next_, first);
    insert_locked(rows, sizes);
    bytes_ += total;
  }

  /// Pops unsent rows from the front until their JSON size reaches
  /// `json_budget`; always returns at least one row when any is unsent.
  std::vector<std::uint64_t> take(std::size_t json_budget) {
    std::lock_guard lock(mu_);
    std::vector<std::uint64_t> out;
    std::size_t used = 0;
    while (!unsent_.empty()) {
      const auto ordinal = unsent_.front();
      const auto size = entries_.at(ordinal).json_size + 1;
      if (!out.empty() && used + size > json_budget) break;
      out.push_back(ordinal);
      used += size;
      unsent_.pop_front();
    }
    return out;
  }

  RowBatch rows(const std::vector<std::uint64_t>& ordinals) const {
    std::lock_guard lock(mu_);
    RowBatch batch;
    for (auto ordinal : ordinals) {
      const auto& e = entries_.at(ordinal);
      batch.streams[e.stream].push_back(e.row);
    }
    return batch;
  }

  void requeue_front(const std::vector<std::uint64_t>& ordinals) {
    std::lock_guard lock(mu_);
    unsent_.insert(unsent_.begin(), ordinals.begin(), ordinals.end());
  }

  void release(const std::vector<std::uint64_t>& ordinals) {
    std::lock_guard lock(mu_);
    for (auto ordinal : ordinals) erase_locked(ordinal);
  }

  // Failed rows leave the buffer but hold the watermark back, so a journal
  // keeps them for a later upload.
  void mark_failed(const std::vector<std::uint64_t>& ordinals) {
    std::lock_guard lock(mu_);
    for (auto ordinal : ordinals) {
      erase_locked(ordinal);
      failed_.insert(ordinal);
    }
  }

  std::size_t unsent() const {
    std::lock_guard lock(mu_);
    return unsent_.size();
  }

  std::size_t buffered() const {
    std::lock_guard lock(mu_);
    return entries_.size();
  }

  /// Lowest ordinal that has not been positively acknowledged.
  std::uint64_t watermark() const {
    std::lock_guard lock(mu_);
    std::uint64_t wm = next_;
    if (!entries_.empty()) wm = std::min(wm, entries_.begin()->first);
    if (!failed_.empty()) wm = std::min(wm, *failed_.begin());
    return wm;
  }

 private:
  struct Entry {
    Stream stream;
    Row row;
    std::size_t json_size;
  };

  void insert_locked(const std::vector<std::pair<Stream, const Row*>>& rows, const std::vector<std::size_t>& sizes) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto ordinal = next_++;
      entries_.emplace(ordinal, Entry{rows[i].first, *rows[i].second, sizes[i]});
      unsent_.push_back(ordinal);
    }
  }

  void erase_locked(std::uint64_t ordinal) {
    auto it = entries_.find(ordinal);
    if (it == entries_.end()) return;
    bytes_ -= std::min(bytes_, it->second.json_size + kEntryOverhead);
    entries_.erase(it);
  }

  mutable std::mutex mu_;
  std::size_t limit_;
  std::size_t bytes_ = 0;
  std::uint64_t next_ = 0;
  std::map<std::uint64_t, Entry> entries_;
  std::set<std::uint64_t> failed_;
  std::deque<std::uint64_t> unsent_;
};

ClientSession::ClientSession(const PublicKey& server_pub, const UserHash& user_hash, std::uint64_t start_time,
                             std::uint16_t version, Identifiers identifiers, ClientConfig config, RandomSource& rng)
    : config_(config),
      rng_(&rng),
      server_pub_(server_pub),
      user_hash_(user_hash),
      start_time_(start_time),
      version_(version),
      identifiers_(std::move(identifiers)),
      buffer_(std::make_unique<Buffer>(config.buffer_limit_bytes)) {
  if (config_.window == 0) throw Error(Errc::invalid_argument, "window must be >= 1");
  if (config_.max_packet_bytes <= kPrefixBytes + 2 * kIvBytes) {
    throw Error(Errc::invalid_argument, "max_packet_bytes too small");
  }
}

ClientSession::ClientSession(ClientSession&&) noexcept = default;
ClientSession& ClientSession::operator=(ClientSession&&) noexcept = default;
ClientSession::~ClientSession() = default;

ClientSession::Begin ClientSession::begin_session(const PublicKey& server_pub, const UserHash& user_hash,
                                                  std::uint64_t start_time, std::uint16_t version,
                                                  Identifiers identifiers, Millis now, ClientConfig config,
                                                  RandomSource& rng) {
  if (start_time == 0) throw Error(Errc::invalid_argument, "start_time must be > 0");
  ClientSession session(server_pub, user_hash, start_time, version, std::move(identifiers), config, rng);
  // Random first seq so concurrent sessions of one unit don't share seqs.
  // The top bit stays clear, leaving room to count up without wrapping.
  std::array<std::uint8_t, 4> seed{};
  rng.fill(seed);
  session.next_auth_seq_ = std::max<std::uint32_t>(1, get_u32_be(seed) >> 1);
  session.latest_key_ = generate_session_key(rng);
  auto sent = session.send_auth(session.latest_key_, now);
  return Begin{std::move(session), std::move(sent.request), std::move(sent.out)};
}

AuthSend ClientSession::send_auth(const SessionKey& key, Millis now) {
  AuthRequest req{next_auth_seq_, user_hash_, start_time_, key, version_, identifiers_};
  Bytes wire = encode_auth_request(req, server_pub_, *rng_);
  ++next_auth_seq_;
  pending_auths_[req.seq] = PendingAuth{req.seq, key, wire, now, 0, now + config_.retry.timeout(0), false};
  ++stats_.auth_packets_sent;
  stats_.bytes_sent += wire.size();
  return AuthSend{std::move(req), Outgoing{Channel::auth, std::move(wire)}};
}

AuthOutcome ClientSession::handle_auth_response(const AuthResponse& resp) {
  auto it = pending_auths_.find(resp.seq);
  if (it == pending_auths_.end()) return AuthOutcome::unknown_seq;
  if (resp.time != start_time_) return AuthOutcome::time_mismatch;

  const SessionKey key = it->second.key;
  session_id_ = resp.session_id;
  if (!current_key_ || *current_key_ != key) {
    current_key_ = key;
    ++key_epoch_;
    std::erase(key_history_, key);
    key_history_.insert(key_history_.begin(), key);
    if (key_history_.size() > kKeyHistory) key_history_.resize(kKeyHistory);
  }
  // Older requests stop retransmitting, but a late response to one of them
  // still binds, since the server holds whichever key it handled last.
  for (auto& [seq, pending] : pending_auths_) {
    if (seq < resp.seq) pending.stale = true;
  }
  pending_auths_.erase(it);
  return AuthOutcome::authenticated;
}

AuthSend ClientSession::update_session(std::optional<SessionKey> new_key, std::optional<Identifiers> identifiers,
                                       Millis now) {
  if (new_key) latest_key_ = *new_key;
  if (identifiers) identifiers_ = std::move(*identifiers);
  return send_auth(latest_key_, now);
}

std::size_t ClientSession::enqueue_rows(const RowBatch& batch) {
  if (batch.empty()) return 0;
  std::function<void(std::uint64_t)> journal_hook;
  if (journal_) {
    journal_hook = [&](std::uint64_t first) { journal_->append_rows(first, batch); };
  }
  buffer_->add(batch, journal_hook);
  return batch.row_count();
}

std::optional<Outgoing> ClientSession::pack_next(Millis now) {
  const double budget_d = static_cast<double>(config_.max_packet_bytes) * kPacketFill / compression_estimate_;
  auto ordinals = buffer_->take(static_cast<std::size_t>(std::max(1.0, budget_d)));
  if (ordinals.empty()) return std::nullopt;

  const std::uint32_t seq = next_seq_;
  while (true) {
    DataPacket pkt{*session_id_, seq, buffer_->rows(ordinals)};
    const std::string json = serialize_payload(pkt);
    Bytes wire = seal_payload(pkt.session_id, json, *current_key_, *rng_);
    if (wire.size() <= config_.max_packet_bytes) {
      ++next_seq_;
      const double ratio = static_cast<double>(wire.size()) / static_cast<double>(json.size());
      compression_estimate_ = (1 - kEstimateWeight) * compression_estimate_ + kEstimateWeight * ratio;
      ++stats_.data_packets_sent;
      stats_.json_bytes += json.size();
      stats_.bytes_sent += wire.size();

      OutstandingPacket out;
      out.seq = seq;
      out.ordinals = std::move(ordinals);
      out.wire = wire;
      out.key_epoch = key_epoch_;
      out.first_sent_at = now;
      out.next_retry_at = now + config_.retry.timeout(0);
      out.feedback_seen_at_send = stats_.feedback_received + stats_.feedback_ignored;
      in_flight_.emplace(seq, std::move(out));
      stats_.max_in_flight = std::max(stats_.max_in_flight, in_flight_.size());
      return Outgoing{Channel::data, std::move(wire)};
    }
    if (ordinals.size() == 1) {
      // A single row that cannot fit any packet is undeliverable.
      buffer_->mark_failed(ordinals);
      ++stats_.failed_rows;
      return std::nullopt;
    }
    const auto half = static_cast<std::ptrdiff_t>(ordinals.size() / 2);
    buffer_->requeue_front(std::vector<std::uint64_t>(ordinals.begin() + half, ordinals.end()));
    ordinals.resize(static_cast<std::size_t>(half));
    compression_estimate_ = std::min(1.0, compression_estimate_ * 1.5);
  }
}

void ClientSession::fail_packet(const OutstandingPacket& pkt) {
  buffer_->mark_failed(pkt.ordinals);
  stats_.failed_rows += pkt.ordinals.size();
}

void ClientSession::release(const OutstandingPacket& pkt) {
  buffer_->release(pkt.ordinals);
  stats_.delivered_rows += pkt.ordinals.size();
  advance_watermark();
}

void ClientSession::advance_watermark() {
  if (!journal_) return;
  const auto wm = buffer_->watermark();
  if (wm > journaled_watermark_) {
    journal_->append_watermark(wm);
    journaled_watermark_ = wm;
  }
}

std::vector<Outgoing> ClientSession::pump(Millis now) {
  std::vector<Outgoing> out;
  const auto& retry = config_.retry;

  // Auth retransmissions.
  for (auto it = pending_auths_.begin(); it != pending_auths_.end();) {
    auto& p = it->second;
    if (p.stale) {
      // Kept only to bind a late response.
      if (now >= p.sent_at + 2 * retry.max) {
        it = pending_auths_.erase(it);
      } else {
        ++it;
      }
      continue;
    }
    if (now < p.next_retry_at) {
      ++it;
      continue;
    }
    if (p.retries >= retry.max_retries) {
      it = pending_auths_.erase(it);
      continue;
    }
    ++p.retries;
    p.next_retry_at = now + retry.timeout(p.retries);
    ++stats_.retransmissions;
    stats_.bytes_sent += p.wire.size();
    out.push_back(Outgoing{Channel::auth, p.wire});
    ++it;
  }
  if (!session_id_ && pending_auths_.empty()) auth_failed_ = true;
  if (!session_id_ || !current_key_) return out;

  // Data retransmissions.
  bool want_reauth = false;
  for (auto it = in_flight_.begin(); it != in_flight_.end();) {
    auto& pkt = it->second;
    if (now < pkt.next_retry_at) {
      ++it;
      continue;
    }
    if (pkt.retries >= retry.max_retries) {
      fail_packet(pkt);
      it = in_flight_.erase(it);
      continue;
    }
    if (pkt.key_epoch != key_epoch_) {
      DataPacket again{*session_id_, pkt.seq, buffer_->rows(pkt.ordinals)};
      pkt.wire = seal_payload(again.session_id, serialize_payload(again), *current_key_, *rng_);
      pkt.key_epoch = key_epoch_;
      ++stats_.packets_reencoded;
    }
    ++pkt.retries;
    pkt.next_retry_at = now + retry.timeout(pkt.retries);
    ++stats_.retransmissions;
    stats_.bytes_sent += pkt.wire.size();
    out.push_back(Outgoing{Channel::data, pkt.wire});
    if (pkt.retries >= config_.reauth_after_retries &&
        stats_.feedback_received + stats_.feedback_ignored == pkt.feedback_seen_at_send) {
      want_reauth = true;
    }
    ++it;
  }
  if (want_reauth && pending_auths() == 0) {
    // Nothing has come back since these packets left: the server may hold
    // a different key for this session. Re-assert ours.
    ++stats_.reauths;
    out.push_back(send_auth(*current_key_, now).out);
  }

  // New packets up to the window.
  while (in_flight_.size() < config_.window && buffer_->unsent() > 0) {
    if (auto pkt = pack_next(now)) out.push_back(std::move(*pkt));
  }
  advance_watermark();
  return out;
}

std::optional<AckResult> ClientSession::handle_feedback(const FeedbackPacket& fb) {
  if (!session_id_ || fb.session_id != *session_id_) {
    ++stats_.feedback_ignored;
    return std::nullopt;
  }
  auto it = in_flight_.find(fb.seq);
  if (it == in_flight_.end()) {
    ++stats_.feedback_ignored;
    return std::nullopt;
  }
  ++stats_.feedback_received;
  OutstandingPacket pkt = std::move(it->second);
  in_flight_.erase(it);

  AckResult result{pkt.seq, pkt.ordinals.size(), std::min<std::size_t>(fb.stored, pkt.ordinals.size()), 0};
  if (result.stored_rows == result.sent_rows) {
    requeue_counts_.erase(pkt.ordinals.front());
    release(pkt);
  } else {
    // Whole batch goes out again under a new seq; server-side writes are
    // idempotent, so rows already stored are simply counted again.
    result.requeued_rows = result.sent_rows - result.stored_rows;
    stats_.requeued_rows += result.requeued_rows;
    if (++requeue_counts_[pkt.ordinals.front()] > config_.retry.max_retries) {
      requeue_counts_.erase(pkt.ordinals.front());
      fail_packet(pkt);
    } else {
      buffer_->requeue_front(pkt.ordinals);
    }
  }
  return result;
}

std::optional<AuthOutcome> ClientSession::receive_auth(ByteView wire) {
  auto seq = peek_prefix(wire);
  if (!seq) return std::nullopt;
  auto it = pending_auths_.find(*seq);
  if (it == pending_auths_.end()) return std::nullopt;
  AuthResponse resp;
  try {
    resp = decode_auth_response(wire, it->second.key, CodecLimits{config_.max_packet_bytes, kDefaultMaxDecompressed});
  } catch (const Error&) {
    return std::nullopt;
  }
  return handle_auth_response(resp);
}

std::optional<AckResult> ClientSession::receive_feedback(ByteView wire) {
  if (!session_id_) return std::nullopt;
  auto prefix = peek_prefix(wire);
  if (!prefix || *prefix != *session_id_) return std::nullopt;
  const CodecLimits limits{config_.max_packet_bytes, kDefaultMaxDecompressed};
  for (const auto& key : key_history_) {
    try {
      return handle_feedback(decode_feedback(wire, key, limits));
    } catch (const Error&) {
    }
  }
  return std::nullopt;
}

void ClientSession::receive(const Incoming& in) {
  if (in.channel == Channel::auth) {
    receive_auth(in.wire);
  } else {
    receive_feedback(in.wire);
  }
}

std::optional<Millis> ClientSession::next_deadline() const {
  std::optional<Millis> best;
  auto consider = [&](Millis t) {
    if (!best || t < *best) best = t;
  };
  for (const auto& [seq, p] : pending_auths_) {
    if (!p.stale) consider(p.next_retry_at);
  }
  for (const auto& [seq, pkt] : in_flight_) consider(pkt.next_retry_at);
  return best;
}

bool ClientSession::finished() const {
  if (auth_failed_) return true;
  return session_id_.has_value() && in_flight_.empty() && buffer_->unsent() == 0;
}

std::size_t ClientSession::pending_auths() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(pending_auths_.begin(), pending_auths_.end(), [](const auto& kv) { return !kv.second.stale; }));
}

std::size_t ClientSession::unsent_rows() const { return buffer_->unsent(); }
std::size_t ClientSession::buffered_rows() const { return buffer_->buffered(); }

void ClientSession::attach_journal(std::shared_ptr<Journal> journal) {
  journal_ = std::move(journal);
  journaled_watermark_ = buffer_->watermark();
}

void ClientSession::restore_rows(std::uint64_t first_ordinal, const std::vector<RowBatch>& batches) {
  std::uint64_t next = first_ordinal;
  for (const auto& batch : batches) {
    buffer_->add_at(next, batch);
    next += batch.row_count();
  }
  journaled_watermark_ = std::max(journaled_watermark_, first_ordinal);
}

DrainReport drain(ClientSession& session, ClientLink& link, Millis timeout) {
  const Millis deadline = link.now() + timeout;
  DrainReport report;
  while (true) {
    const Millis now = link.now();
    for (const auto& out : session.pump(now)) link.send(out);
    if (session.finished()) break;
    if (now >= deadline) {
      report.timed_out = true;
      break;
    }
    Millis wake = deadline;
    if (auto next = session.next_deadline()) wake = std::min(wake, std::max(*next, now));
    if (auto in = link.wait(wake)) session.receive(*in);
  }
  const auto& stats = session.stats();
  report.delivered_rows = stats.delivered_rows;
  report.failed_rows = stats.failed_rows;
  report.retransmissions = stats.retransmissions;
  return report;
}

}  // namespace sensorlink
