#include <chrono>
#include <mutex>
#include <utility>

#include "sensorlink/error.hpp"
#include "sensorlink/storage.hpp"

namespace sensorlink {
namespace {

std::int64_t unix_now() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

class MemoryStorage final : public Storage {
 public:
  std::uint32_t upsert_session(const UserHash& user_hash, std::uint64_t start_time, const SessionKey& key,
                               std::uint16_t version, const Identifiers& identifiers) override {
    std::lock_guard lock(mu_);
    users_.try_emplace(user_hash.hex(), users_.size() + 1);
    auto [it, inserted] = session_index_.try_emplace({user_hash.hex(), start_time}, next_session_id_);
    if (inserted) {
      sessions_.emplace(next_session_id_, SessionRecord{next_session_id_, user_hash, start_time, key, version,
                                                        identifiers, unix_now()});
      ++next_session_id_;
    } else {
      auto& rec = sessions_.at(it->second);
      rec.key = key;
      rec.version = version;
      rec.identifiers = identifiers;
    }
    return it->second;
  }

  std::optional<SessionKeyInfo> lookup_session_key(std::uint32_t session_id) override {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) return std::nullopt;
    return SessionKeyInfo{it->second.key, it->second.user_hash, it->second.start_time};
  }

  std::optional<SessionRecord> read_session(std::uint32_t session_id) override {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t write_rows(std::uint32_t session_id, const RowBatch& batch) override {
    validate_batch(batch);
    std::lock_guard lock(mu_);
    if (!sessions_.contains(session_id)) throw Error(Errc::unknown_session, std::to_string(session_id));
    std::size_t present = 0;
    for (const auto& [stream, rows] : batch.streams) {
      for (const auto& row : rows) {
        StoredRow stored{session_id, stream, row};
        if (stream == Stream::wifi) {
          auto& w = std::get<WifiObservation>(stored.row.payload);
          if (w.ap_id) {
            if (*w.ap_id == 0 || *w.ap_id > aux_.size()) continue;
          } else {
            w.ap_id = intern_locked(*w.mac, *w.essid);
            w.mac.reset();
            w.essid.reset();
          }
        }
        auto key = stored.key();
        if (!rows_.contains(key)) {
          bytes_ += packed_row_bytes(stream, stored.row);
          rows_.emplace(key, std::move(stored));
        }
        ++present;
      }
    }
    return present;
  }

  std::uint32_t intern_auxiliary(const MacAddress& mac, std::string_view essid) override {
    std::lock_guard lock(mu_);
    return intern_locked(mac, essid);
  }

  std::optional<AuxiliaryEntry> lookup_auxiliary(std::uint32_t ap_id) override {
    std::lock_guard lock(mu_);
    if (ap_id == 0 || ap_id > aux_.size()) return std::nullopt;
    return aux_[ap_id - 1];
  }

  std::vector<StoredRow> read_session_rows(std::uint32_t session_id, const RowQuery& query) override {
    std::lock_guard lock(mu_);
    std::vector<StoredRow> out;
    auto it = rows_.lower_bound(NaturalKey{session_id, Stream{}, 0, -1, 0});
    for (; it != rows_.end() && it->first.session_id == session_id; ++it) {
      const auto& r = it->second;
      if (!query.streams.empty() && !query.streams.contains(r.stream)) continue;
      if (r.row.ts < query.from_ts || r.row.ts > query.to_ts) continue;
      out.push_back(r);
    }
    return out;
  }

  StorageStats storage_stats() override {
    std::lock_guard lock(mu_);
    StorageStats stats;
    stats.sessions = sessions_.size();
    stats.auxiliary_entries = aux_.size();
    for (const auto& [key, _] : rows_) ++stats.rows_by_stream[key.stream];
    stats.bytes = bytes_;
    return stats;
  }

 private:
  std::uint32_t intern_locked(const MacAddress& mac, std::string_view essid) {
    auto [it, inserted] = aux_index_.try_emplace({mac, std::string(essid)}, 0);
    if (inserted) {
      aux_.push_back(AuxiliaryEntry{static_cast<std::uint32_t>(aux_.size() + 1), mac, std::string(essid)});
      it->second = aux_.back().ap_id;
    }
    return it->second;
  }

  std::mutex mu_;
  std::uint32_t next_session_id_ = 1;
  std::map<std::string, std::size_t> users_;
  std::map<std::pair<std::string, std::uint64_t>, std::uint32_t> session_index_;
  std::map<std::uint32_t, SessionRecord> sessions_;
  std::map<std::pair<MacAddress, std::string>, std::uint32_t> aux_index_;
  std::vector<AuxiliaryEntry> aux_;
  std::map<NaturalKey, StoredRow> rows_;
  std::size_t bytes_ = 0;
};

}  // namespace

std::unique_ptr<Storage> make_memory_storage() { return std::make_unique<MemoryStorage>(); }

}  // namespace sensorlink
