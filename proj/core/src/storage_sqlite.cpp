#include <type_traits>
#include <sqlite3.h>

#include <algorithm>
#include <chrono>
#include <mutex>

#include "json_codec.hpp"
#include "sensorlink/error.hpp"
#include "sensorlink/storage.hpp"

namespace sensorlink {
namespace {

constexpr const char* kSchema = R"sql(
CREATE TABLE IF NOT EXISTS meta (
  key   TEXT PRIMARY KEY,
  value TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS users (
  user_id   INTEGER PRIMARY KEY,
  user_hash TEXT NOT NULL UNIQUE
);
CREATE TABLE IF NOT EXISTS sessions (
  session_id  INTEGER PRIMARY KEY AUTOINCREMENT,
  user_id     INTEGER NOT NULL REFERENCES users(user_id),
  start_time  INTEGER NOT NULL,
  aes_key     BLOB NOT NULL,
  version     INTEGER NOT NULL,
  identifiers TEXT NOT NULL,
  created_at  INTEGER NOT NULL,
  UNIQUE (user_id, start_time)
);
CREATE TABLE IF NOT EXISTS wifi_aps (
  ap_id INTEGER PRIMARY KEY AUTOINCREMENT,
  mac   INTEGER NOT NULL,
  essid TEXT NOT NULL,
  UNIQUE (mac, essid)
);
CREATE TABLE IF NOT EXISTS gps (
  session_id INTEGER NOT NULL, ts INTEGER NOT NULL, ms INTEGER NOT NULL, idx INTEGER NOT NULL,
  lat REAL NOT NULL, lon REAL NOT NULL, alt REAL NOT NULL, speed REAL NOT NULL, accuracy REAL NOT NULL,
  device_ts INTEGER NOT NULL,
  PRIMARY KEY (session_id, ts, ms, idx)
) WITHOUT ROWID;
CREATE TABLE IF NOT EXISTS motion (
  session_id INTEGER NOT NULL, stream INTEGER NOT NULL, ts INTEGER NOT NULL, ms INTEGER NOT NULL,
  idx INTEGER NOT NULL, rate INTEGER NOT NULL, samples BLOB NOT NULL,
  PRIMARY KEY (session_id, stream, ts, ms, idx)
) WITHOUT ROWID;
CREATE TABLE IF NOT EXISTS wifi (
  session_id INTEGER NOT NULL, ts INTEGER NOT NULL, ms INTEGER NOT NULL, idx INTEGER NOT NULL,
  ap_id INTEGER NOT NULL REFERENCES wifi_aps(ap_id), rssi INTEGER NOT NULL,
  PRIMARY KEY (session_id, ts, ms, idx)
) WITHOUT ROWID;
CREATE TABLE IF NOT EXISTS bt (
  session_id INTEGER NOT NULL, ts INTEGER NOT NULL, ms INTEGER NOT NULL, idx INTEGER NOT NULL,
  device INTEGER NOT NULL, rssi INTEGER NOT NULL,
  PRIMARY KEY (session_id, ts, ms, idx)
) WITHOUT ROWID;
CREATE TABLE IF NOT EXISTS pressure (
  session_id INTEGER NOT NULL, ts INTEGER NOT NULL, ms INTEGER NOT NULL, idx INTEGER NOT NULL,
  hpa REAL NOT NULL,
  PRIMARY KEY (session_id, ts, ms, idx)
) WITHOUT ROWID;
CREATE TABLE IF NOT EXISTS obd (
  session_id INTEGER NOT NULL, ts INTEGER NOT NULL, ms INTEGER NOT NULL, idx INTEGER NOT NULL,
  pid INTEGER NOT NULL, value INTEGER NOT NULL,
  PRIMARY KEY (session_id, ts, ms, idx)
) WITHOUT ROWID;
CREATE TABLE IF NOT EXISTS events (
  session_id INTEGER NOT NULL, ts INTEGER NOT NULL, ms INTEGER NOT NULL, idx INTEGER NOT NULL,
  kind TEXT NOT NULL, detail TEXT NOT NULL,
  PRIMARY KEY (session_id, ts, ms, idx)
) WITHOUT ROWID;
)sql";

std::int64_t unix_now() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

class Statement {
 public:
  Statement(sqlite3* db, const char* sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) {
      throw Error(Errc::storage_error, std::string("prepare: ") + sqlite3_errmsg(db));
    }
  }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;
  ~Statement() { sqlite3_finalize(stmt_); }

  Statement& reset() {
    sqlite3_reset(stmt_);
    sqlite3_clear_bindings(stmt_);
    return *this;
  }
  Statement& bind(int i, std::int64_t v) {
    check(sqlite3_bind_int64(stmt_, i, v));
    return *this;
  }
  Statement& bind(int i, double v) {
    check(sqlite3_bind_double(stmt_, i, v));
    return *this;
  }
  Statement& bind(int i, std::string_view v) {
    check(sqlite3_bind_text(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT));
    return *this;
  }
  Statement& bind_blob(int i, ByteView v) {
    check(sqlite3_bind_blob(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT));
    return *this;
  }

  /// true while a row is available.
  bool step() {
    int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    throw Error(Errc::storage_error, std::string("step: ") + sqlite3_errmsg(db_));
  }
  void run() {
    while (step()) {
    }
  }

  std::int64_t i64(int col) const { return sqlite3_column_int64(stmt_, col); }
  double f64(int col) const { return sqlite3_column_double(stmt_, col); }
  std::string text(int col) const {
    const auto* p = sqlite3_column_text(stmt_, col);
    return p ? std::string(reinterpret_cast<const char*>(p), static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col)))
             : std::string();
  }
  Bytes blob(int col) const {
    const auto* p = static_cast<const std::uint8_t*>(sqlite3_column_blob(stmt_, col));
    return p ? Bytes(p, p + sqlite3_column_bytes(stmt_, col)) : Bytes();
  }

 private:
  void check(int rc) {
    if (rc != SQLITE_OK) throw Error(Errc::storage_error, std::string("bind: ") + sqlite3_errmsg(db_));
  }
  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

Bytes pack_samples(const std::vector<Triplet>& samples) {
  Bytes out;
  out.reserve(samples.size() * kMotionSampleBytes);
  for (const auto& t : samples) {
    for (auto v : t) {
      auto u = static_cast<std::uint16_t>(v);
      out.push_back(static_cast<std::uint8_t>(u & 0xff));
      out.push_back(static_cast<std::uint8_t>(u >> 8));
    }
  }
  return out;
}

std::vector<Triplet> unpack_samples(const Bytes& blob) {
  std::vector<Triplet> out(blob.size() / kMotionSampleBytes);
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      std::size_t off = i * kMotionSampleBytes + c * 2;
      out[i][c] = static_cast<std::int16_t>(static_cast<std::uint16_t>(blob[off] | (blob[off + 1] << 8)));
    }
  }
  return out;
}

Identifiers identifiers_from_text(const std::string& text) {
  Identifiers ids;
  auto j = detail::parse_json(text);
  for (const auto& [k, v] : j.items()) ids.emplace(k, v.get<std::string>());
  return ids;
}

std::string identifiers_to_text(const Identifiers& ids) {
  detail::Json j = detail::Json::object();
  for (const auto& [k, v] : ids) j[k] = v;
  return detail::dump_canonical(j);
}

Row base_row(const Statement& q, int ts_col) {
  Row row;
  row.ts = static_cast<std::uint32_t>(q.i64(ts_col));
  auto ms = q.i64(ts_col + 1);
  if (ms >= 0) row.ms = static_cast<std::uint16_t>(ms);
  row.idx = static_cast<std::uint16_t>(q.i64(ts_col + 2));
  return row;
}

class SqliteStorage final : public Storage {
 public:
  explicit SqliteStorage(const std::filesystem::path& path) {
    int rc = sqlite3_open_v2(path.c_str(), &db_, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                             nullptr);
    if (rc != SQLITE_OK) {
      std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
      sqlite3_close(db_);
      throw Error(Errc::storage_error, "open " + path.string() + ": " + msg);
    }
    try {
      exec("PRAGMA journal_mode=WAL");
      exec("PRAGMA synchronous=FULL");
      exec("PRAGMA foreign_keys=ON");
      sqlite3_busy_timeout(db_, 5000);
      exec("BEGIN IMMEDIATE");
      exec(kSchema);
      std::optional<std::string> existing;
      {
        Statement ver(db_, "SELECT value FROM meta WHERE key = 'schema_version'");
        if (ver.step()) existing = ver.text(0);
      }
      if (!existing) {
        Statement ins(db_, "INSERT INTO meta(key, value) VALUES ('schema_version', ?)");
        ins.bind(1, std::to_string(kSchemaVersion)).run();
      } else if (*existing != std::to_string(kSchemaVersion)) {
        throw Error(Errc::storage_error, "schema version " + *existing + " is not supported");
      }
      exec("COMMIT");
    } catch (...) {
      sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
      sqlite3_close(db_);
      throw;
    }
  }

  ~SqliteStorage() override {
    for (auto& s : stmts_) s.reset();
    sqlite3_close(db_);
  }

  std::uint32_t upsert_session(const UserHash& user_hash, std::uint64_t start_time, const SessionKey& key,
                               std::uint16_t version, const Identifiers& identifiers) override {
    std::lock_guard lock(mu_);
    return transaction([&] {
      Statement(db_, "INSERT OR IGNORE INTO users(user_hash) VALUES (?)").bind(1, user_hash.hex()).run();
      Statement uq(db_, "SELECT user_id FROM users WHERE user_hash = ?");
      uq.bind(1, user_hash.hex());
      if (!uq.step()) throw Error(Errc::storage_error, "user row missing after insert");
      const auto user_id = uq.i64(0);

      Statement up(db_,
                   "INSERT INTO sessions(user_id, start_time, aes_key, version, identifiers, created_at) "
                   "VALUES (?, ?, ?, ?, ?, ?) "
                   "ON CONFLICT(user_id, start_time) DO UPDATE SET "
                   "aes_key = excluded.aes_key, version = excluded.version, identifiers = excluded.identifiers");
      up.bind(1, user_id)
          .bind(2, static_cast<std::int64_t>(start_time))
          .bind_blob(3, key.bytes)
          .bind(4, std::int64_t{version})
          .bind(5, identifiers_to_text(identifiers))
          .bind(6, unix_now())
          .run();

      Statement sq(db_, "SELECT session_id FROM sessions WHERE user_id = ? AND start_time = ?");
      sq.bind(1, user_id).bind(2, static_cast<std::int64_t>(start_time));
      if (!sq.step()) throw Error(Errc::storage_error, "session row missing after upsert");
      const auto id = sq.i64(0);
      if (id <= 0 || id > UINT32_MAX) throw Error(Errc::storage_error, "session id space exhausted");
      return static_cast<std::uint32_t>(id);
    });
  }

  std::optional<SessionKeyInfo> lookup_session_key(std::uint32_t session_id) override {
    auto rec = read_session(session_id);
    if (!rec) return std::nullopt;
    return SessionKeyInfo{rec->key, rec->user_hash, rec->start_time};
  }

  std::optional<SessionRecord> read_session(std::uint32_t session_id) override {
    std::lock_guard lock(mu_);
    Statement q(db_,
                "SELECT s.session_id, u.user_hash, s.start_time, s.aes_key, s.version, s.identifiers, s.created_at "
                "FROM sessions s JOIN users u ON u.user_id = s.user_id WHERE s.session_id = ?");
    q.bind(1, std::int64_t{session_id});
    if (!q.step()) return std::nullopt;
    Bytes key = q.blob(3);
    if (key.size() != kSessionKeyBytes) throw Error(Errc::storage_error, "corrupt session key");
    SessionRecord rec{session_id, UserHash::from_hex(q.text(1)), static_cast<std::uint64_t>(q.i64(2)), {},
                      static_cast<std::uint16_t>(q.i64(4)), identifiers_from_text(q.text(5)), q.i64(6)};
    std::copy(key.begin(), key.end(), rec.key.bytes.begin());
    return rec;
  }

  std::size_t write_rows(std::uint32_t session_id, const RowBatch& batch) override {
    validate_batch(batch);
    std::lock_guard lock(mu_);
    return transaction([&]() -> std::size_t {
      Statement sq(db_, "SELECT 1 FROM sessions WHERE session_id = ?");
      sq.bind(1, std::int64_t{session_id});
      if (!sq.step()) throw Error(Errc::unknown_session, std::to_string(session_id));

      std::size_t present = 0;
      for (const auto& [stream, rows] : batch.streams) {
        for (const auto& row : rows) {
          if (insert_row(session_id, stream, row)) ++present;
        }
      }
      return present;
    });
  }

  std::uint32_t intern_auxiliary(const MacAddress& mac, std::string_view essid) override {
    std::lock_guard lock(mu_);
    return transaction([&] { return intern_locked(mac, essid); });
  }

  std::optional<AuxiliaryEntry> lookup_auxiliary(std::uint32_t ap_id) override {
    std::lock_guard lock(mu_);
    Statement q(db_, "SELECT mac, essid FROM wifi_aps WHERE ap_id = ?");
    q.bind(1, std::int64_t{ap_id});
    if (!q.step()) return std::nullopt;
    return AuxiliaryEntry{ap_id, MacAddress::from_integer(static_cast<std::uint64_t>(q.i64(0))), q.text(1)};
  }

  std::vector<StoredRow> read_session_rows(std::uint32_t session_id, const RowQuery& query) override {
    std::lock_guard lock(mu_);
    std::vector<StoredRow> out;
    auto wanted = [&](Stream s) { return query.streams.empty() || query.streams.contains(s); };
    auto select = [&](const char* sql) {
      auto q = std::make_unique<Statement>(db_, sql);
      q->bind(1, std::int64_t{session_id}).bind(2, std::int64_t{query.from_ts}).bind(3, std::int64_t{query.to_ts});
      return q;
    };
    constexpr const char* kRange = " WHERE session_id = ? AND ts BETWEEN ? AND ?";
    if (wanted(Stream::gps)) {
      auto q = select((std::string("SELECT ts, ms, idx, lat, lon, alt, speed, accuracy, device_ts FROM gps") + kRange).c_str());
      while (q->step()) {
        Row row = base_row(*q, 0);
        row.payload = GpsFix{q->f64(3), q->f64(4), q->f64(5), q->f64(6), q->f64(7), q->i64(8)};
        out.push_back({session_id, Stream::gps, std::move(row)});
      }
    }
    if (wanted(Stream::accel) || wanted(Stream::gyro) || wanted(Stream::mag)) {
      auto q = select((std::string("SELECT stream, ts, ms, idx, rate, samples FROM motion") + kRange).c_str());
      while (q->step()) {
        auto stream = static_cast<Stream>(q->i64(0));
        if (!wanted(stream)) continue;
        Row row = base_row(*q, 1);
        row.payload = MotionSamples{static_cast<std::uint16_t>(q->i64(4)), unpack_samples(q->blob(5))};
        out.push_back({session_id, stream, std::move(row)});
      }
    }
    if (wanted(Stream::wifi)) {
      auto q = select((std::string("SELECT ts, ms, idx, ap_id, rssi FROM wifi") + kRange).c_str());
      while (q->step()) {
        Row row = base_row(*q, 0);
        row.payload = WifiObservation{static_cast<std::uint32_t>(q->i64(3)), std::nullopt, std::nullopt,
                                      static_cast<std::int16_t>(q->i64(4))};
        out.push_back({session_id, Stream::wifi, std::move(row)});
      }
    }
    if (wanted(Stream::bt)) {
      auto q = select((std::string("SELECT ts, ms, idx, device, rssi FROM bt") + kRange).c_str());
      while (q->step()) {
        Row row = base_row(*q, 0);
        row.payload = BtObservation{MacAddress::from_integer(static_cast<std::uint64_t>(q->i64(3))),
                                    static_cast<std::int16_t>(q->i64(4))};
        out.push_back({session_id, Stream::bt, std::move(row)});
      }
    }
    if (wanted(Stream::pressure)) {
      auto q = select((std::string("SELECT ts, ms, idx, hpa FROM pressure") + kRange).c_str());
      while (q->step()) {
        Row row = base_row(*q, 0);
        row.payload = PressureSample{q->f64(3)};
        out.push_back({session_id, Stream::pressure, std::move(row)});
      }
    }
    if (wanted(Stream::obd)) {
      auto q = select((std::string("SELECT ts, ms, idx, pid, value FROM obd") + kRange).c_str());
      while (q->step()) {
        Row row = base_row(*q, 0);
        row.payload = ObdReading{static_cast<std::uint16_t>(q->i64(3)), static_cast<std::uint16_t>(q->i64(4))};
        out.push_back({session_id, Stream::obd, std::move(row)});
      }
    }
    if (wanted(Stream::events)) {
      auto q = select((std::string("SELECT ts, ms, idx, kind, detail FROM events") + kRange).c_str());
      while (q->step()) {
        Row row = base_row(*q, 0);
        row.payload = EventRecord{q->text(3), q->text(4)};
        out.push_back({session_id, Stream::events, std::move(row)});
      }
    }
    std::sort(out.begin(), out.end(), [](const StoredRow& a, const StoredRow& b) { return a.key() < b.key(); });
    return out;
  }

  StorageStats storage_stats() override {
    std::lock_guard lock(mu_);
    StorageStats stats;
    auto scalar = [&](const std::string& sql) {
      Statement q(db_, sql.c_str());
      return q.step() ? static_cast<std::size_t>(q.i64(0)) : std::size_t{0};
    };
    stats.sessions = scalar("SELECT COUNT(*) FROM sessions");
    stats.auxiliary_entries = scalar("SELECT COUNT(*) FROM wifi_aps");

    auto fixed = [&](Stream s, const char* table, std::size_t row_bytes) {
      auto n = scalar(std::string("SELECT COUNT(*) FROM ") + table);
      if (n > 0) stats.rows_by_stream[s] = n;
      stats.bytes += n * row_bytes;
    };
    fixed(Stream::gps, "gps", kGpsRowBytes);
    fixed(Stream::wifi, "wifi", kWifiRowBytes);
    fixed(Stream::bt, "bt", kBtRowBytes);
    fixed(Stream::pressure, "pressure", kPressureRowBytes);
    fixed(Stream::obd, "obd", kObdRowBytes);

    Statement motion(db_, "SELECT stream, COUNT(*), SUM(LENGTH(samples)) FROM motion GROUP BY stream");
    while (motion.step()) {
      auto n = static_cast<std::size_t>(motion.i64(1));
      stats.rows_by_stream[static_cast<Stream>(motion.i64(0))] = n;
      stats.bytes += n * kRowHeaderBytes + static_cast<std::size_t>(motion.i64(2));
    }
    Statement events(db_,
                     "SELECT COUNT(*), COALESCE(SUM(LENGTH(CAST(kind AS BLOB)) + LENGTH(CAST(detail AS BLOB))), 0) "
                     "FROM events");
    if (events.step() && events.i64(0) > 0) {
      auto n = static_cast<std::size_t>(events.i64(0));
      stats.rows_by_stream[Stream::events] = n;
      stats.bytes += n * kEventRowBytes + static_cast<std::size_t>(events.i64(1));
    }
    return stats;
  }

 private:
  void exec(const char* sql) {
    char* err = nullptr;
    if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
      std::string msg = err ? err : "unknown";
      sqlite3_free(err);
      throw Error(Errc::storage_error, msg);
    }
  }

  template <typename F>
  std::invoke_result_t<F&> transaction(F&& body) {
    exec("BEGIN IMMEDIATE");
    try {
      auto result = body();
      exec("COMMIT");
      return result;
    } catch (...) {
      sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
      throw;
    }
  }

  std::uint32_t intern_locked(const MacAddress& mac, std::string_view essid) {
    const auto mac_int = static_cast<std::int64_t>(mac.as_integer());
    Statement ins(db_, "INSERT OR IGNORE INTO wifi_aps(mac, essid) VALUES (?, ?)");
    ins.bind(1, mac_int).bind(2, essid).run();
    Statement q(db_, "SELECT ap_id FROM wifi_aps WHERE mac = ? AND essid = ?");
    q.bind(1, mac_int).bind(2, essid);
    if (!q.step()) throw Error(Errc::storage_error, "ap row missing after insert");
    return static_cast<std::uint32_t>(q.i64(0));
  }

  Statement& cached(int slot, const char* sql) {
    auto& s = stmts_[static_cast<std::size_t>(slot)];
    if (!s) s = std::make_unique<Statement>(db_, sql);
    return s->reset();
  }

  // false when the row references an unknown ap_id and was skipped.
  bool insert_row(std::uint32_t session_id, Stream stream, const Row& row) {
    const std::int64_t sid = session_id;
    const std::int64_t ms = row.ms ? std::int64_t{*row.ms} : -1;
    auto key = [&](Statement& s, int first) -> Statement& {
      return s.bind(first, sid).bind(first + 1, std::int64_t{row.ts}).bind(first + 2, ms).bind(first + 3,
                                                                                                std::int64_t{row.idx});
    };
    switch (stream) {
      case Stream::gps: {
        const auto& g = std::get<GpsFix>(row.payload);
        auto& s = cached(0, "INSERT OR IGNORE INTO gps VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)");
        key(s, 1).bind(5, g.lat).bind(6, g.lon).bind(7, g.alt).bind(8, g.speed).bind(9, g.accuracy).bind(10, g.device_ts);
        s.run();
        return true;
      }
      case Stream::accel:
      case Stream::gyro:
      case Stream::mag: {
        const auto& m = std::get<MotionSamples>(row.payload);
        auto& s = cached(1, "INSERT OR IGNORE INTO motion VALUES (?, ?, ?, ?, ?, ?, ?)");
        s.bind(1, sid).bind(2, static_cast<std::int64_t>(stream)).bind(3, std::int64_t{row.ts}).bind(4, ms);
        s.bind(5, std::int64_t{row.idx}).bind(6, std::int64_t{m.rate}).bind_blob(7, pack_samples(m.samples));
        s.run();
        return true;
      }
      case Stream::wifi: {
        const auto& w = std::get<WifiObservation>(row.payload);
        std::uint32_t ap_id = 0;
        if (w.ap_id) {
          Statement q(db_, "SELECT 1 FROM wifi_aps WHERE ap_id = ?");
          q.bind(1, std::int64_t{*w.ap_id});
          if (!q.step()) return false;
          ap_id = *w.ap_id;
        } else {
          ap_id = intern_locked(*w.mac, *w.essid);
        }
        auto& s = cached(2, "INSERT OR IGNORE INTO wifi VALUES (?, ?, ?, ?, ?, ?)");
        key(s, 1).bind(5, std::int64_t{ap_id}).bind(6, std::int64_t{w.rssi});
        s.run();
        return true;
      }
      case Stream::bt: {
        const auto& b = std::get<BtObservation>(row.payload);
        auto& s = cached(3, "INSERT OR IGNORE INTO bt VALUES (?, ?, ?, ?, ?, ?)");
        key(s, 1).bind(5, static_cast<std::int64_t>(b.device.as_integer())).bind(6, std::int64_t{b.rssi});
        s.run();
        return true;
      }
      case Stream::pressure: {
        auto& s = cached(4, "INSERT OR IGNORE INTO pressure VALUES (?, ?, ?, ?, ?)");
        key(s, 1).bind(5, std::get<PressureSample>(row.payload).hpa);
        s.run();
        return true;
      }
      case Stream::obd: {
        const auto& o = std::get<ObdReading>(row.payload);
        auto& s = cached(5, "INSERT OR IGNORE INTO obd VALUES (?, ?, ?, ?, ?, ?)");
        key(s, 1).bind(5, std::int64_t{o.pid}).bind(6, std::int64_t{o.value});
        s.run();
        return true;
      }
      case Stream::events: {
        const auto& e = std::get<EventRecord>(row.payload);
        auto& s = cached(6, "INSERT OR IGNORE INTO events VALUES (?, ?, ?, ?, ?, ?)");
        key(s, 1).bind(5, e.kind).bind(6, e.detail);
        s.run();
        return true;
      }
    }
    return false;
  }

  std::mutex mu_;
  sqlite3* db_ = nullptr;
  std::array<std::unique_ptr<Statement>, 7> stmts_;
};

}  // namespace

std::unique_ptr<Storage> open_sqlite_storage(const std::filesystem::path& path) {
  return std::make_unique<SqliteStorage>(path);
}

}  // namespace sensorlink
