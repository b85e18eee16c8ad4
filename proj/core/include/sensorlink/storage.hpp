#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sensorlink/codec.hpp"
#include "sensorlink/crypto.hpp"
#include "sensorlink/rows.hpp"

namespace sensorlink {

inline constexpr int kSchemaVersion = 1;

struct SessionRecord {
  std::uint32_t session_id = 0;
  UserHash user_hash;
  std::uint64_t start_time = 0;
  SessionKey key;
  std::uint16_t version = 1;
  Identifiers identifiers;
  std::int64_t created_at = 0;  // unix seconds
};

struct SessionKeyInfo {
  SessionKey key;
  UserHash user_hash;
  std::uint64_t start_time = 0;
};

struct StoredRow {
  std::uint32_t session_id = 0;
  Stream stream = Stream::gps;
  Row row;  // wifi rows carry ap_id only

  NaturalKey key() const noexcept { return natural_key(session_id, stream, row); }
  friend bool operator==(const StoredRow&, const StoredRow&) = default;
};

struct AuxiliaryEntry {
  std::uint32_t ap_id = 0;
  MacAddress mac;
  std::string essid;
};

struct RowQuery {
  std::set<Stream> streams;  // empty = all
  std::uint32_t from_ts = 0;
  std::uint32_t to_ts = UINT32_MAX;  // inclusive
};

struct StorageStats {
  std::size_t sessions = 0;
  std::size_t auxiliary_entries = 0;
  std::map<Stream, std::size_t> rows_by_stream;
  std::size_t bytes = 0;  // packed column bytes, see packed_row_bytes()

  std::size_t total_rows() const noexcept;
};

/// Persistence for sessions, gathered rows and auxiliary (interned) data.
///
/// Implementations are safe for one serialized auth writer plus concurrent
/// data writers and readers. Every call is atomic. `write_rows` returns
/// only after the rows are durable for the backend's notion of durability.
/// There is intentionally no call that lists users; the user table is
/// reachable only through upsert_session / lookup_session_key.
class Storage {
 public:
  virtual ~Storage() = default;

  /// Idempotent on (user_hash, start_time): an existing session keeps its
  /// id and has key, version and identifiers overwritten.
  virtual std::uint32_t upsert_session(const UserHash& user_hash, std::uint64_t start_time, const SessionKey& key,
                                       std::uint16_t version, const Identifiers& identifiers) = 0;
  virtual std::optional<SessionKeyInfo> lookup_session_key(std::uint32_t session_id) = 0;
  virtual std::optional<SessionRecord> read_session(std::uint32_t session_id) = 0;

  /// Writes rows, skipping natural-key duplicates, and flushes. Returns the
  /// number of rows of `batch` now present. Throws Error(unknown_session).
  virtual std::size_t write_rows(std::uint32_t session_id, const RowBatch& batch) = 0;

  virtual std::uint32_t intern_auxiliary(const MacAddress& mac, std::string_view essid) = 0;
  virtual std::optional<AuxiliaryEntry> lookup_auxiliary(std::uint32_t ap_id) = 0;

  /// Rows ordered by natural key.
  virtual std::vector<StoredRow> read_session_rows(std::uint32_t session_id, const RowQuery& query = {}) = 0;
  virtual StorageStats storage_stats() = 0;
};

/// Fully synchronized in-process backend.
std::unique_ptr<Storage> make_memory_storage();

/// Single-file SQLite backend (WAL, synchronous=FULL). Creates the schema
/// on first open and refuses files with a different schema version.
std::unique_ptr<Storage> open_sqlite_storage(const std::filesystem::path& path);

/// "memory" or "sqlite:<path>".
std::unique_ptr<Storage> open_storage(std::string_view selector);

/// Resolves wifi ap_id references back to (mac, essid) so stored rows can be
/// compared with what the client sent.
Row resolve_auxiliary(Storage& storage, Stream stream, const Row& stored);

}  // namespace sensorlink
