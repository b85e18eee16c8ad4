#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <optional>
#include <vector>

#include "sensorlink/codec.hpp"
#include "sensorlink/crypto.hpp"
#include "sensorlink/rows.hpp"

namespace sensorlink {

struct JournalHeader {
  UserHash user_hash;
  std::uint64_t start_time = 0;
  std::uint16_t version = 1;
  Identifiers identifiers;
};

/// What survives in a journal: rows with ordinal >= watermark, in order.
struct JournalContents {
  std::optional<JournalHeader> header;
  std::uint64_t watermark = 0;
  std::uint64_t next_ordinal = 0;
  std::vector<RowBatch> pending;  // ordinals watermark .. next_ordinal-1, stream-major per batch

  std::size_t pending_rows() const noexcept;
};

/// Append-only client buffer file. Each record is a 4-byte big-endian
/// length followed by canonical JSON, one of
///   {"kind":"session","hash":..,"time":..,"version":..,"identifiers":{..}}
///   {"kind":"rows","first":<ordinal>,"streams":{..}}
///   {"kind":"ack","watermark":<ordinal>}
/// A torn trailing record (crash mid-append) is ignored on read.
class Journal {
 public:
  /// Creates (or truncates) a journal and writes its session header.
  static std::shared_ptr<Journal> create(const std::filesystem::path& path, const JournalHeader& header);
  /// Opens an existing journal for appending.
  static std::shared_ptr<Journal> open(const std::filesystem::path& path);
  static JournalContents read(const std::filesystem::path& path);

  Journal(const Journal&) = delete;
  Journal& operator=(const Journal&) = delete;
  ~Journal();

  void append_rows(std::uint64_t first_ordinal, const RowBatch& batch);
  void append_watermark(std::uint64_t watermark);

  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  Journal(std::filesystem::path path, std::FILE* file) : path_(std::move(path)), file_(file) {}
  void append(const std::string& json);

  std::mutex mu_;
  std::filesystem::path path_;
  std::FILE* file_;
};

}  // namespace sensorlink
