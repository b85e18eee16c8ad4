#include "sensorlink/journal.hpp"

#include <unistd.h>

#include <fstream>
#include <iterator>

#include "json_codec.hpp"
#include "sensorlink/error.hpp"

namespace sensorlink {

std::size_t JournalContents::pending_rows() const noexcept {
  std::size_t n = 0;
  for (const auto& b : pending) n += b.row_count();
  return n;
}

std::shared_ptr<Journal> Journal::create(const std::filesystem::path& path, const JournalHeader& header) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (f == nullptr) throw Error(Errc::config_error, "cannot create journal " + path.string());
  std::shared_ptr<Journal> journal(new Journal(path, f));
  detail::Json j = detail::Json::object();
  j["kind"] = "session";
  j["hash"] = header.user_hash.hex();
  j["time"] = header.start_time;
  j["version"] = header.version;
  detail::Json ids = detail::Json::object();
  for (const auto& [k, v] : header.identifiers) ids[k] = v;
  j["identifiers"] = std::move(ids);
  journal->append(detail::dump_canonical(j));
  return journal;
}

std::shared_ptr<Journal> Journal::open(const std::filesystem::path& path) {
  read(path);  // validates
  std::FILE* f = std::fopen(path.c_str(), "ab");
  if (f == nullptr) throw Error(Errc::config_error, "cannot open journal " + path.string());
  return std::shared_ptr<Journal>(new Journal(path, f));
}

Journal::~Journal() { std::fclose(file_); }

void Journal::append(const std::string& json) {
  std::lock_guard lock(mu_);
  Bytes record;
  record.reserve(json.size() + 4);
  put_u32_be(record, static_cast<std::uint32_t>(json.size()));
  record.insert(record.end(), json.begin(), json.end());
  if (std::fwrite(record.data(), 1, record.size(), file_) != record.size() || std::fflush(file_) != 0) {
    throw Error(Errc::storage_error, "journal write failed: " + path_.string());
  }
  ::fsync(::fileno(file_));
}

void Journal::append_rows(std::uint64_t first_ordinal, const RowBatch& batch) {
  detail::Json j = detail::Json::object();
  j["kind"] = "rows";
  j["first"] = first_ordinal;
  j["streams"] = detail::batch_to_json(batch);
  append(detail::dump_canonical(j));
}

void Journal::append_watermark(std::uint64_t watermark) {
  append(detail::dump_canonical(detail::Json{{"kind", "ack"}, {"watermark", watermark}}));
}

namespace {

// Drops the first `skip` rows in stream-major order.
RowBatch drop_prefix(const RowBatch& batch, std::size_t skip) {
  RowBatch out;
  for (const auto& [stream, rows] : batch.streams) {
    if (skip >= rows.size()) {
      skip -= rows.size();
      continue;
    }
    out.streams[stream].assign(rows.begin() + static_cast<std::ptrdiff_t>(skip), rows.end());
    skip = 0;
  }
  return out;
}

}  // namespace

JournalContents Journal::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::config_error, "cannot read journal " + path.string());
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  JournalContents contents;
  std::vector<std::pair<std::uint64_t, RowBatch>> batches;
  std::size_t off = 0;
  while (off + 4 <= data.size()) {
    std::uint32_t len = get_u32_be(ByteView(data).subspan(off));
    if (off + 4 + len > data.size()) break;  // torn tail
    std::string_view text(reinterpret_cast<const char*>(data.data() + off + 4), len);
    off += 4 + len;

    auto j = detail::parse_json(text);
    const auto kind = j.value("kind", std::string());
    try {
      if (kind == "session") {
        Identifiers ids;
        for (const auto& [k, v] : j.at("identifiers").items()) ids.emplace(k, v.get<std::string>());
        contents.header = JournalHeader{UserHash::from_hex(j.at("hash").get<std::string>()),
                                        j.at("time").get<std::uint64_t>(), j.at("version").get<std::uint16_t>(),
                                        std::move(ids)};
      } else if (kind == "rows") {
        auto first = j.at("first").get<std::uint64_t>();
        auto batch = detail::batch_from_json(j.at("streams"));
        contents.next_ordinal = std::max(contents.next_ordinal, first + batch.row_count());
        batches.emplace_back(first, std::move(batch));
      } else if (kind == "ack") {
        contents.watermark = std::max(contents.watermark, j.at("watermark").get<std::uint64_t>());
      }
    } catch (const detail::Json::exception& e) {
      throw Error(Errc::malformed_payload, std::string("journal record: ") + e.what());
    }
  }
  if (!contents.header) throw Error(Errc::malformed_payload, "journal has no session header");

  for (auto& [first, batch] : batches) {
    const auto end = first + batch.row_count();
    if (end <= contents.watermark) continue;
    if (first < contents.watermark) {
      contents.pending.push_back(drop_prefix(batch, static_cast<std::size_t>(contents.watermark - first)));
    } else {
      contents.pending.push_back(std::move(batch));
    }
  }
  return contents;
}

}  // namespace sensorlink
