#include "sensorlink/storage.hpp"

#include "sensorlink/error.hpp"

namespace sensorlink {

std::size_t StorageStats::total_rows() const noexcept {
  std::size_t n = 0;
  for (const auto& [_, count] : rows_by_stream) n += count;
  return n;
}

std::unique_ptr<Storage> open_storage(std::string_view selector) {
  if (selector == "memory") return make_memory_storage();
  constexpr std::string_view kSqlite = "sqlite:";
  if (selector.starts_with(kSqlite) && selector.size() > kSqlite.size()) {
    return open_sqlite_storage(std::filesystem::path(std::string(selector.substr(kSqlite.size()))));
  }
  throw Error(Errc::config_error, "unknown storage selector '" + std::string(selector) +
                                      "' (expected 'memory' or 'sqlite:<path>')");
}

Row resolve_auxiliary(Storage& storage, Stream stream, const Row& stored) {
  if (stream != Stream::wifi) return stored;
  const auto* w = std::get_if<WifiObservation>(&stored.payload);
  if (w == nullptr || !w->ap_id) return stored;
  auto entry = storage.lookup_auxiliary(*w->ap_id);
  if (!entry) throw Error(Errc::storage_error, "dangling ap_id " + std::to_string(*w->ap_id));
  Row out = stored;
  out.payload = WifiObservation{std::nullopt, entry->mac, entry->essid, w->rssi};
  return out;
}

}  // namespace sensorlink
