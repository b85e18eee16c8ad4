#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "sensorlink/codec.hpp"
#include "sensorlink/crypto.hpp"
#include "sensorlink/rows.hpp"
#include "sensorlink/sim.hpp"

namespace sensorlink::testing {

/// The committed 4096-bit key under tests/golden.
const ServerKeyPair& test_keys();
std::filesystem::path golden_dir();

using Gen = std::mt19937_64;

Bytes random_bytes(Gen& g, std::size_t n);
std::string random_text(Gen& g, std::size_t max_len);
MacAddress random_mac(Gen& g);
SessionKey random_key(Gen& g);
UserHash random_hash(Gen& g);

/// A schema-valid row for `stream`. Wifi rows carry a raw (mac, essid) pair
/// unless `allow_ap_id` is set, in which case either form may appear.
Row random_row(Gen& g, Stream stream, bool allow_ap_id = false);
/// 1..max_rows rows spread over random streams, natural keys distinct.
RowBatch random_batch(Gen& g, std::size_t max_rows = 40, bool allow_ap_id = false);

AuthRequest random_auth_request(Gen& g);
AuthResponse random_auth_response(Gen& g);
FeedbackPacket random_feedback(Gen& g);

/// Removes itself on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Experiment with the test key and a short typical workload.
ExperimentConfig small_experiment(std::uint32_t duration_s = 120);

}  // namespace sensorlink::testing
