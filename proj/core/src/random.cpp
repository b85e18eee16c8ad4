#include "sensorlink/random.hpp"

#include <openssl/rand.h>

#include <climits>

#include "sensorlink/error.hpp"

namespace sensorlink {

void SystemRandom::fill(std::span<std::uint8_t> out) {
  std::size_t done = 0;
  while (done < out.size()) {
    std::size_t chunk = std::min<std::size_t>(out.size() - done, INT_MAX);
    if (RAND_bytes(out.data() + done, static_cast<int>(chunk)) != 1) {
      throw Error(Errc::entropy_unavailable, "RAND_bytes failed");
    }
    done += chunk;
  }
}

SystemRandom& system_random() {
  static SystemRandom instance;
  return instance;
}

void DeterministicRandom::fill(std::span<std::uint8_t> out) {
  std::lock_guard lock(mu_);
  for (auto& b : out) {
    if (pending_bytes_ == 0) {
      pending_ = engine_();
      pending_bytes_ = 8;
    }
    b = static_cast<std::uint8_t>(pending_ & 0xff);
    pending_ >>= 8;
    --pending_bytes_;
  }
}

}  // namespace sensorlink
