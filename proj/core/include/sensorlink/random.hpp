#pragma once

#include <cstdint>
#include <mutex>
#include <random>
#include <span>

namespace sensorlink {

/// Byte source for keys, IVs and OAEP seeds. Implementations must be safe
/// for concurrent use.
class RandomSource {
 public:
  virtual ~RandomSource() = default;
  virtual void fill(std::span<std::uint8_t> out) = 0;
};

/// OpenSSL CSPRNG. Throws Error(entropy_unavailable) if the generator is
/// not seeded.
class SystemRandom final : public RandomSource {
 public:
  void fill(std::span<std::uint8_t> out) override;
};

SystemRandom& system_random();

/// Reproducible stream for golden vectors and simulation. NOT a CSPRNG.
/// Bytes are the little-endian octets of successive mt19937_64 outputs.
class DeterministicRandom final : public RandomSource {
 public:
  explicit DeterministicRandom(std::uint64_t seed) : engine_(seed) {}
  void fill(std::span<std::uint8_t> out) override;

 private:
  std::mutex mu_;
  std::mt19937_64 engine_;
  std::uint64_t pending_ = 0;
  int pending_bytes_ = 0;
};

}  // namespace sensorlink
