#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sensorlink {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline ByteView as_bytes(std::string_view text) noexcept {
  return {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()};
}

std::string to_hex(ByteView data);
/// Accepts upper or lower case; throws Error(invalid_argument) on odd length
/// or a non-hex digit.
Bytes from_hex(std::string_view hex);
bool is_lower_hex(std::string_view text) noexcept;

void put_u32_be(Bytes& out, std::uint32_t value);
std::uint32_t get_u32_be(ByteView in);  // in.size() >= 4

}  // namespace sensorlink
