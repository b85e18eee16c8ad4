#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "sensorlink/client.hpp"
#include "sensorlink/codec.hpp"

namespace sensorlink {

enum class Transport : std::uint8_t { udp, tcp };

std::string_view to_string(Transport t) noexcept;
std::optional<Transport> transport_from_string(std::string_view name) noexcept;

struct ServerAddress {
  std::string host = "127.0.0.1";
  std::uint16_t auth_port = 0;
  std::uint16_t data_port = 0;
};

struct LinkStats {
  std::size_t sent = 0;
  std::size_t received = 0;
  std::size_t send_errors = 0;
  std::size_t reconnects = 0;
};

/// ClientLink over real sockets with a steady wall clock. UDP carries one
/// blob per datagram; TCP carries frame(blob) on one connection per port and
/// reconnects on the next send after the server drops it.
class SocketLink : public ClientLink {
 public:
  virtual const LinkStats& link_stats() const noexcept = 0;
};

/// Throws Error(transport_error) when the host does not resolve or a TCP
/// connection is refused.
std::unique_ptr<SocketLink> connect_link(Transport transport, const ServerAddress& server,
                                         std::size_t max_packet_bytes = kDefaultMaxPacketBytes);

}  // namespace sensorlink
