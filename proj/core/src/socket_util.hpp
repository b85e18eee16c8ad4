#pragma once

// POSIX socket plumbing shared by the daemon and the client links.

#include <netinet/in.h>
#include <sys/socket.h>

#include <cstdint>
#include <string>

#include "sensorlink/bytes.hpp"

namespace sensorlink::detail {

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& other) noexcept : fd_(other.release()) {}
  Fd& operator=(Fd&& other) noexcept;
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() { reset(); }

  int get() const noexcept { return fd_; }
  explicit operator bool() const noexcept { return fd_ >= 0; }
  int release() noexcept {
    int fd = fd_;
    fd_ = -1;
    return fd;
  }
  void reset() noexcept;

 private:
  int fd_ = -1;
};

struct SockAddr {
  sockaddr_storage storage{};
  socklen_t len = 0;

  const sockaddr* get() const noexcept { return reinterpret_cast<const sockaddr*>(&storage); }
  sockaddr* get() noexcept { return reinterpret_cast<sockaddr*>(&storage); }
};

/// Resolves host:port (numeric or name) to an IPv4/IPv6 address. Throws
/// Error(transport_error).
SockAddr resolve(const std::string& host, std::uint16_t port, int socktype);

Fd bind_udp(const std::string& host, std::uint16_t port);
Fd listen_tcp(const std::string& host, std::uint16_t port);
Fd connect_udp(const std::string& host, std::uint16_t port);
Fd connect_tcp(const std::string& host, std::uint16_t port);
std::uint16_t local_port(int fd);

/// Writes everything or returns false.
bool send_all(int fd, ByteView data);

}  // namespace sensorlink::detail
