#include "sensorlink/net.hpp"

#include <netdb.h>
#include <poll.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <deque>

#include "sensorlink/error.hpp"
#include "socket_util.hpp"

namespace sensorlink {

namespace detail {

Fd& Fd::operator=(Fd&& other) noexcept {
  if (this != &other) {
    reset();
    fd_ = other.release();
  }
  return *this;
}

void Fd::reset() noexcept {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

SockAddr resolve(const std::string& host, std::uint16_t port, int socktype) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = socktype;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(), service.c_str(), &hints, &res); rc != 0) {
    throw Error(Errc::transport_error, "cannot resolve " + host + ": " + ::gai_strerror(rc));
  }
  SockAddr out;
  std::memcpy(&out.storage, res->ai_addr, res->ai_addrlen);
  out.len = static_cast<socklen_t>(res->ai_addrlen);
  ::freeaddrinfo(res);
  return out;
}

namespace {

[[noreturn]] void fail(const std::string& what) {
  throw Error(Errc::transport_error, what + ": " + std::strerror(errno));
}

Fd open_socket(const SockAddr& addr, int type) {
  Fd fd(::socket(addr.storage.ss_family, type | SOCK_CLOEXEC, 0));
  if (!fd) fail("socket");
  return fd;
}

}  // namespace

Fd bind_udp(const std::string& host, std::uint16_t port) {
  auto addr = resolve(host, port, SOCK_DGRAM);
  Fd fd = open_socket(addr, SOCK_DGRAM);
  // Absorb upload bursts; the kernel clamps this to net.core.rmem_max.
  const int rcvbuf = 4 * 1024 * 1024;
  ::setsockopt(fd.get(), SOL_SOCKET, SO_RCVBUF, &rcvbuf, sizeof rcvbuf);
  if (::bind(fd.get(), addr.get(), addr.len) != 0) fail("bind udp " + host + ":" + std::to_string(port));
  return fd;
}

Fd listen_tcp(const std::string& host, std::uint16_t port) {
  auto addr = resolve(host, port, SOCK_STREAM);
  Fd fd = open_socket(addr, SOCK_STREAM);
  int one = 1;
  ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(fd.get(), addr.get(), addr.len) != 0) fail("bind tcp " + host + ":" + std::to_string(port));
  if (::listen(fd.get(), 64) != 0) fail("listen");
  return fd;
}

Fd connect_udp(const std::string& host, std::uint16_t port) {
  auto addr = resolve(host, port, SOCK_DGRAM);
  Fd fd = open_socket(addr, SOCK_DGRAM);
  if (::connect(fd.get(), addr.get(), addr.len) != 0) fail("connect udp");
  return fd;
}

Fd connect_tcp(const std::string& host, std::uint16_t port) {
  auto addr = resolve(host, port, SOCK_STREAM);
  Fd fd = open_socket(addr, SOCK_STREAM);
  if (::connect(fd.get(), addr.get(), addr.len) != 0) fail("connect tcp " + host + ":" + std::to_string(port));
  return fd;
}

std::uint16_t local_port(int fd) {
  SockAddr addr;
  addr.len = sizeof addr.storage;
  if (::getsockname(fd, addr.get(), &addr.len) != 0) fail("getsockname");
  if (addr.storage.ss_family == AF_INET6) {
    return ntohs(reinterpret_cast<const sockaddr_in6*>(&addr.storage)->sin6_port);
  }
  return ntohs(reinterpret_cast<const sockaddr_in*>(&addr.storage)->sin_port);
}

bool send_all(int fd, ByteView data) {
  std::size_t off = 0;
  while (off < data.size()) {
    ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    off += static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace detail

std::string_view to_string(Transport t) noexcept { return t == Transport::udp ? "udp" : "tcp"; }

std::optional<Transport> transport_from_string(std::string_view name) noexcept {
  if (name == "udp") return Transport::udp;
  if (name == "tcp") return Transport::tcp;
  return std::nullopt;
}

namespace {

using detail::Fd;

class SteadyClock {
 public:
  Millis now() const {
    return std::chrono::duration_cast<Millis>(std::chrono::steady_clock::now() - start_);
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

int poll_timeout(Millis now, Millis deadline) {
  if (deadline <= now) return 0;
  return static_cast<int>(std::min<Millis::rep>((deadline - now).count(), 60'000));
}

class UdpLink final : public SocketLink {
 public:
  UdpLink(const ServerAddress& server, std::size_t max_packet_bytes)
      : auth_(detail::connect_udp(server.host, server.auth_port)),
        data_(detail::connect_udp(server.host, server.data_port)),
        buffer_(std::max<std::size_t>(max_packet_bytes, 1) + 1) {}

  Millis now() override { return clock_.now(); }

  void send(const Outgoing& out) override {
    const int fd = out.channel == Channel::auth ? auth_.get() : data_.get();
    if (::send(fd, out.wire.data(), out.wire.size(), 0) < 0) {
      ++stats_.send_errors;  // e.g. ECONNREFUSED from an earlier ICMP; the retry timer covers it
    } else {
      ++stats_.sent;
    }
  }

  std::optional<Incoming> wait(Millis deadline) override {
    while (true) {
      std::array<pollfd, 2> fds{pollfd{auth_.get(), POLLIN, 0}, pollfd{data_.get(), POLLIN, 0}};
      const Millis t = now();
      int rc = ::poll(fds.data(), fds.size(), poll_timeout(t, deadline));
      if (rc < 0 && errno == EINTR) continue;
      if (rc <= 0) {
        if (now() >= deadline) return std::nullopt;
        continue;
      }
      for (std::size_t i = 0; i < fds.size(); ++i) {
        if ((fds[i].revents & POLLIN) == 0) continue;
        ssize_t n = ::recv(fds[i].fd, buffer_.data(), buffer_.size(), 0);
        if (n <= 0 || static_cast<std::size_t>(n) >= buffer_.size()) continue;  // error or oversized
        ++stats_.received;
        return Incoming{i == 0 ? Channel::auth : Channel::data, Bytes(buffer_.begin(), buffer_.begin() + n)};
      }
    }
  }

  const LinkStats& link_stats() const noexcept override { return stats_; }

 private:
  SteadyClock clock_;
  Fd auth_;
  Fd data_;
  Bytes buffer_;
  LinkStats stats_;
};

class TcpLink final : public SocketLink {
 public:
  TcpLink(const ServerAddress& server, std::size_t max_packet_bytes)
      : server_(server),
        max_packet_bytes_(max_packet_bytes),
        conns_{Conn{detail::connect_tcp(server.host, server.auth_port), FrameDecoder(max_packet_bytes)},
               Conn{detail::connect_tcp(server.host, server.data_port), FrameDecoder(max_packet_bytes)}} {}

  Millis now() override { return clock_.now(); }

  void send(const Outgoing& out) override {
    const std::size_t i = out.channel == Channel::auth ? 0 : 1;
    auto& conn = conns_[i];
    if (!conn.fd) {
      try {
        conn.fd = detail::connect_tcp(server_.host, i == 0 ? server_.auth_port : server_.data_port);
        conn.decoder = FrameDecoder(max_packet_bytes_);
        ++stats_.reconnects;
      } catch (const Error&) {
        ++stats_.send_errors;
        return;
      }
    }
    if (detail::send_all(conn.fd.get(), frame(out.wire))) {
      ++stats_.sent;
    } else {
      ++stats_.send_errors;
      conn.fd.reset();
    }
  }

  std::optional<Incoming> wait(Millis deadline) override {
    while (true) {
      if (!ready_.empty()) {
        auto in = std::move(ready_.front());
        ready_.pop_front();
        return in;
      }
      std::array<pollfd, 2> fds{pollfd{conns_[0].fd.get(), POLLIN, 0}, pollfd{conns_[1].fd.get(), POLLIN, 0}};
      const Millis t = now();
      int rc = ::poll(fds.data(), fds.size(), poll_timeout(t, deadline));
      if (rc < 0 && errno == EINTR) continue;
      if (rc <= 0) {
        if (now() >= deadline) return std::nullopt;
        continue;
      }
      for (std::size_t i = 0; i < fds.size(); ++i) {
        if (fds[i].fd < 0 || (fds[i].revents & (POLLIN | POLLHUP | POLLERR)) == 0) continue;
        read_from(i);
      }
    }
  }

  const LinkStats& link_stats() const noexcept override { return stats_; }

 private:
  struct Conn {
    Fd fd;
    FrameDecoder decoder;
  };

  void read_from(std::size_t i) {
    auto& conn = conns_[i];
    std::uint8_t chunk[16384];
    ssize_t n = ::recv(conn.fd.get(), chunk, sizeof chunk, 0);
    if (n <= 0) {
      conn.fd.reset();
      return;
    }
    try {
      conn.decoder.feed(ByteView(chunk, static_cast<std::size_t>(n)));
      while (auto blob = conn.decoder.next()) {
        ++stats_.received;
        ready_.push_back(Incoming{i == 0 ? Channel::auth : Channel::data, std::move(*blob)});
      }
    } catch (const Error&) {
      conn.fd.reset();
    }
  }

  SteadyClock clock_;
  ServerAddress server_;
  std::size_t max_packet_bytes_;
  std::array<Conn, 2> conns_;
  std::deque<Incoming> ready_;
  LinkStats stats_;
};

}  // namespace

std::unique_ptr<SocketLink> connect_link(Transport transport, const ServerAddress& server,
                                         std::size_t max_packet_bytes) {
  if (transport == Transport::udp) return std::make_unique<UdpLink>(server, max_packet_bytes);
  return std::make_unique<TcpLink>(server, max_packet_bytes);
}

}  // namespace sensorlink
