#include "sensorlink/daemon.hpp"

#include <poll.h>
#include <unistd.h>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <condition_variable>
#include <deque>
#include <list>
#include <mutex>
#include <thread>
#include <vector>

#include "sensorlink/error.hpp"
#include "sensorlink/net.hpp"
#include "socket_util.hpp"

namespace sensorlink {

namespace {

using detail::Fd;
using detail::SockAddr;

template <typename T>
class BlockingQueue {
 public:
  void push(T value) {
    {
      std::lock_guard lock(mu_);
      items_.push_back(std::move(value));
    }
    cv_.notify_one();
  }

  /// nullopt once closed and empty.
  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T v = std::move(items_.front());
    items_.pop_front();
    return v;
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return items_.size();
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<T> items_;
  bool closed_ = false;
};

struct TcpConn {
  std::mutex mu;  // guards fd for writers on other threads
  Fd fd;
  FrameDecoder decoder;
  std::string peer;

  TcpConn(Fd f, std::size_t max_frame) : fd(std::move(f)), decoder(max_frame) {}

  void write(ByteView blob) {
    std::lock_guard lock(mu);
    if (!fd) return;
    if (!detail::send_all(fd.get(), frame(blob))) fd.reset();
  }

  void close() {
    std::lock_guard lock(mu);
    fd.reset();
  }
};

struct Route {
  Transport transport = Transport::udp;
  int udp_fd = -1;
  SockAddr peer;
  std::shared_ptr<TcpConn> conn;

  void reply(ByteView blob) const {
    if (transport == Transport::udp) {
      ::sendto(udp_fd, blob.data(), blob.size(), 0, peer.get(), peer.len);
    } else if (conn) {
      conn->write(blob);
    }
  }
};

struct Job {
  Bytes blob;
  Route route;
};

struct DataJob {
  DecodedData data;
  Route route;
};

struct Port {
  std::uint16_t number = 0;
  Fd udp;
  Fd tcp;
};

Port bind_port(const DaemonConfig& config, std::uint16_t requested) {
  for (int attempt = 0; attempt < 32; ++attempt) {
    Port port;
    std::uint16_t number = requested;
    if (config.udp) {
      port.udp = detail::bind_udp(config.bind_address, number);
      number = detail::local_port(port.udp.get());
    }
    if (config.tcp) {
      try {
        port.tcp = detail::listen_tcp(config.bind_address, number);
      } catch (const Error&) {
        if (requested != 0) throw;
        continue;  // ephemeral UDP port taken for TCP; try another
      }
      number = detail::local_port(port.tcp.get());
    }
    port.number = number;
    return port;
  }
  throw Error(Errc::transport_error, "no free port for both udp and tcp");
}

}  // namespace

struct Daemon::Impl {
  Impl(PrivateKey key, std::shared_ptr<Storage> s, DaemonConfig c)
      : storage(s), config(std::move(c)), engine(std::move(key), std::move(s), config.ingest) {}

  void connection_worker(Port& port, BlockingQueue<Job>& queue, const char* name);
  void auth_worker();
  void data_worker();
  void storage_manager();

  std::shared_ptr<Storage> storage;
  DaemonConfig config;
  IngestEngine engine;

  Port auth;
  Port data;
  BlockingQueue<Job> auth_queue;
  BlockingQueue<Job> data_queue;
  BlockingQueue<DataJob> store_queue;
  std::atomic<bool> stopping{false};
  std::atomic<bool> running{false};
  std::atomic<std::uint64_t> tcp_connections{0};
  std::atomic<std::uint64_t> frames_rejected{0};
  std::vector<std::thread> connection_threads;
  std::vector<std::thread> worker_threads;

  std::unique_ptr<httplib::Server> http;
  std::thread http_thread;
  std::optional<std::uint16_t> http_port;
};

void Daemon::Impl::connection_worker(Port& port, BlockingQueue<Job>& queue, const char* name) {
  std::list<std::shared_ptr<TcpConn>> conns;
  Bytes datagram(config.ingest.max_packet_bytes + 1);
  std::uint8_t chunk[16384];

  while (!stopping) {
    std::vector<pollfd> fds;
    if (port.udp) fds.push_back({port.udp.get(), POLLIN, 0});
    if (port.tcp) fds.push_back({port.tcp.get(), POLLIN, 0});
    std::vector<std::shared_ptr<TcpConn>> polled;
    for (auto& c : conns) {
      std::lock_guard lock(c->mu);
      if (!c->fd) continue;
      fds.push_back({c->fd.get(), POLLIN, 0});
      polled.push_back(c);
    }
    int rc = ::poll(fds.data(), fds.size(), 100);
    if (rc <= 0) continue;

    std::size_t i = 0;
    if (port.udp) {
      if (fds[i].revents & POLLIN) {
        Route route{Transport::udp, port.udp.get(), {}, nullptr};
        route.peer.len = sizeof route.peer.storage;
        ssize_t n = ::recvfrom(port.udp.get(), datagram.data(), datagram.size(), MSG_DONTWAIT, route.peer.get(),
                               &route.peer.len);
        // Empty datagrams, and those longer than the packet limit (which
        // arrive truncated to max+1 bytes), are dropped here.
        if (n > 0 && static_cast<std::size_t>(n) <= config.ingest.max_packet_bytes) {
          queue.push(Job{Bytes(datagram.begin(), datagram.begin() + n), std::move(route)});
        } else if (n >= 0) {
          ++frames_rejected;
        }
      }
      ++i;
    }
    if (port.tcp) {
      if (fds[i].revents & POLLIN) {
        SockAddr peer;
        peer.len = sizeof peer.storage;
        Fd fd(::accept4(port.tcp.get(), peer.get(), &peer.len, SOCK_CLOEXEC));
        if (fd) {
          ++tcp_connections;
          conns.push_back(std::make_shared<TcpConn>(std::move(fd), config.ingest.max_packet_bytes));
        }
      }
      ++i;
    }
    for (std::size_t k = 0; k < polled.size(); ++k, ++i) {
      if ((fds[i].revents & (POLLIN | POLLHUP | POLLERR)) == 0) continue;
      auto& conn = polled[k];
      ssize_t n = ::recv(fds[i].fd, chunk, sizeof chunk, MSG_DONTWAIT);
      if (n <= 0) {
        conn->close();
        continue;
      }
      try {
        conn->decoder.feed(ByteView(chunk, static_cast<std::size_t>(n)));
        while (auto blob = conn->decoder.next()) {
          queue.push(Job{std::move(*blob), Route{Transport::tcp, -1, {}, conn}});
        }
      } catch (const Error& e) {
        ++frames_rejected;
        spdlog::debug("event=frame_rejected port={} reason={}", name, to_string(e.code()));
        conn->close();
      }
    }
    conns.remove_if([](const std::shared_ptr<TcpConn>& c) {
      std::lock_guard lock(c->mu);
      return !c->fd;
    });
  }
  for (auto& c : conns) c->close();
}

void Daemon::Impl::auth_worker() {
  while (auto job = auth_queue.pop()) {
    auto result = engine.process_auth(job->blob);
    if (!result) {
      spdlog::debug("event=auth transport={} outcome=discarded", to_string(job->route.transport));
      continue;
    }
    spdlog::debug("event=auth transport={} session_id={} seq={} outcome=accepted", to_string(job->route.transport),
                  result->session_id, result->seq);
    job->route.reply(result->wire);
  }
}

void Daemon::Impl::data_worker() {
  while (auto job = data_queue.pop()) {
    auto decoded = engine.decode_data(job->blob);
    if (!decoded) {
      spdlog::debug("event=data transport={} outcome=discarded", to_string(job->route.transport));
      continue;
    }
    store_queue.push(DataJob{std::move(*decoded), std::move(job->route)});
  }
}

void Daemon::Impl::storage_manager() {
  while (auto job = store_queue.pop()) {
    auto wire = engine.store_and_acknowledge(job->data);
    if (!wire) {
      spdlog::warn("event=store session_id={} seq={} outcome=storage_error", job->data.session_id, job->data.seq);
      continue;
    }
    spdlog::debug("event=store session_id={} seq={} rows={} outcome=acknowledged", job->data.session_id,
                  job->data.seq, job->data.batch.row_count());
    job->route.reply(*wire);
  }
}

Daemon::Daemon(PrivateKey server_key, std::shared_ptr<Storage> storage, DaemonConfig config)
    : impl_(std::make_unique<Impl>(std::move(server_key), std::move(storage), std::move(config))) {}

Daemon::~Daemon() { shutdown(); }

void Daemon::start() {
  auto& d = *impl_;
  if (d.running) return;
  if (!d.config.udp && !d.config.tcp) throw Error(Errc::config_error, "no transport enabled");
  if (d.config.auth_port != 0 && d.config.auth_port == d.config.data_port) {
    throw Error(Errc::config_error, "auth and data ports must differ");
  }
  d.auth = bind_port(d.config, d.config.auth_port);
  d.data = bind_port(d.config, d.config.data_port);

  if (d.config.metrics_port) {
    d.http = std::make_unique<httplib::Server>();
    d.http->Get("/metrics", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(format_metrics(metrics()), "text/plain");
    });
    int bound = *d.config.metrics_port == 0 ? d.http->bind_to_any_port(d.config.bind_address)
                                            : (d.http->bind_to_port(d.config.bind_address, *d.config.metrics_port)
                                                   ? *d.config.metrics_port
                                                   : -1);
    if (bound <= 0) throw Error(Errc::transport_error, "cannot bind metrics port");
    d.http_port = static_cast<std::uint16_t>(bound);
    d.http_thread = std::thread([&d] { d.http->listen_after_bind(); });
  }

  d.stopping = false;
  d.connection_threads.emplace_back([&d] { d.connection_worker(d.auth, d.auth_queue, "auth"); });
  d.connection_threads.emplace_back([&d] { d.connection_worker(d.data, d.data_queue, "data"); });
  d.worker_threads.emplace_back([&d] { d.auth_worker(); });
  d.worker_threads.emplace_back([&d] { d.data_worker(); });
  d.worker_threads.emplace_back([&d] { d.storage_manager(); });
  d.running = true;
  spdlog::info("event=start auth_port={} data_port={} udp={} tcp={}", d.auth.number, d.data.number, d.config.udp,
               d.config.tcp);
}

void Daemon::shutdown() {
  auto& d = *impl_;
  if (!d.running) return;
  d.stopping = true;
  for (auto& t : d.connection_threads) t.join();
  d.connection_threads.clear();
  d.auth_queue.close();
  d.data_queue.close();
  d.worker_threads[0].join();
  d.worker_threads[1].join();
  d.store_queue.close();
  d.worker_threads[2].join();
  d.worker_threads.clear();
  if (d.http) {
    d.http->stop();
    d.http_thread.join();
    d.http.reset();
  }
  d.auth = Port{};
  d.data = Port{};
  d.running = false;
  spdlog::info("event=stop");
}

bool Daemon::running() const noexcept { return impl_->running; }
std::uint16_t Daemon::auth_port() const noexcept { return impl_->auth.number; }
std::uint16_t Daemon::data_port() const noexcept { return impl_->data.number; }
std::optional<std::uint16_t> Daemon::metrics_port() const noexcept { return impl_->http_port; }
IngestEngine& Daemon::engine() noexcept { return impl_->engine; }

MetricsSnapshot Daemon::metrics() const {
  auto& d = *impl_;
  MetricsSnapshot m = d.engine.metrics();
  auto stats = d.storage->storage_stats();
  m["storage_sessions"] = stats.sessions;
  m["storage_auxiliary_entries"] = stats.auxiliary_entries;
  m["storage_bytes"] = stats.bytes;
  m["storage_rows"] = stats.total_rows();
  for (const auto& [stream, count] : stats.rows_by_stream) m["storage_rows_" + std::string(to_string(stream))] = count;
  m["queue_auth"] = d.auth_queue.size();
  m["queue_data"] = d.data_queue.size();
  m["queue_store"] = d.store_queue.size();
  m["tcp_connections"] = d.tcp_connections;
  m["frames_rejected"] = d.frames_rejected;
  return m;
}

}  // namespace sensorlink
