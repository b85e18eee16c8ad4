#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "sensorlink/crypto.hpp"
#include "sensorlink/server.hpp"
#include "sensorlink/storage.hpp"

namespace sensorlink {

struct DaemonConfig {
  std::string bind_address = "127.0.0.1";
  std::uint16_t auth_port = 0;  // 0 picks a free port
  std::uint16_t data_port = 0;
  bool udp = true;
  bool tcp = true;
  IngestConfig ingest;
  std::optional<std::uint16_t> metrics_port;  // plain-text GET /metrics
};

/// Socket front end for an IngestEngine. Worker threads:
///   * one connection worker per port, each polling its UDP socket and TCP
///     listener/connections;
///   * an authentication worker that owns every auth-path storage call;
///   * a data worker that decrypts and parses data packets;
///   * a storage manager that writes rows and emits feedback.
/// Replies leave through the transport and peer the request came from.
class Daemon {
 public:
  Daemon(PrivateKey server_key, std::shared_ptr<Storage> storage, DaemonConfig config);
  Daemon(const Daemon&) = delete;
  Daemon& operator=(const Daemon&) = delete;
  ~Daemon();

  /// Binds and starts the workers. Throws Error(config_error) for equal
  /// ports and Error(transport_error) when binding fails.
  void start();
  /// Stops accepting, drains queued packets, joins every worker.
  void shutdown();
  bool running() const noexcept;

  std::uint16_t auth_port() const noexcept;
  std::uint16_t data_port() const noexcept;
  std::optional<std::uint16_t> metrics_port() const noexcept;

  IngestEngine& engine() noexcept;
  /// Engine counters plus storage_stats and queue depths.
  MetricsSnapshot metrics() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace sensorlink
