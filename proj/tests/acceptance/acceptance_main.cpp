// One PASS/FAIL line per acceptance criterion. Exit status 0 only when all
// ten pass.
#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>

#include "golden.hpp"
#include "sensorlink/client.hpp"
#include "sensorlink/daemon.hpp"
#include "sensorlink/error.hpp"
#include "sensorlink/net.hpp"
#include "sensorlink/server.hpp"
#include "sensorlink/sim.hpp"
#include "support.hpp"

using namespace sensorlink;
using namespace sensorlink::testing;
using namespace std::chrono_literals;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

ExperimentConfig base(std::uint32_t duration_s, WorkloadConfig w = WorkloadConfig::typical()) {
  ExperimentConfig c;
  c.workload = w;
  c.workload.duration_s = duration_s;
  c.keys = test_keys();
  return c;
}

std::string fmt(double v, int digits = 3) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(digits);
  o << v;
  return o.str();
}

// Shared by criteria 1-3.
const ExperimentReport& default_run(double* wall_s = nullptr) {
  static double wall = 0;
  static const ExperimentReport report = [] {
    const auto t0 = std::chrono::steady_clock::now();
    auto r = run_experiment(base(3600));
    wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
  }();
  if (wall_s != nullptr) *wall_s = wall;
  return report;
}

Outcome fidelity() {
  double wall = 0;
  const auto& r = default_run(&wall);
  const bool pass = r.verified && r.rows_stored == r.rows_generated && r.rows_delivered == r.rows_generated &&
                    r.feedback_stored_total == r.rows_generated && r.rows_failed == 0 && wall <= 30.0;
  return {pass, "rows " + std::to_string(r.rows_generated) + ", stored " + std::to_string(r.rows_stored) +
                    ", feedback total " + std::to_string(r.feedback_stored_total) + ", verified " +
                    (r.verified ? "yes" : "no") + ", wall " + fmt(wall, 2) + " s"};
}

Outcome compression() {
  const auto& r = default_run();
  const double ratio = static_cast<double>(r.bytes_on_wire) / static_cast<double>(r.json_bytes);
  return {ratio <= 0.20, "json " + std::to_string(r.json_bytes) + " B, on wire " + std::to_string(r.bytes_on_wire) +
                             " B, ratio " + fmt(ratio, 4) + " (data only " + fmt(r.compression_ratio, 4) + ")"};
}

Outcome storage_rate() {
  const auto& typical = default_run();
  const auto maximum = run_experiment(base(600, WorkloadConfig::maximum()));
  const bool pass = typical.stored_bytes_per_second >= 75 && typical.stored_bytes_per_second <= 300 &&
                    maximum.verified && maximum.stored_bytes_per_second <= 4000;
  return {pass, "typical " + fmt(typical.stored_bytes_per_second, 1) + " B/s, maximum " +
                    fmt(maximum.stored_bytes_per_second, 1) + " B/s"};
}

Outcome loss_tolerance() {
  auto c = base(600);
  for (auto* ch : {&c.uplink, &c.downlink}) {
    ch->loss_prob = 0.2;
    ch->latency = 100ms;
    ch->jitter = 20ms;
  }
  c.uplink.seed = 11;
  c.downlink.seed = 12;
  const auto a = run_experiment(c);
  const auto b = run_experiment(c);
  const bool same = a.retransmissions == b.retransmissions && a.packets_lost == b.packets_lost &&
                    a.bytes_on_wire == b.bytes_on_wire && a.virtual_time_s == b.virtual_time_s &&
                    a.rows_stored == b.rows_stored;
  const bool pass = a.verified && a.rows_stored == a.rows_generated && a.rows_delivered == a.rows_generated &&
                    a.retransmissions > 0 && same;
  return {pass, "rows " + std::to_string(a.rows_generated) + ", stored " + std::to_string(a.rows_stored) +
                    ", retransmissions " + std::to_string(a.retransmissions) + ", lost " +
                    std::to_string(a.packets_lost) + ", deterministic " + (same ? "yes" : "no")};
}

Outcome statelessness() {
  auto make = [](std::vector<std::size_t> restarts) {
    auto c = base(3600);
    c.client.max_packet_bytes = 1024;
    c.uplink.latency = c.downlink.latency = 20ms;
    c.restart_at_packets = std::move(restarts);
    c.storage_override = make_memory_storage();
    return c;
  };
  auto with = make({40, 90, 150, 210, 300});
  auto without = make({});
  const auto r1 = run_experiment(with);
  const auto r0 = run_experiment(without);
  const auto s1 = snapshot_session(*with.storage_override, r1.session_id);
  const auto s0 = snapshot_session(*without.storage_override, r0.session_id);
  const bool pass = r1.restarts == 5 && r1.verified && r0.verified && s1 == s0 && s0.size() == r0.rows_generated;
  return {pass, "restarts " + std::to_string(r1.restarts) + ", rows " + std::to_string(s1.size()) + " vs " +
                    std::to_string(s0.size()) + ", identical " + (s1 == s0 ? "yes" : "no")};
}

Outcome pipelining() {
  auto run_window = [](std::size_t window) {
    auto c = base(3600);
    c.client.window = window;
    c.client.max_packet_bytes = 1024;
    c.uplink.latency = c.downlink.latency = 25ms;
    return run_experiment(c);
  };
  const auto w1 = run_window(1);
  const auto w16 = run_window(16);
  const double speedup = w16.throughput_rows_per_s / w1.throughput_rows_per_s;
  const bool pass = w1.verified && w16.verified && w1.data_packets >= 200 && speedup >= 8.0;
  return {pass, std::to_string(w1.data_packets) + " packets, window 1 " + fmt(w1.throughput_rows_per_s, 1) +
                    " rows/s, window 16 " + fmt(w16.throughput_rows_per_s, 1) + " rows/s, speedup " + fmt(speedup, 2) +
                    "x"};
}

Outcome handshake() {
  auto c = base(120);
  c.uplink.latency = c.downlink.latency = 50ms;
  const auto sim = run_experiment(c);
  auto live = base(60);
  live.network = Network::udp;
  const auto udp = run_experiment(live);
  const bool pass = sim.handshake_client_packets == 1 && sim.handshake_server_packets == 1 &&
                    sim.first_data_delay_ms == 0 && udp.handshake_client_packets == 1 &&
                    udp.handshake_server_packets == 1 && sim.verified && udp.verified;
  return {pass, "simulated " + std::to_string(sim.handshake_client_packets) + " up / " +
                    std::to_string(sim.handshake_server_packets) + " down, first data after " +
                    fmt(sim.first_data_delay_ms, 0) + " ms; loopback udp " +
                    std::to_string(udp.handshake_client_packets) + " up / " +
                    std::to_string(udp.handshake_server_packets) + " down, " + fmt(udp.first_data_delay_ms, 0) +
                    " ms"};
}

Outcome key_rotation() {
  // Direct exchange against an engine: same id, old key discarded.
  auto storage = std::shared_ptr<Storage>(make_memory_storage());
  IngestEngine engine(test_keys().private_part, storage);
  auto b = ClientSession::begin_session(test_keys().public_part, hash_user("rotate@example.com"), 1'400'000'000, 1,
                                        {}, 0ms);
  auto& s = b.session;
  s.receive_auth(*engine.handle_auth_packet(b.out.wire));
  const auto id = s.session_id();
  const auto old_key = *s.current_key();
  auto upd = s.update_session(generate_session_key(), std::nullopt, 0ms);
  s.receive_auth(*engine.handle_auth_packet(upd.out.wire));
  const bool same_id = id && s.session_id() == id;
  Gen g(1);
  const bool old_discarded =
      !engine.handle_data_packet(encode_data_packet(DataPacket{*id, 999, random_batch(g)}, old_key));

  // Simulated session rotating twice mid-upload converges.
  auto c = base(600);
  c.client.max_packet_bytes = 1024;
  c.uplink.latency = c.downlink.latency = 50ms;
  c.uplink.loss_prob = c.downlink.loss_prob = 0.05;
  c.rotate_key_at = {1500ms, 4000ms};
  const auto r = run_experiment(c);
  const bool pass = same_id && old_discarded && r.verified && r.rows_delivered == r.rows_generated &&
                    r.session_ids_seen.size() == 1;
  return {pass, std::string("same session_id ") + (same_id ? "yes" : "no") + ", old-key packet discarded " +
                    (old_discarded ? "yes" : "no") + ", simulated delivery " + std::to_string(r.rows_delivered) + "/" +
                    std::to_string(r.rows_generated) + ", re-encoded " + std::to_string(r.packets_reencoded) +
                    ", server discards " + std::to_string(r.server_discards)};
}

Outcome fuzz() {
  auto storage = std::shared_ptr<Storage>(make_memory_storage());
  DaemonConfig cfg;
  cfg.tcp = false;
  Daemon daemon(test_keys().private_part, storage, cfg);
  daemon.start();
  auto metric = [&](const char* name) {
    auto m = daemon.metrics();
    auto it = m.find(name);
    return it == m.end() ? std::uint64_t{0} : it->second;
  };
  auto seen = [&] { return metric("auth_packets") + metric("data_packets") + metric("frames_rejected"); };
  int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
  timeval tv{0, 1000};
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  Gen g(2024);
  constexpr int kDatagrams = 100'000;
  std::size_t responses = 0;
  std::uint8_t buf[65536];
  for (int i = 0; i < kDatagrams; ++i) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(i % 2 ? daemon.data_port() : daemon.auth_port());
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    // A mix of tiny, auth-sized and large blobs, some with a plausible
    // session prefix.
    std::size_t len = 0;
    switch (g() % 4) {
      case 0: len = g() % 8; break;
      case 1: len = 512; break;
      case 2: len = 1 + g() % 1500; break;
      default: len = 1 + g() % 9000; break;
    }
    Bytes d = random_bytes(g, len);
    if (d.size() >= 4 && g() % 3 == 0) d[0] = d[1] = d[2] = 0, d[3] = 1;
    ::sendto(fd, d.data(), d.size(), 0, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
    if (i % 32 == 31) {
      // Pace on the daemon's own counters so the kernel drops nothing.
      const auto target = static_cast<std::uint64_t>(i + 1);
      for (int w = 0; w < 20000 && seen() < target; ++w) {
        std::this_thread::sleep_for(100us);
      }
      while (::recv(fd, buf, sizeof buf, MSG_DONTWAIT) > 0) ++responses;
    }
  }
  std::this_thread::sleep_for(200ms);
  while (::recv(fd, buf, sizeof buf, MSG_DONTWAIT) > 0) ++responses;
  ::close(fd);
  const auto handled = seen();
  const auto stats = storage->storage_stats();
  const bool untouched = stats.sessions == 0 && stats.total_rows() == 0 && stats.auxiliary_entries == 0;
  // Still serving afterwards.
  auto link = connect_link(Transport::udp, {"127.0.0.1", daemon.auth_port(), daemon.data_port()});
  auto b = ClientSession::begin_session(test_keys().public_part, hash_user("after@example.com"), 1'400'000'000, 1, {},
                                        link->now());
  link->send(b.out);
  b.session.enqueue_rows(random_batch(g, 20));
  const auto after = drain(b.session, *link, 30s);
  const bool alive = daemon.running() && after.failed_rows == 0 && after.delivered_rows > 0;
  daemon.shutdown();

  // Single-bit tampering of valid data packets.
  IngestEngine engine(test_keys().private_part, std::shared_ptr<Storage>(make_memory_storage()));
  AuthRequest req{1, hash_user("tamper@example.com"), 1'400'000'000, generate_session_key(), 1, {}};
  const auto sid =
      decode_auth_response(*engine.handle_auth_packet(encode_auth_request(req, test_keys().public_part)), req.key)
          .session_id;
  constexpr int kTrials = 1000;
  int silent = 0;
  for (int t = 0; t < kTrials; ++t) {
    Bytes wire = encode_data_packet(DataPacket{sid, static_cast<std::uint32_t>(t + 1), random_batch(g, 10)}, req.key);
    const std::size_t bit = g() % (wire.size() * 8);
    wire[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    if (engine.handle_data_packet(wire)) ++silent;
  }
  const double silent_rate = static_cast<double>(silent) / kTrials;
  const bool pass = handled == kDatagrams && responses == 0 && untouched && alive && silent_rate <= 0.001;
  return {pass, std::to_string(handled) + "/" + std::to_string(kDatagrams) + " datagrams handled, responses " +
                    std::to_string(responses) + ", storage untouched " + (untouched ? "yes" : "no") +
                    ", serving after " + (alive ? "yes" : "no") + "; bit flips accepted " + std::to_string(silent) +
                    "/" + std::to_string(kTrials)};
}

Outcome golden() {
  const auto failures = check_golden_vectors(golden_vectors_path());
  std::string detail = failures.empty() ? "all vectors decode and re-encode bit-exactly" : failures.front();
  if (failures.size() > 1) detail += " (+" + std::to_string(failures.size() - 1) + " more)";
  return {failures.empty(), detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"end-to-end fidelity", fidelity},
      {"compression ratio", compression},
      {"storage rate", storage_rate},
      {"loss tolerance", loss_tolerance},
      {"statelessness under restarts", statelessness},
      {"pipelining speedup", pipelining},
      {"handshake overhead", handshake},
      {"key rotation", key_rotation},
      {"robustness fuzz", fuzz},
      {"golden wire vectors", golden},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (i + 1) << ". " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
