// sensorlink: key management, ingest daemon, upload client, benchmark and
// simulator front end.
//
// Exit codes: 0 success, 1 partial delivery, 2 configuration error,
// 3 transport failure.

#include <sys/stat.h>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <thread>

#include "sensorlink/client.hpp"
#include "sensorlink/crypto.hpp"
#include "sensorlink/daemon.hpp"
#include "sensorlink/error.hpp"
#include "sensorlink/journal.hpp"
#include "sensorlink/net.hpp"
#include "sensorlink/sim.hpp"
#include "sensorlink/storage.hpp"

namespace fs = std::filesystem;
using namespace sensorlink;
using Json = nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartial = 1;
constexpr int kExitConfig = 2;
constexpr int kExitTransport = 3;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

void write_file(const fs::path& path, const std::string& content, fs::perms perms) {
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::key_io, "cannot write " + path.string());
    out << content;
  }
  fs::permissions(path, perms, fs::perm_options::replace);
}

// ---- keygen ----

struct KeygenOptions {
  std::string out = "server_key.pem";
  unsigned bits = kDefaultRsaBits;
  bool force = false;
};

int run_keygen(const KeygenOptions& o) {
  const fs::path priv_path = o.out;
  const fs::path pub_path = o.out + ".pub";
  if (!o.force && (fs::exists(priv_path) || fs::exists(pub_path))) {
    std::cerr << "refusing to overwrite " << priv_path << " (use --force)\n";
    return kExitConfig;
  }
  auto keys = generate_server_keypair(o.bits);

  // Self-test before anything is written.
  Bytes probe(64);
  system_random().fill(probe);
  if (asym_decrypt(keys.private_part, asym_encrypt(keys.public_part, probe)) != probe) {
    std::cerr << "generated key failed its encrypt/decrypt self-test\n";
    return kExitConfig;
  }

  // Create the private file restricted from the start.
  ::umask(077);
  write_file(priv_path, keys.private_part.to_pem(), fs::perms::owner_read | fs::perms::owner_write);
  write_file(pub_path, keys.public_part.to_pem(),
             fs::perms::owner_read | fs::perms::owner_write | fs::perms::group_read | fs::perms::others_read);
  std::cout << Json{{"private_key", priv_path.string()},
                    {"public_key", pub_path.string()},
                    {"bits", keys.public_part.modulus_bytes() * 8}}
                   .dump()
            << '\n';
  return kExitOk;
}

// ---- serve ----

struct ServeOptions {
  std::string key;
  std::string bind = "127.0.0.1";
  std::uint16_t auth_port = 8470;
  std::uint16_t data_port = 8471;
  std::vector<std::string> transports{"udp", "tcp"};
  std::string storage = "sqlite:sensorlink.db";
  std::size_t cache = kDefaultCacheCapacity;
  std::size_t max_packet_bytes = kDefaultMaxPacketBytes;
  int metrics_port = -1;
  double run_for_s = 0;
  std::string log_level = "info";
};

int run_serve(const ServeOptions& o) {
  spdlog::set_level(spdlog::level::from_str(o.log_level));
  DaemonConfig cfg;
  cfg.bind_address = o.bind;
  cfg.auth_port = o.auth_port;
  cfg.data_port = o.data_port;
  cfg.udp = cfg.tcp = false;
  for (const auto& t : o.transports) {
    auto parsed = transport_from_string(t);
    if (!parsed) throw Error(Errc::config_error, "unknown transport '" + t + "'");
    (*parsed == Transport::udp ? cfg.udp : cfg.tcp) = true;
  }
  cfg.ingest.cache_capacity = o.cache;
  cfg.ingest.max_packet_bytes = o.max_packet_bytes;
  if (o.metrics_port >= 0) cfg.metrics_port = static_cast<std::uint16_t>(o.metrics_port);

  PrivateKey key = PrivateKey::load(o.key);
  std::shared_ptr<Storage> storage = open_storage(o.storage);
  Daemon daemon(std::move(key), storage, cfg);
  try {
    daemon.start();
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return e.code() == Errc::config_error ? kExitConfig : kExitTransport;
  }
  Json ready{{"auth_port", daemon.auth_port()}, {"data_port", daemon.data_port()}};
  if (auto m = daemon.metrics_port()) ready["metrics_port"] = *m;
  std::cout << ready.dump() << std::endl;

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const auto until = std::chrono::steady_clock::now() + std::chrono::duration<double>(o.run_for_s);
  while (!g_stop && (o.run_for_s <= 0 || std::chrono::steady_clock::now() < until)) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  daemon.shutdown();
  return kExitOk;
}

// ---- upload ----

struct UploadOptions {
  std::string server_key;
  std::string host = "127.0.0.1";
  std::uint16_t auth_port = 8470;
  std::uint16_t data_port = 8471;
  std::string transport = "udp";
  std::string email;
  std::uint64_t start_time = 0;
  std::string journal;
  std::string workload = "typical";
  std::uint32_t duration_s = 60;
  std::uint64_t seed = 1;
  bool realtime = false;
  double speedup = 1;
  std::int64_t flush_ms = 5000;
  std::size_t window = 16;
  std::size_t max_packet_bytes = kDefaultMaxPacketBytes;
  double timeout_s = 120;
};

int run_upload(const UploadOptions& o) {
  PublicKey server_pub = PublicKey::load(o.server_key);
  const ServerAddress address{o.host, o.auth_port, o.data_port};
  auto transport = transport_from_string(o.transport);
  if (!transport) throw Error(Errc::config_error, "unknown transport '" + o.transport + "'");

  // Pending rows come from an existing journal, or from a generated workload.
  std::optional<UserHash> hash;
  std::uint64_t start_time = o.start_time;
  std::vector<TimedBatch> generated;
  JournalContents recovered;
  std::shared_ptr<Journal> journal;
  const bool resume = !o.journal.empty() && fs::exists(o.journal);
  if (resume) {
    recovered = Journal::read(o.journal);
    hash = recovered.header->user_hash;
    start_time = recovered.header->start_time;
    journal = Journal::open(o.journal);
  } else {
    if (o.email.empty()) throw Error(Errc::config_error, "--email is required without an existing journal");
    hash = hash_user(o.email);
    WorkloadConfig w = o.workload == "maximum" ? WorkloadConfig::maximum() : WorkloadConfig::typical();
    if (o.workload != "typical" && o.workload != "maximum") {
      throw Error(Errc::config_error, "workload must be 'typical' or 'maximum'");
    }
    w.duration_s = o.duration_s;
    w.seed = o.seed;
    if (start_time == 0) {
      start_time = static_cast<std::uint64_t>(
          std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
              .count());
    }
    w.start_time = static_cast<std::uint32_t>(start_time);
    generated = generate_session(w);
    if (!o.journal.empty()) journal = Journal::create(o.journal, JournalHeader{*hash, start_time, 1, {}});
  }

  std::unique_ptr<SocketLink> link;
  try {
    link = connect_link(*transport, address, o.max_packet_bytes);
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return kExitTransport;
  }

  ClientConfig cc;
  cc.window = o.window;
  cc.max_packet_bytes = o.max_packet_bytes;
  auto begin = ClientSession::begin_session(server_pub, *hash, start_time, 1, {}, link->now(), cc);
  ClientSession& session = begin.session;
  if (resume) session.restore_rows(recovered.watermark, recovered.pending);
  if (journal) session.attach_journal(journal);
  link->send(begin.out);

  std::size_t next = 0;
  if (!o.realtime) {
    RowBatch all;
    for (const auto& tb : generated) all.append(tb.batch);
    if (!all.empty()) session.enqueue_rows(all);
    next = generated.size();
  }

  const Millis deadline = link->now() + Millis(static_cast<std::int64_t>(o.timeout_s * 1000)) +
                          Millis(o.realtime ? static_cast<std::int64_t>(o.duration_s * 1000 / o.speedup) : 0);
  Millis next_flush = link->now() + Millis(o.flush_ms);
  bool timed_out = false;
  std::signal(SIGINT, on_signal);
  while (!g_stop) {
    const Millis now = link->now();
    if (next < generated.size() && now >= next_flush) {
      // Seconds of workload that have elapsed by now at the requested speed.
      const double elapsed_s = static_cast<double>(now.count()) / 1000.0 * o.speedup;
      RowBatch flush;
      while (next < generated.size() && generated[next].offset_s + 1 <= elapsed_s) flush.append(generated[next++].batch);
      if (!flush.empty()) session.enqueue_rows(flush);
      next_flush = now + Millis(o.flush_ms);
    }
    for (const auto& out : session.pump(now)) link->send(out);
    if (next >= generated.size() && session.finished()) break;
    if (now >= deadline) {
      timed_out = true;
      break;
    }
    Millis wake = std::min(deadline, now + Millis(250));
    if (next < generated.size()) wake = std::min(wake, next_flush);
    if (auto d = session.next_deadline()) wake = std::min(wake, std::max(*d, now));
    if (auto in = link->wait(wake)) session.receive(*in);
  }

  const auto& s = session.stats();
  const std::size_t total = resume ? recovered.pending_rows() : [&] {
    std::size_t n = 0;
    for (const auto& tb : generated) n += tb.batch.row_count();
    return n;
  }();
  Json summary{{"rows", total},
               {"delivered", s.delivered_rows},
               {"failed", total - std::min(total, s.delivered_rows)},
               {"retransmissions", s.retransmissions},
               {"packets", s.data_packets_sent},
               {"bytes_sent", s.bytes_sent},
               {"authenticated", session.authenticated()},
               {"timed_out", timed_out}};
  if (auto id = session.session_id()) summary["session_id"] = *id;
  std::cout << summary.dump() << '\n';

  if (!session.authenticated()) return kExitTransport;
  if (s.delivered_rows >= total) return kExitOk;
  return s.delivered_rows == 0 && timed_out ? kExitTransport : kExitPartial;
}

// ---- bench ----

struct BenchOptions {
  std::string server_key;
  std::int64_t rtt_ms = 50;
  std::vector<std::size_t> windows{1, 4, 16};
  std::uint32_t duration_s = 600;
  std::size_t max_packet_bytes = 1024;
  std::string workload = "typical";
  std::uint64_t seed = 1;
};

int run_bench(const BenchOptions& o) {
  ExperimentConfig base;
  base.workload = o.workload == "maximum" ? WorkloadConfig::maximum() : WorkloadConfig::typical();
  base.workload.duration_s = o.duration_s;
  base.workload.seed = o.seed;
  base.uplink.latency = base.downlink.latency = Millis(o.rtt_ms / 2);
  base.client.max_packet_bytes = base.server.max_packet_bytes = o.max_packet_bytes;
  if (o.server_key.empty()) {
    base.keys = generate_server_keypair();
  } else {
    auto priv = PrivateKey::load(o.server_key);
    base.keys = ServerKeyPair{priv.public_key(), priv};
  }

  std::cout << std::left << std::setw(8) << "window" << std::setw(10) << "packets" << std::setw(14) << "virtual_s"
            << std::setw(14) << "rows_per_s" << "speedup\n";
  double baseline = 0;
  for (auto window : o.windows) {
    ExperimentConfig c = base;
    c.client.window = window;
    auto r = run_experiment(c);
    if (baseline == 0) baseline = r.throughput_rows_per_s;
    std::cout << std::left << std::setw(8) << window << std::setw(10) << r.data_packets << std::setw(14)
              << std::fixed << std::setprecision(3) << r.virtual_time_s << std::setw(14) << std::setprecision(1)
              << r.throughput_rows_per_s << std::setprecision(2) << r.throughput_rows_per_s / baseline << '\n';
  }
  return kExitOk;
}

// ---- simulate ----

struct SimulateOptions {
  std::string config;
  std::string out;
  std::string format = "json";
};

int run_simulate(const SimulateOptions& o) {
  ExperimentConfig c = load_experiment_config(o.config);
  ExperimentReport r = run_experiment(c);
  const std::string text = o.format == "table" ? report_to_table(r) : report_to_json(r) + "\n";
  if (o.out.empty()) {
    std::cout << text;
  } else {
    std::ofstream(o.out) << text;
  }
  if (!r.verified || r.rows_failed > 0) return r.rows_delivered > 0 ? kExitPartial : kExitTransport;
  return kExitOk;
}

// ---- stats ----

int run_stats(const std::string& selector) {
  auto storage = open_storage(selector);
  auto st = storage->storage_stats();
  std::cout << "sessions " << st.sessions << '\n'
            << "auxiliary_entries " << st.auxiliary_entries << '\n'
            << "rows " << st.total_rows() << '\n'
            << "bytes " << st.bytes << '\n';
  for (const auto& [stream, n] : st.rows_by_stream) std::cout << "rows_" << to_string(stream) << ' ' << n << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("sensorlink"));
  CLI::App app{"Secure sensor data gathering: keys, ingest server, upload client, simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "sensorlink 0.1.0");

  KeygenOptions keygen;
  auto* k = app.add_subcommand("keygen", "Generate the server RSA key pair");
  k->add_option("--out", keygen.out, "Private key path; the public key goes to <out>.pub")
      ->envname("SENSORLINK_KEY_OUT")
      ->capture_default_str();
  k->add_option("--bits", keygen.bits, "Modulus size")
      ->check(CLI::IsMember({2048, 3072, 4096}))
      ->envname("SENSORLINK_KEY_BITS")
      ->capture_default_str();
  k->add_flag("--force", keygen.force, "Overwrite existing key files")->envname("SENSORLINK_FORCE");

  ServeOptions serve;
  auto* s = app.add_subcommand("serve", "Run the ingest daemon");
  s->add_option("--key", serve.key, "Server private key (PEM)")->required()->envname("SENSORLINK_KEY");
  s->add_option("--bind", serve.bind, "Listen address")->envname("SENSORLINK_BIND")->capture_default_str();
  s->add_option("--auth-port", serve.auth_port, "Authentication port (0 = any)")
      ->envname("SENSORLINK_AUTH_PORT")
      ->capture_default_str();
  s->add_option("--data-port", serve.data_port, "Data port (0 = any)")
      ->envname("SENSORLINK_DATA_PORT")
      ->capture_default_str();
  s->add_option("--transport", serve.transports, "Comma-separated subset of udp,tcp")
      ->delimiter(',')
      ->envname("SENSORLINK_TRANSPORT")
      ->capture_default_str();
  s->add_option("--storage", serve.storage, "memory | sqlite:<path>")
      ->envname("SENSORLINK_STORAGE")
      ->capture_default_str();
  s->add_option("--cache", serve.cache, "Session key cache entries")
      ->envname("SENSORLINK_CACHE")
      ->capture_default_str();
  s->add_option("--max-packet-bytes", serve.max_packet_bytes, "Largest accepted packet")
      ->envname("SENSORLINK_MAX_PACKET_BYTES")
      ->capture_default_str();
  s->add_option("--metrics-port", serve.metrics_port, "Plain-text metrics port (-1 = off, 0 = any)")
      ->envname("SENSORLINK_METRICS_PORT")
      ->capture_default_str();
  s->add_option("--run-for", serve.run_for_s, "Stop after this many seconds (0 = until signalled)")
      ->envname("SENSORLINK_RUN_FOR");
  s->add_option("--log-level", serve.log_level, "trace|debug|info|warn|error")
      ->envname("SENSORLINK_LOG_LEVEL")
      ->capture_default_str();

  UploadOptions upload;
  auto* u = app.add_subcommand("upload", "Upload a journal or a generated workload");
  u->add_option("--server-key", upload.server_key, "Server public key (PEM)")
      ->required()
      ->envname("SENSORLINK_SERVER_KEY");
  u->add_option("--host", upload.host, "Server host")->envname("SENSORLINK_HOST")->capture_default_str();
  u->add_option("--auth-port", upload.auth_port, "Authentication port")
      ->envname("SENSORLINK_AUTH_PORT")
      ->capture_default_str();
  u->add_option("--data-port", upload.data_port, "Data port")->envname("SENSORLINK_DATA_PORT")->capture_default_str();
  u->add_option("--transport", upload.transport, "udp | tcp")
      ->check(CLI::IsMember({"udp", "tcp"}))
      ->envname("SENSORLINK_TRANSPORT")
      ->capture_default_str();
  u->add_option("--email", upload.email, "User e-mail; hashed locally and never sent")->envname("SENSORLINK_EMAIL");
  u->add_option("--start-time", upload.start_time, "Session start, unix seconds (default now)")
      ->envname("SENSORLINK_START_TIME");
  u->add_option("--journal", upload.journal, "Journal file: resumed if present, else created")
      ->envname("SENSORLINK_JOURNAL");
  u->add_option("--workload", upload.workload, "typical | maximum")
      ->envname("SENSORLINK_WORKLOAD")
      ->capture_default_str();
  u->add_option("--duration", upload.duration_s, "Generated workload length in seconds")
      ->envname("SENSORLINK_DURATION")
      ->capture_default_str();
  u->add_option("--seed", upload.seed, "Workload seed")->envname("SENSORLINK_SEED")->capture_default_str();
  auto* rt = u->add_flag("--realtime", upload.realtime, "Send rows as they are gathered")
                 ->envname("SENSORLINK_REALTIME");
  u->add_flag("--batch{false}", upload.realtime, "Send everything at once (default)")->excludes(rt);
  u->add_option("--speedup", upload.speedup, "Workload seconds per wall second in real-time mode")
      ->check(CLI::PositiveNumber)
      ->envname("SENSORLINK_SPEEDUP")
      ->capture_default_str();
  u->add_option("--flush-ms", upload.flush_ms, "Real-time flush period")
      ->envname("SENSORLINK_FLUSH_MS")
      ->capture_default_str();
  u->add_option("--window", upload.window, "Packets in flight")
      ->check(CLI::PositiveNumber)
      ->envname("SENSORLINK_WINDOW")
      ->capture_default_str();
  u->add_option("--max-packet-bytes", upload.max_packet_bytes, "Largest packet")
      ->envname("SENSORLINK_MAX_PACKET_BYTES")
      ->capture_default_str();
  u->add_option("--timeout", upload.timeout_s, "Give up after this many seconds")
      ->envname("SENSORLINK_TIMEOUT")
      ->capture_default_str();

  BenchOptions bench;
  auto* b = app.add_subcommand("bench", "Simulated throughput per window size");
  b->add_option("--server-key", bench.server_key, "Server private key (default: generate)")
      ->envname("SENSORLINK_KEY");
  b->add_option("--rtt-ms", bench.rtt_ms, "Round-trip time")->envname("SENSORLINK_RTT_MS")->capture_default_str();
  b->add_option("--windows", bench.windows, "Comma-separated window sizes")
      ->delimiter(',')
      ->envname("SENSORLINK_WINDOWS")
      ->capture_default_str();
  b->add_option("--duration", bench.duration_s, "Workload seconds")
      ->envname("SENSORLINK_DURATION")
      ->capture_default_str();
  b->add_option("--max-packet-bytes", bench.max_packet_bytes, "Packet size cap")
      ->envname("SENSORLINK_MAX_PACKET_BYTES")
      ->capture_default_str();
  b->add_option("--workload", bench.workload, "typical | maximum")
      ->envname("SENSORLINK_WORKLOAD")
      ->capture_default_str();
  b->add_option("--seed", bench.seed, "Workload seed")->envname("SENSORLINK_SEED")->capture_default_str();

  SimulateOptions simulate;
  auto* m = app.add_subcommand("simulate", "Run an experiment file");
  m->add_option("config", simulate.config, "key=value experiment file")
      ->required()
      ->check(CLI::ExistingFile)
      ->envname("SENSORLINK_EXPERIMENT");
  m->add_option("--out", simulate.out, "Write the report here instead of stdout")->envname("SENSORLINK_REPORT");
  m->add_option("--format", simulate.format, "json | table")
      ->check(CLI::IsMember({"json", "table"}))
      ->envname("SENSORLINK_FORMAT")
      ->capture_default_str();

  std::string stats_storage = "sqlite:sensorlink.db";
  auto* st = app.add_subcommand("stats", "Print storage statistics");
  st->add_option("--storage", stats_storage, "memory | sqlite:<path>")
      ->envname("SENSORLINK_STORAGE")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*k) return run_keygen(keygen);
    if (*s) return run_serve(serve);
    if (*u) return run_upload(upload);
    if (*b) return run_bench(bench);
    if (*m) return run_simulate(simulate);
    if (*st) return run_stats(stats_storage);
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return e.code() == Errc::transport_error ? kExitTransport : kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}
