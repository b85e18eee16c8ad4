#include "sensorlink/sim.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <queue>
#include <set>
#include <sstream>

#include "json_codec.hpp"
#include "sensorlink/daemon.hpp"
#include "sensorlink/error.hpp"
#include "sensorlink/net.hpp"

namespace sensorlink {

// ---- LossyChannel ----

LossyChannel::LossyChannel(ChannelConfig config) : config_(config), rng_(config.seed) {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0 && p <= 1)) throw Error(Errc::config_error, std::string(name) + " must be within [0, 1]");
  };
  prob(config.loss_prob, "loss_prob");
  prob(config.reorder_prob, "reorder_prob");
  prob(config.duplicate_prob, "duplicate_prob");
  if (config.latency.count() < 0 || config.jitter.count() < 0) {
    throw Error(Errc::config_error, "latency and jitter must be non-negative");
  }
}

Millis LossyChannel::delay() {
  Millis d = config_.latency;
  if (config_.jitter.count() > 0) {
    d += Millis(std::uniform_int_distribution<Millis::rep>(-config_.jitter.count(), config_.jitter.count())(rng_));
  }
  if (config_.reorder_prob > 0 && std::uniform_real_distribution<double>(0, 1)(rng_) < config_.reorder_prob) {
    ++stats_.reordered;
    d += config_.reorder_delay.count() > 0 ? config_.reorder_delay : 2 * config_.latency + Millis(1);
  }
  return std::max(d, Millis(0));
}

std::vector<Millis> LossyChannel::transmit(Millis now) {
  ++stats_.sent;
  std::uniform_real_distribution<double> u(0, 1);
  // Draw every decision for every packet so fates stay aligned across
  // configs that differ only in one probability.
  const bool lost = u(rng_) < config_.loss_prob;
  const bool dup = u(rng_) < config_.duplicate_prob;
  const Millis first = delay();
  const Millis second = delay();
  if (lost) {
    ++stats_.lost;
    return {};
  }
  std::vector<Millis> out{now + first};
  if (dup) {
    ++stats_.duplicated;
    out.push_back(now + second);
  }
  stats_.delivered += out.size();
  return out;
}

// ---- FaultInjectingStorage ----

FaultInjectingStorage::FaultInjectingStorage(std::shared_ptr<Storage> inner, FaultPlan plan)
    : inner_(std::move(inner)), plan_(plan) {}

void FaultInjectingStorage::set_plan(FaultPlan plan) {
  std::lock_guard lock(mu_);
  plan_ = plan;
}

StorageCallCounts FaultInjectingStorage::counts() const {
  std::lock_guard lock(mu_);
  return counts_;
}

std::uint32_t FaultInjectingStorage::upsert_session(const UserHash& user_hash, std::uint64_t start_time,
                                                    const SessionKey& key, std::uint16_t version,
                                                    const Identifiers& identifiers) {
  {
    std::lock_guard lock(mu_);
    ++counts_.upsert_session;
  }
  return inner_->upsert_session(user_hash, start_time, key, version, identifiers);
}

std::optional<SessionKeyInfo> FaultInjectingStorage::lookup_session_key(std::uint32_t session_id) {
  {
    std::lock_guard lock(mu_);
    ++counts_.lookup_session_key;
  }
  return inner_->lookup_session_key(session_id);
}

std::optional<SessionRecord> FaultInjectingStorage::read_session(std::uint32_t session_id) {
  return inner_->read_session(session_id);
}

std::size_t FaultInjectingStorage::write_rows(std::uint32_t session_id, const RowBatch& batch) {
  std::size_t drop = 0;
  {
    std::lock_guard lock(mu_);
    ++counts_.write_rows;
    if (plan_.fail_writes > 0) {
      --plan_.fail_writes;
      throw Error(Errc::storage_error, "injected write failure");
    }
    if (plan_.partial_writes > 0) {
      --plan_.partial_writes;
      drop = plan_.partial_drop;
    }
  }
  if (drop == 0) return inner_->write_rows(session_id, batch);
  // Keep the first rows in stream-major order, leave out the tail.
  std::size_t keep = batch.row_count() > drop ? batch.row_count() - drop : 0;
  RowBatch partial;
  for (const auto& [stream, rows] : batch.streams) {
    for (const auto& row : rows) {
      if (keep == 0) break;
      partial.append(stream, row);
      --keep;
    }
  }
  return partial.empty() ? 0 : inner_->write_rows(session_id, partial);
}

std::uint32_t FaultInjectingStorage::intern_auxiliary(const MacAddress& mac, std::string_view essid) {
  {
    std::lock_guard lock(mu_);
    ++counts_.intern_auxiliary;
  }
  return inner_->intern_auxiliary(mac, essid);
}

std::optional<AuxiliaryEntry> FaultInjectingStorage::lookup_auxiliary(std::uint32_t ap_id) {
  return inner_->lookup_auxiliary(ap_id);
}

std::vector<StoredRow> FaultInjectingStorage::read_session_rows(std::uint32_t session_id, const RowQuery& query) {
  {
    std::lock_guard lock(mu_);
    ++counts_.read_session_rows;
  }
  return inner_->read_session_rows(session_id, query);
}

StorageStats FaultInjectingStorage::storage_stats() { return inner_->storage_stats(); }

// ---- experiments ----

std::map<NaturalKey, std::pair<Stream, Row>> snapshot_session(Storage& storage, std::uint32_t session_id) {
  std::map<NaturalKey, std::pair<Stream, Row>> out;
  for (const auto& stored : storage.read_session_rows(session_id)) {
    auto key = stored.key();
    key.session_id = 0;
    out.emplace(key, std::make_pair(stored.stream, resolve_auxiliary(storage, stored.stream, stored.row)));
  }
  return out;
}

namespace {

struct Event {
  Millis at;
  std::uint64_t order;
  bool to_server;
  Channel channel;
  Bytes wire;

  bool operator>(const Event& other) const {
    return at != other.at ? at > other.at : order > other.order;
  }
};

std::string describe(const NaturalKey& key) {
  std::ostringstream out;
  out << to_string(key.stream) << " ts=" << key.ts << " ms=" << key.ms << " idx=" << key.idx;
  return out.str();
}

class Simulation final : public ClientLink {
 public:
  Simulation(const ExperimentConfig& config, const ServerKeyPair& keys, std::shared_ptr<Storage> storage)
      : config_(config),
        keys_(keys),
        storage_(std::move(storage)),
        server_rng_(config.client_seed ^ 0x5e57e7ULL),
        uplink_(config.uplink),
        downlink_(config.downlink) {
    start_server();
  }

  Millis now() override { return clock_; }

  void send(const Outgoing& out) override {
    for (auto at : uplink_.transmit(clock_)) push(Event{at, 0, true, out.channel, out.wire});
  }

  std::optional<Incoming> wait(Millis deadline) override {
    while (!events_.empty() && events_.top().at <= deadline) {
      Event ev = events_.top();
      events_.pop();
      clock_ = std::max(clock_, ev.at);
      if (!ev.to_server) return Incoming{ev.channel, std::move(ev.wire)};
      deliver_to_server(ev);
    }
    clock_ = std::max(clock_, deadline);
    return std::nullopt;
  }

  std::size_t responses_ = 0;
  std::size_t restarts_ = 0;
  std::size_t discards_ = 0;
  std::size_t dropped_while_down_ = 0;
  const LossyChannel& uplink() const { return uplink_; }
  const LossyChannel& downlink() const { return downlink_; }

 private:
  void push(Event ev) {
    ev.order = next_order_++;
    events_.push(std::move(ev));
  }

  void start_server() {
    engine_ = std::make_unique<IngestEngine>(keys_.private_part, storage_, config_.server, server_rng_);
  }

  void count_discards() {
    if (!engine_) return;
    auto m = engine_->metrics();
    discards_ += m["auth_discarded"] + m["data_discarded"];
  }

  void deliver_to_server(const Event& ev) {
    if (!engine_) {
      if (clock_ < down_until_) {
        ++dropped_while_down_;
        return;
      }
      start_server();
    }
    ++server_received_;
    if (next_restart_ < config_.restart_at_packets.size() &&
        server_received_ > config_.restart_at_packets[next_restart_]) {
      // Killed before handling this packet.
      ++next_restart_;
      ++restarts_;
      ++dropped_while_down_;
      count_discards();
      engine_.reset();
      down_until_ = clock_ + config_.restart_downtime;
      return;
    }
    std::optional<Bytes> reply = ev.channel == Channel::auth ? engine_->handle_auth_packet(ev.wire)
                                                             : engine_->handle_data_packet(ev.wire);
    if (!reply) return;
    ++responses_;
    for (auto at : downlink_.transmit(clock_)) push(Event{at, 0, false, ev.channel, *reply});
  }

 public:
  void finish() { count_discards(); }

 private:
  const ExperimentConfig& config_;
  const ServerKeyPair& keys_;
  std::shared_ptr<Storage> storage_;
  DeterministicRandom server_rng_;
  std::unique_ptr<IngestEngine> engine_;
  LossyChannel uplink_;
  LossyChannel downlink_;
  Millis clock_{0};
  std::uint64_t next_order_ = 0;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
  std::size_t server_received_ = 0;
  std::size_t next_restart_ = 0;
  Millis down_until_{0};
};

// Client-side instrumentation shared by the simulated and loopback modes.
class CountingLink final : public ClientLink {
 public:
  explicit CountingLink(ClientLink& inner) : inner_(inner) {}

  Millis now() override { return inner_.now(); }

  void send(const Outgoing& out) override {
    ++packets_sent;
    bytes_on_wire += out.wire.size();
    if (out.channel == Channel::data) {
      data_wire_bytes += out.wire.size();
      if (!first_data_at) first_data_at = inner_.now();
    } else if (session && !session->authenticated()) {
      ++handshake_client;
    }
    inner_.send(out);
  }

  std::optional<Incoming> wait(Millis deadline) override { return inner_.wait(deadline); }

  const ClientSession* session = nullptr;
  std::size_t packets_sent = 0;
  std::size_t bytes_on_wire = 0;
  std::size_t data_wire_bytes = 0;
  std::size_t handshake_client = 0;
  std::optional<Millis> first_data_at;

 private:
  ClientLink& inner_;
};

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config) {
  const auto wall_start = std::chrono::steady_clock::now();
  ServerKeyPair keys = config.keys ? *config.keys : generate_server_keypair(kDefaultRsaBits);
  std::shared_ptr<Storage> storage =
      config.storage_override ? config.storage_override : std::shared_ptr<Storage>(open_storage(config.storage));

  const auto session_rows = generate_session(config.workload);
  ExperimentReport report;
  std::map<NaturalKey, std::pair<Stream, Row>> expected;
  for (const auto& tb : session_rows) {
    for (const auto& [stream, rows] : tb.batch.streams) {
      for (const auto& row : rows) {
        expected.emplace(natural_key(0, stream, row), std::make_pair(stream, row));
        ++report.rows_generated;
      }
    }
  }

  std::vector<Millis> rotations = config.rotate_key_at;
  std::sort(rotations.begin(), rotations.end());
  std::vector<std::size_t> restarts = config.restart_at_packets;
  std::sort(restarts.begin(), restarts.end());
  ExperimentConfig sorted = config;
  sorted.restart_at_packets = restarts;

  // Either the virtual-clock simulation or a live daemon on loopback sockets.
  std::optional<Simulation> simulation;
  std::unique_ptr<Daemon> daemon;
  std::unique_ptr<SocketLink> socket_link;
  ClientLink* transport = nullptr;
  if (config.network == Network::simulated) {
    transport = &simulation.emplace(sorted, keys, storage);
  } else {
    if (!restarts.empty()) throw Error(Errc::config_error, "restart_at_packets needs the simulated network");
    DaemonConfig dc;
    dc.udp = config.network == Network::udp;
    dc.tcp = config.network == Network::tcp;
    dc.ingest = config.server;
    daemon = std::make_unique<Daemon>(keys.private_part, storage, dc);
    daemon->start();
    socket_link = connect_link(config.network == Network::udp ? Transport::udp : Transport::tcp,
                               ServerAddress{"127.0.0.1", daemon->auth_port(), daemon->data_port()},
                               config.client.max_packet_bytes);
    transport = socket_link.get();
  }
  CountingLink sim(*transport);

  DeterministicRandom client_rng(config.client_seed);
  auto begin = ClientSession::begin_session(keys.public_part, hash_user(config.email), config.workload.start_time,
                                            config.version, config.identifiers, sim.now(), config.client, client_rng);
  ClientSession& session = begin.session;
  sim.session = &session;
  sim.send(begin.out);

  std::size_t next_batch = 0;
  auto enqueue_until = [&](Millis t) {
    while (next_batch < session_rows.size() &&
           Millis(std::int64_t{session_rows[next_batch].offset_s + 1} * 1000) <= t) {
      if (!session_rows[next_batch].batch.empty()) session.enqueue_rows(session_rows[next_batch].batch);
      ++next_batch;
    }
  };
  auto flush_all = [&] {
    RowBatch all;
    for (; next_batch < session_rows.size(); ++next_batch) all.append(session_rows[next_batch].batch);
    if (!all.empty()) session.enqueue_rows(all);
  };
  if (!config.realtime) flush_all();
  Millis next_flush = config.flush_period;
  std::size_t next_rotation = 0;

  std::set<std::uint32_t> ids;
  std::optional<Millis> authenticated_at;
  std::size_t handshake_server = 0;
  const Millis deadline = config.drain_timeout + Millis(config.realtime ? std::int64_t{config.workload.duration_s} * 1000 : 0);

  while (true) {
    const Millis now = sim.now();
    if (config.realtime && next_batch < session_rows.size() && now >= next_flush) {
      enqueue_until(next_flush);
      next_flush += config.flush_period;
    }
    while (next_rotation < rotations.size() && now >= rotations[next_rotation]) {
      sim.send(session.update_session(generate_session_key(client_rng), std::nullopt, now).out);
      ++next_rotation;
    }
    for (const auto& out : session.pump(now)) sim.send(out);

    const bool all_enqueued = next_batch >= session_rows.size();
    if (all_enqueued && session.finished() && next_rotation >= rotations.size()) break;
    if (now >= deadline) {
      report.timed_out = true;
      break;
    }
    Millis wake = deadline;
    if (auto d = session.next_deadline()) wake = std::min(wake, std::max(*d, now));
    if (config.realtime && !all_enqueued) wake = std::min(wake, next_flush);
    if (next_rotation < rotations.size()) wake = std::min(wake, rotations[next_rotation]);

    auto in = sim.wait(wake);
    if (!in) continue;
    if (in->channel == Channel::auth) {
      const bool was_authenticated = session.authenticated();
      if (!was_authenticated) ++handshake_server;
      if (auto outcome = session.receive_auth(in->wire); outcome == AuthOutcome::authenticated) {
        ids.insert(*session.session_id());
        if (!was_authenticated) authenticated_at = sim.now();
      }
    } else if (auto ack = session.receive_feedback(in->wire)) {
      if (ack->stored_rows == ack->sent_rows) report.feedback_stored_total += ack->stored_rows;
    }
  }
  if (simulation) simulation->finish();
  if (daemon) daemon->shutdown();

  const auto& stats = session.stats();
  report.rows_delivered = stats.delivered_rows;
  report.rows_failed = stats.failed_rows;
  report.retransmissions = stats.retransmissions;
  report.packets_sent = sim.packets_sent;
  if (simulation) {
    const auto& up = simulation->uplink().stats();
    const auto& down = simulation->downlink().stats();
    report.packets_lost = up.lost + down.lost + simulation->dropped_while_down_;
    report.packets_duplicated = up.duplicated + down.duplicated;
    report.packets_reordered = up.reordered + down.reordered;
    report.responses_sent = simulation->responses_;
    report.restarts = simulation->restarts_;
    report.server_discards = simulation->discards_;
  } else {
    auto m = daemon->metrics();
    report.responses_sent = m["feedback_sent"] + m["auth_accepted"];
    report.server_discards = m["auth_discarded"] + m["data_discarded"];
  }
  report.data_packets = stats.data_packets_sent;
  report.packets_reencoded = stats.packets_reencoded;
  report.reauths = stats.reauths;
  report.bytes_on_wire = sim.bytes_on_wire;
  report.data_wire_bytes = sim.data_wire_bytes;
  report.json_bytes = stats.json_bytes;
  report.compression_ratio =
      stats.json_bytes ? static_cast<double>(sim.data_wire_bytes) / static_cast<double>(stats.json_bytes) : 0;
  report.virtual_time_s = static_cast<double>(sim.now().count()) / 1000.0;
  report.throughput_rows_per_s = report.virtual_time_s > 0 ? report.rows_delivered / report.virtual_time_s : 0;
  report.handshake_client_packets = sim.handshake_client;
  report.handshake_server_packets = handshake_server;
  if (authenticated_at && sim.first_data_at) {
    report.first_data_delay_ms = static_cast<double>((*sim.first_data_at - *authenticated_at).count());
  }
  report.session_ids_seen.assign(ids.begin(), ids.end());

  if (auto id = session.session_id()) {
    report.session_id = *id;
    auto actual = snapshot_session(*storage, *id);
    report.rows_stored = actual.size();
    report.stored_bytes = 0;
    for (const auto& [key, value] : actual) report.stored_bytes += packed_row_bytes(value.first, value.second);

    auto ei = expected.begin();
    auto ai = actual.begin();
    while (report.first_divergence.empty() && (ei != expected.end() || ai != actual.end())) {
      if (ai == actual.end() || (ei != expected.end() && ei->first < ai->first)) {
        report.first_divergence = "missing " + describe(ei->first);
      } else if (ei == expected.end() || ai->first < ei->first) {
        report.first_divergence = "unexpected " + describe(ai->first);
      } else if (ei->second != ai->second) {
        report.first_divergence = "differs " + describe(ei->first);
      } else {
        ++ei;
        ++ai;
      }
    }
    report.verified = report.first_divergence.empty();
  } else {
    report.first_divergence = "never authenticated";
  }
  report.stored_bytes_per_second =
      config.workload.duration_s ? static_cast<double>(report.stored_bytes) / config.workload.duration_s : 0;
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();

  if (!report.verified && report.rows_failed == 0 && !report.timed_out && report.session_id != 0) {
    throw Error(Errc::verification_failed, report.first_divergence);
  }
  return report;
}

// ---- config files ----

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw Error(Errc::config_error, "bad value for " + key + ": '" + value + "'");
  return out;
}

double parse_probability(const std::string& key, const std::string& value) {
  const auto p = parse_number<double>(key, value);
  if (!(p >= 0 && p <= 1)) throw Error(Errc::config_error, key + " must be within [0, 1]");
  return p;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw Error(Errc::config_error, "bad boolean for " + key + ": '" + value + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& value) {
  std::vector<T> out;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_number<T>(key, item));
  }
  return out;
}

}  // namespace

ExperimentConfig parse_experiment_config(std::string_view text) {
  ExperimentConfig c;
  std::optional<std::string> channel_keys_both;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(Errc::config_error, "line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    auto& w = c.workload;
    auto num = [&]<typename T>(T& field) { field = parse_number<T>(key, value); };
    auto both = [&](auto setter) {
      setter(c.uplink);
      setter(c.downlink);
    };

    if (key == "network") {
      if (value == "simulated") c.network = Network::simulated;
      else if (value == "udp") c.network = Network::udp;
      else if (value == "tcp") c.network = Network::tcp;
      else throw Error(Errc::config_error, "network must be 'simulated', 'udp' or 'tcp'");
    } else if (key == "workload") {
      const auto seed = w.seed;
      const auto duration = w.duration_s;
      if (value == "typical") w = WorkloadConfig::typical();
      else if (value == "maximum") w = WorkloadConfig::maximum();
      else throw Error(Errc::config_error, "workload must be 'typical' or 'maximum'");
      w.seed = seed;
      w.duration_s = duration;
    } else if (key == "duration_s") num(w.duration_s);
    else if (key == "start_time") num(w.start_time);
    else if (key == "gps_hz") num(w.gps_hz);
    else if (key == "accel_hz") num(w.accel_hz);
    else if (key == "gyro_hz") num(w.gyro_hz);
    else if (key == "mag_hz") num(w.mag_hz);
    else if (key == "wifi_scan_min_s") num(w.wifi_scan_min_s);
    else if (key == "wifi_scan_max_s") num(w.wifi_scan_max_s);
    else if (key == "wifi_aps_min") num(w.wifi_aps_min);
    else if (key == "wifi_aps_max") num(w.wifi_aps_max);
    else if (key == "ap_pool_size") num(w.ap_pool_size);
    else if (key == "zipf_exponent") num(w.zipf_exponent);
    else if (key == "bt_period_s") num(w.bt_period_s);
    else if (key == "bt_devices") num(w.bt_devices);
    else if (key == "pressure_period_s") num(w.pressure_period_s);
    else if (key == "obd_hz") num(w.obd_hz);
    else if (key == "event_period_s") num(w.event_period_s);
    else if (key == "workload_seed") num(w.seed);
    else if (key == "loss_prob") both([&](ChannelConfig& ch) { ch.loss_prob = parse_probability(key, value); });
    else if (key == "uplink_loss_prob") c.uplink.loss_prob = parse_probability(key, value);
    else if (key == "downlink_loss_prob") c.downlink.loss_prob = parse_probability(key, value);
    else if (key == "latency_ms") both([&](ChannelConfig& ch) { ch.latency = Millis(parse_number<std::int64_t>(key, value)); });
    else if (key == "jitter_ms") both([&](ChannelConfig& ch) { ch.jitter = Millis(parse_number<std::int64_t>(key, value)); });
    else if (key == "reorder_prob") both([&](ChannelConfig& ch) { ch.reorder_prob = parse_probability(key, value); });
    else if (key == "reorder_delay_ms") both([&](ChannelConfig& ch) { ch.reorder_delay = Millis(parse_number<std::int64_t>(key, value)); });
    else if (key == "duplicate_prob") both([&](ChannelConfig& ch) { ch.duplicate_prob = parse_probability(key, value); });
    else if (key == "channel_seed") {
      const auto seed = parse_number<std::uint64_t>(key, value);
      c.uplink.seed = seed;
      c.downlink.seed = seed + 1;
    } else if (key == "window") num(c.client.window);
    else if (key == "max_packet_bytes") {
      num(c.client.max_packet_bytes);
      c.server.max_packet_bytes = c.client.max_packet_bytes;
    } else if (key == "max_retries") num(c.client.retry.max_retries);
    else if (key == "retry_base_ms") c.client.retry.base = Millis(parse_number<std::int64_t>(key, value));
    else if (key == "retry_max_ms") c.client.retry.max = Millis(parse_number<std::int64_t>(key, value));
    else if (key == "cache_capacity") num(c.server.cache_capacity);
    else if (key == "realtime") c.realtime = parse_bool(key, value);
    else if (key == "flush_period_ms") c.flush_period = Millis(parse_number<std::int64_t>(key, value));
    else if (key == "restart_at_packets") c.restart_at_packets = parse_list<std::size_t>(key, value);
    else if (key == "restart_downtime_ms") c.restart_downtime = Millis(parse_number<std::int64_t>(key, value));
    else if (key == "rotate_key_at_ms") {
      c.rotate_key_at.clear();
      for (auto ms : parse_list<std::int64_t>(key, value)) c.rotate_key_at.push_back(Millis(ms));
    } else if (key == "storage") c.storage = value;
    else if (key == "email") c.email = value;
    else if (key == "version") num(c.version);
    else if (key == "client_seed") num(c.client_seed);
    else if (key == "drain_timeout_s") c.drain_timeout = Millis(parse_number<std::int64_t>(key, value) * 1000);
    else if (key == "server_key") c.keys = ServerKeyPair{PrivateKey::load(value).public_key(), PrivateKey::load(value)};
    else throw Error(Errc::config_error, "line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::config_error, "cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_experiment_config(buf.str());
}

std::string report_to_json(const ExperimentReport& r) {
  detail::Json j = {
      {"rows_generated", r.rows_generated},
      {"rows_stored", r.rows_stored},
      {"rows_delivered", r.rows_delivered},
      {"rows_failed", r.rows_failed},
      {"retransmissions", r.retransmissions},
      {"packets_sent", r.packets_sent},
      {"packets_lost", r.packets_lost},
      {"packets_duplicated", r.packets_duplicated},
      {"packets_reordered", r.packets_reordered},
      {"responses_sent", r.responses_sent},
      {"data_packets", r.data_packets},
      {"packets_reencoded", r.packets_reencoded},
      {"reauths", r.reauths},
      {"bytes_on_wire", r.bytes_on_wire},
      {"data_wire_bytes", r.data_wire_bytes},
      {"json_bytes", r.json_bytes},
      {"compression_ratio", r.compression_ratio},
      {"stored_bytes", r.stored_bytes},
      {"stored_bytes_per_second", r.stored_bytes_per_second},
      {"virtual_time_s", r.virtual_time_s},
      {"wall_time_s", r.wall_time_s},
      {"throughput_rows_per_s", r.throughput_rows_per_s},
      {"handshake_client_packets", r.handshake_client_packets},
      {"handshake_server_packets", r.handshake_server_packets},
      {"first_data_delay_ms", r.first_data_delay_ms},
      {"restarts", r.restarts},
      {"server_discards", r.server_discards},
      {"feedback_stored_total", r.feedback_stored_total},
      {"session_id", r.session_id},
      {"session_ids_seen", r.session_ids_seen},
      {"verified", r.verified},
      {"first_divergence", r.first_divergence},
      {"timed_out", r.timed_out},
  };
  return detail::dump_canonical(j);
}

std::string report_to_table(const ExperimentReport& r) {
  std::ostringstream out;
  auto row = [&](const char* name, const auto& value) { out << std::left << std::setw(26) << name << value << '\n'; };
  row("rows generated", r.rows_generated);
  row("rows stored", r.rows_stored);
  row("rows delivered", r.rows_delivered);
  row("rows failed", r.rows_failed);
  row("retransmissions", r.retransmissions);
  row("packets sent", r.packets_sent);
  row("packets lost", r.packets_lost);
  row("packets duplicated", r.packets_duplicated);
  row("packets reordered", r.packets_reordered);
  row("responses sent", r.responses_sent);
  row("bytes on wire", r.bytes_on_wire);
  row("json bytes", r.json_bytes);
  out << std::left << std::setw(26) << "compression ratio" << std::fixed << std::setprecision(4) << r.compression_ratio
      << '\n';
  row("stored bytes", r.stored_bytes);
  out << std::left << std::setw(26) << "stored B/s" << std::setprecision(1) << r.stored_bytes_per_second << '\n';
  out << std::left << std::setw(26) << "virtual time s" << std::setprecision(3) << r.virtual_time_s << '\n';
  out << std::left << std::setw(26) << "throughput rows/s" << std::setprecision(1) << r.throughput_rows_per_s << '\n';
  row("handshake packets", std::to_string(r.handshake_client_packets) + " up / " +
                               std::to_string(r.handshake_server_packets) + " down");
  row("restarts", r.restarts);
  row("verified", r.verified ? "yes" : ("no: " + r.first_divergence));
  return out.str();
}

}  // namespace sensorlink
