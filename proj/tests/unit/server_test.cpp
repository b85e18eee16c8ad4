#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "sensorlink/error.hpp"
#include "sensorlink/server.hpp"
#include "sensorlink/sim.hpp"
#include "sensorlink/storage.hpp"
#include "support.hpp"

using namespace sensorlink;
using namespace sensorlink::testing;

namespace {

constexpr std::uint64_t kStart = 1'400'000'000;

struct Fixture {
  Fixture(IngestConfig cfg = {}) : storage(make_memory_storage()), engine(test_keys().private_part, storage, cfg) {}

  Bytes auth(const AuthRequest& req) { return encode_auth_request(req, test_keys().public_part); }

  std::uint32_t login(const AuthRequest& req) {
    auto reply = engine.handle_auth_packet(auth(req));
    EXPECT_TRUE(reply);
    auto resp = decode_auth_response(*reply, req.key);
    EXPECT_EQ(resp.seq, req.seq);
    EXPECT_EQ(resp.time, req.time);
    return resp.session_id;
  }

  std::shared_ptr<Storage> storage;
  IngestEngine engine;
};

AuthRequest request(Gen& g, std::uint32_t seq = 1) {
  return AuthRequest{seq, random_hash(g), kStart, random_key(g), 1, {}};
}

std::uint64_t metric(const MetricsSnapshot& m, const std::string& name) {
  auto it = m.find(name);
  return it == m.end() ? 0 : it->second;
}

}  // namespace

TEST(SessionKeyCache, LruWithStorageFallback) {
  auto storage = std::shared_ptr<Storage>(make_memory_storage());
  Gen g(1);
  std::vector<std::pair<std::uint32_t, SessionKey>> sessions;
  for (int i = 0; i < 3; ++i) {
    auto k = random_key(g);
    sessions.emplace_back(storage->upsert_session(random_hash(g), kStart, k, 1, {}), k);
  }
  SessionKeyCache cache(storage, 2);
  cache.put(sessions[0].first, sessions[0].second);
  cache.put(sessions[1].first, sessions[1].second);
  EXPECT_EQ(cache.lookup(sessions[0].first), sessions[0].second);
  cache.put(sessions[2].first, sessions[2].second);  // evicts sessions[1]
  EXPECT_EQ(cache.size(), 2u);
  EXPECT_EQ(cache.hits(), 1u);
  EXPECT_EQ(cache.lookup(sessions[1].first), sessions[1].second);  // from storage
  EXPECT_EQ(cache.misses(), 1u);
  EXPECT_FALSE(cache.lookup(9999));
  cache.clear();
  EXPECT_EQ(cache.size(), 0u);
}

TEST(SessionKeyCache, ZeroCapacityReadsThrough) {
  auto storage = std::shared_ptr<Storage>(make_memory_storage());
  Gen g(2);
  auto k = random_key(g);
  auto id = storage->upsert_session(random_hash(g), kStart, k, 1, {});
  SessionKeyCache cache(storage, 0);
  cache.put(id, random_key(g));
  EXPECT_EQ(cache.lookup(id), k);
  EXPECT_EQ(cache.size(), 0u);
}

TEST(IngestEngine, AuthIsIdempotentOnHashAndTime) {
  Fixture f;
  Gen g(3);
  auto req = request(g);
  const auto id = f.login(req);
  EXPECT_EQ(f.login(req), id);
  auto again = req;
  again.seq = 2;
  again.key = random_key(g);
  EXPECT_EQ(f.login(again), id);
  EXPECT_EQ(f.storage->lookup_session_key(id)->key, again.key);
  again.time += 1;
  EXPECT_NE(f.login(again), id);
  EXPECT_EQ(f.storage->storage_stats().sessions, 2u);
}

TEST(IngestEngine, DataStoredAndAcknowledged) {
  Fixture f;
  Gen g(4);
  auto req = request(g);
  const auto id = f.login(req);
  auto batch = random_batch(g);
  auto wire = encode_data_packet(DataPacket{id, 77, batch}, req.key);
  auto reply = f.engine.handle_data_packet(wire);
  ASSERT_TRUE(reply);
  auto fb = decode_feedback(*reply, req.key);
  EXPECT_EQ(fb.session_id, id);
  EXPECT_EQ(fb.seq, 77u);
  EXPECT_EQ(fb.stored, batch.row_count());
  // Replays are acknowledged again but store nothing new.
  auto replay = f.engine.handle_data_packet(wire);
  ASSERT_TRUE(replay);
  EXPECT_EQ(decode_feedback(*replay, req.key).stored, batch.row_count());
  EXPECT_EQ(f.storage->storage_stats().total_rows(), batch.row_count());
  auto m = f.engine.metrics();
  EXPECT_EQ(metric(m, "data_accepted"), 2u);
  EXPECT_EQ(metric(m, "feedback_sent"), 2u);
  EXPECT_EQ(metric(m, "rows_received"), 2 * batch.row_count());
}

TEST(IngestEngine, AcknowledgedRowsAreReadable) {
  Fixture f;
  Gen g(14);
  for (std::uint32_t seq = 1; seq <= 20; ++seq) {
    auto req = request(g, seq);
    const auto id = f.login(req);
    auto batch = random_batch(g);
    auto reply = f.engine.handle_data_packet(encode_data_packet(DataPacket{id, seq, batch}, req.key));
    ASSERT_TRUE(reply);
    const auto fb = decode_feedback(*reply, req.key);
    std::set<NaturalKey> expected;
    for (const auto& [stream, rows] : batch.streams) {
      for (const auto& row : rows) expected.insert(natural_key(id, stream, row));
    }
    std::set<NaturalKey> stored;
    for (const auto& r : f.storage->read_session_rows(id)) stored.insert(r.key());
    EXPECT_EQ(fb.stored, expected.size());
    EXPECT_EQ(stored, expected);
  }
}

TEST(IngestEngine, NoCrossSessionLeakage) {
  Fixture f;
  Gen g(15);
  auto a = request(g, 1);
  auto b = request(g, 2);
  const auto id_a = f.login(a);
  const auto id_b = f.login(b);
  ASSERT_NE(id_a, id_b);
  for (int i = 0; i < 50; ++i) {
    // Encrypted under A's key but claiming to be B, and vice versa.
    EXPECT_FALSE(f.engine.handle_data_packet(encode_data_packet(DataPacket{id_b, 1, random_batch(g)}, a.key)));
    EXPECT_FALSE(f.engine.handle_data_packet(encode_data_packet(DataPacket{id_a, 1, random_batch(g)}, b.key)));
  }
  EXPECT_TRUE(f.storage->read_session_rows(id_a).empty());
  EXPECT_TRUE(f.storage->read_session_rows(id_b).empty());
  auto batch = random_batch(g);
  ASSERT_TRUE(f.engine.handle_data_packet(encode_data_packet(DataPacket{id_a, 2, batch}, a.key)));
  EXPECT_FALSE(f.storage->read_session_rows(id_a).empty());
  EXPECT_TRUE(f.storage->read_session_rows(id_b).empty());
}

TEST(IngestEngine, DiscardsWithoutMutationOrReply) {
  Fixture f;
  Gen g(5);
  auto req = request(g);
  const auto id = f.login(req);
  const auto before = f.storage->storage_stats();

  EXPECT_FALSE(f.engine.handle_data_packet(encode_data_packet(DataPacket{id + 1, 1, random_batch(g)}, req.key)));
  EXPECT_FALSE(f.engine.handle_data_packet(encode_data_packet(DataPacket{id, 1, random_batch(g)}, random_key(g))));
  EXPECT_FALSE(f.engine.handle_data_packet(Bytes{1, 2, 3}));
  EXPECT_FALSE(f.engine.handle_auth_packet(random_bytes(g, 512)));
  EXPECT_FALSE(f.engine.handle_auth_packet(Bytes{}));

  const auto after = f.storage->storage_stats();
  EXPECT_EQ(after.sessions, before.sessions);
  EXPECT_EQ(after.total_rows(), before.total_rows());
  auto m = f.engine.metrics();
  EXPECT_EQ(metric(m, "data_discarded_unknown_session"), 1u);
  EXPECT_EQ(metric(m, "data_discarded"), 3u);
  EXPECT_EQ(metric(m, "auth_discarded"), 2u);
  EXPECT_EQ(metric(m, "auth_accepted"), 1u);
}

TEST(IngestEngine, RotatedOutKeyRejected) {
  Fixture f;
  Gen g(6);
  auto req = request(g);
  const auto id = f.login(req);
  const auto old_key = req.key;
  req.key = random_key(g);
  req.seq = 2;
  EXPECT_EQ(f.login(req), id);
  EXPECT_FALSE(f.engine.handle_data_packet(encode_data_packet(DataPacket{id, 1, random_batch(g)}, old_key)));
  EXPECT_TRUE(f.engine.handle_data_packet(encode_data_packet(DataPacket{id, 2, random_batch(g)}, req.key)));
}

TEST(IngestEngine, StorageFailureSuppressesFeedback) {
  auto faulty = std::make_shared<FaultInjectingStorage>(std::shared_ptr<Storage>(make_memory_storage()),
                                                        FaultPlan{1, 0, 0});
  IngestEngine engine(test_keys().private_part, faulty);
  Gen g(7);
  auto req = request(g);
  auto reply = engine.handle_auth_packet(encode_auth_request(req, test_keys().public_part));
  const auto id = decode_auth_response(*reply, req.key).session_id;
  auto wire = encode_data_packet(DataPacket{id, 1, random_batch(g)}, req.key);
  EXPECT_FALSE(engine.handle_data_packet(wire));
  EXPECT_EQ(metric(engine.metrics(), "data_discarded_storage_error"), 1u);
  EXPECT_TRUE(engine.handle_data_packet(wire));
}

TEST(IngestEngine, OversizeBlobsDiscarded) {
  IngestConfig cfg;
  cfg.max_packet_bytes = 600;
  Fixture f(cfg);
  Gen g(8);
  auto req = request(g);
  const auto id = f.login(req);
  RowBatch big;
  while (big.row_count() < 400) big.append(random_batch(g));
  auto wire = encode_data_packet(DataPacket{id, 1, big}, req.key);
  ASSERT_GT(wire.size(), 600u);
  EXPECT_FALSE(f.engine.handle_data_packet(wire));
}

// Each packet is handled independently: any interleaving of auths, data
// and replays from several clients leaves storage equal to the union of
// the distinct rows sent after each session's first auth.
TEST(IngestEngine, PropertyOrderIndependence) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Gen g(seed);
    Fixture f;
    struct Client {
      AuthRequest req;
      std::uint32_t id = 0;
      std::vector<RowBatch> batches;
    };
    std::vector<Client> clients;
    for (int i = 0; i < 4; ++i) {
      Client c{request(g, 1), 0, {}};
      c.id = f.login(c.req);
      for (int b = 0; b < 8; ++b) c.batches.push_back(random_batch(g, 15));
      clients.push_back(std::move(c));
    }
    std::vector<std::pair<std::size_t, Bytes>> packets;
    for (std::size_t ci = 0; ci < clients.size(); ++ci) {
      auto& c = clients[ci];
      for (std::size_t b = 0; b < c.batches.size(); ++b) {
        packets.emplace_back(ci, encode_data_packet(DataPacket{c.id, static_cast<std::uint32_t>(b + 1), c.batches[b]}, c.req.key));
      }
    }
    const std::size_t n = packets.size();
    for (std::size_t i = 0; i < n; ++i) packets.push_back(packets[g() % n]);  // replays
    std::shuffle(packets.begin(), packets.end(), g);
    for (auto& [ci, wire] : packets) {
      if (g() % 5 == 0) f.login(clients[ci].req);  // duplicate auth
      ASSERT_TRUE(f.engine.handle_data_packet(wire));
    }
    for (auto& c : clients) {
      std::set<NaturalKey> expected;
      for (auto& b : c.batches) {
        for (auto& [stream, rows] : b.streams) {
          for (auto& row : rows) expected.insert(natural_key(c.id, stream, row));
        }
      }
      std::set<NaturalKey> got;
      for (auto& r : f.storage->read_session_rows(c.id)) got.insert(r.key());
      EXPECT_EQ(got, expected) << "seed " << seed;
    }
  }
}

TEST(FormatMetrics, SortedKeyValueLines) {
  EXPECT_EQ(format_metrics({{"b", 2}, {"a", 1}}), "a 1\nb 2\n");
}
