#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "sensorlink/codec.hpp"
#include "sensorlink/error.hpp"
#include "sensorlink/sim.hpp"
#include "support.hpp"

using namespace sensorlink;
using namespace sensorlink::testing;

namespace {

Errc code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return Errc::invalid_argument;
}

bool declared_decode_error(Errc c) {
  switch (c) {
    case Errc::decrypt_failed:
    case Errc::checksum_mismatch:
    case Errc::output_limit_exceeded:
    case Errc::malformed_payload:
    case Errc::unknown_session:
    case Errc::frame_too_large:
    case Errc::truncated_stream:
      return true;
    default:
      return false;
  }
}

}  // namespace

TEST(Serialize, AuthResponseCanonicalForm) {
  EXPECT_EQ(serialize_payload(AuthResponse{1, 1400000000, 42}), R"({"seq":1,"session_id":42,"time":1400000000})");
}

TEST(Serialize, FeedbackCanonicalForm) {
  EXPECT_EQ(serialize_payload(FeedbackPacket{99, 3, 120}), R"({"seq":3,"stored":120})");
}

TEST(Serialize, AuthRequestKeysSortedAndHexKey) {
  AuthRequest r{5, hash_user("alice@example.com"), 1400000000,
                SessionKey::from_hex("000102030405060708090a0b0c0d0e0f"), 2, {}};
  EXPECT_EQ(serialize_payload(r), R"({"hash":")" + r.hash.hex() +
                                      R"(","key":"000102030405060708090a0b0c0d0e0f","seq":5,"time":1400000000,"version":2})");
  r.identifiers = {{"vehicle", "car-7"}, {"device", "n5"}};
  EXPECT_NE(serialize_payload(r).find(R"("identifiers":{"device":"n5","vehicle":"car-7"})"), std::string::npos);
}

TEST(Serialize, NoIdentifiersMeansFieldAbsent) {
  Gen g(1);
  AuthRequest r = random_auth_request(g);
  r.identifiers.clear();
  EXPECT_EQ(serialize_payload(r).find("identifiers"), std::string::npos);
}

TEST(Serialize, NoInsignificantWhitespace) {
  Gen g(2);
  RowBatch b;
  b.append(Stream::pressure, Row{1400000000, std::nullopt, 0, PressureSample{1013.25}});
  const auto json = serialize_payload(DataPacket{1, 2, b});
  EXPECT_EQ(json.find(' '), std::string::npos);
  EXPECT_EQ(json.find('\n'), std::string::npos);
}

TEST(Serialize, RoundTripRandomPayloads) {
  Gen g(3);
  for (int i = 0; i < 1000; ++i) {
    auto req = random_auth_request(g);
    EXPECT_EQ(deserialize_payload<AuthRequest>(serialize_payload(req)), req);
    auto resp = random_auth_response(g);
    EXPECT_EQ(deserialize_payload<AuthResponse>(serialize_payload(resp)), resp);
    auto fb = random_feedback(g);
    EXPECT_EQ(deserialize_payload<FeedbackPacket>(serialize_payload(fb)), fb);
    DataPacket pkt{0, static_cast<std::uint32_t>(g()), random_batch(g, 25, true)};
    EXPECT_EQ(deserialize_payload<DataPacket>(serialize_payload(pkt)), pkt);
  }
}

TEST(Serialize, DeterministicBytes) {
  Gen g(4);
  for (int i = 0; i < 50; ++i) {
    DataPacket pkt{0, 1, random_batch(g, 40, true)};
    DataPacket copy = pkt;
    EXPECT_EQ(serialize_payload(pkt), serialize_payload(pkt));
    EXPECT_EQ(serialize_payload(pkt), serialize_payload(copy));
  }
}

TEST(Serialize, NonRepresentableValuesRejected) {
  RowBatch b;
  b.append(Stream::pressure, Row{1, std::nullopt, 0, PressureSample{std::numeric_limits<double>::quiet_NaN()}});
  EXPECT_EQ(code_of([&] { serialize_payload(DataPacket{1, 1, b}); }), Errc::non_representable);
  RowBatch c;
  c.append(Stream::gps, Row{1, 0, 0, GpsFix{std::numeric_limits<double>::infinity(), 0, 0, 0, 0, 0}});
  EXPECT_EQ(code_of([&] { serialize_payload(DataPacket{1, 1, c}); }), Errc::non_representable);
  RowBatch d;
  d.append(Stream::events, Row{1, std::nullopt, 0, EventRecord{"bad", std::string("\xff\xfe")}});
  EXPECT_EQ(code_of([&] { serialize_payload(DataPacket{1, 1, d}); }), Errc::non_representable);
}

TEST(Deserialize, UnknownKeysIgnored) {
  auto resp = deserialize_payload<AuthResponse>(R"({"extra":[1,2,{"x":null}],"seq":1,"session_id":42,"time":7,"zz":"y"})");
  EXPECT_EQ(resp, (AuthResponse{1, 7, 42}));
  auto fb = deserialize_payload<FeedbackPacket>(R"({"future":true,"seq":9,"stored":3})");
  EXPECT_EQ(fb.stored, 3u);
}

TEST(Deserialize, MalformedRejected) {
  for (const char* bad : {"", "{", "[]", "null", R"({"seq":1})", R"({"seq":-1,"session_id":1,"time":1})",
                          R"({"seq":"1","session_id":1,"time":1})", R"({"seq":1,"session_id":1,"time":1.5})",
                          R"({"seq":4294967296,"session_id":1,"time":1})", R"({"seq":1,"session_id":0,"time":1})"}) {
    EXPECT_EQ(code_of([&] { deserialize_payload<AuthResponse>(bad); }), Errc::malformed_payload) << bad;
  }
  // Schema violations inside rows.
  for (const char* bad : {R"({"seq":1,"streams":{"gps":[{"ts":1,"idx":0,"lat":1,"lon":1,"alt":1,"speed":1,"accuracy":1,"device_ts":1}]}})",
                          R"({"seq":1,"streams":{"nosuch":[]}})", R"({"seq":1,"streams":{"accel":[{"ts":1,"rate":5,"samples":[]}]}})",
                          R"({"seq":1,"streams":{"obd":[{"ts":1,"ms":1000,"pid":12,"value":3}]}})", R"({"seq":1})"}) {
    EXPECT_EQ(code_of([&] { deserialize_payload<DataPacket>(bad); }), Errc::malformed_payload) << bad;
  }
}

TEST(Deserialize, DeepNestingRejected) {
  std::string deep = R"({"seq":1,"stored":1,"x":)";
  for (int i = 0; i < 100; ++i) deep += "[";
  for (int i = 0; i < 100; ++i) deep += "]";
  deep += "}";
  EXPECT_EQ(code_of([&] { deserialize_payload<FeedbackPacket>(deep); }), Errc::malformed_payload);
}

TEST(Compress, RoundTrip) {
  Gen g(5);
  for (int i = 0; i < 200; ++i) {
    auto m = random_bytes(g, g() % 20000);
    EXPECT_EQ(decompress(compress(m)), m);
  }
  EXPECT_EQ(decompress(compress(Bytes{})), Bytes{});
}

TEST(Compress, ZlibContainer) {
  auto c = compress(as_bytes("hello hello hello"));
  ASSERT_GE(c.size(), 6u);
  EXPECT_EQ(c[0] & 0x0f, 8);  // deflate
  EXPECT_EQ((c[0] * 256 + c[1]) % 31, 0);
}

TEST(Compress, SingleByteCorruptionDetected) {
  Gen g(6);
  int silent = 0;
  for (int i = 0; i < 1000; ++i) {
    auto m = random_bytes(g, 50 + g() % 2000);
    // Mix in structure so the deflate body is not all literals.
    for (std::size_t j = 0; j < m.size(); j += 3) m[j] = 'a';
    auto c = compress(m);
    const std::size_t pos = g() % c.size();
    c[pos] ^= static_cast<std::uint8_t>(1 + g() % 255);
    try {
      decompress(c);
      ++silent;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::checksum_mismatch);
    }
  }
  EXPECT_LE(silent, 1);
}

TEST(Compress, TruncationDetected) {
  auto c = compress(as_bytes(std::string(5000, 'x') + "tail"));
  for (std::size_t n = 0; n < c.size(); ++n) {
    EXPECT_EQ(code_of([&] { decompress(ByteView(c).first(n)); }), Errc::checksum_mismatch) << n;
  }
}

TEST(Compress, OutputLimitEnforced) {
  auto bomb = compress(Bytes(kDefaultMaxDecompressed + 1, 0));
  EXPECT_LT(bomb.size(), 10000u);
  EXPECT_EQ(code_of([&] { decompress(bomb); }), Errc::output_limit_exceeded);
  EXPECT_EQ(code_of([&] { decompress(compress(Bytes(101)), 100); }), Errc::output_limit_exceeded);
  EXPECT_EQ(decompress(compress(Bytes(100)), 100).size(), 100u);
}

TEST(Compress, SessionJsonCompressesBelowOneFifth) {
  WorkloadConfig w;
  w.duration_s = 3600;
  RowBatch all;
  for (const auto& tb : generate_session(w)) all.append(tb.batch);
  const auto json = serialize_payload(DataPacket{0, 1, all});
  const auto packed = compress(as_bytes(json));
  EXPECT_GT(json.size(), 1'000'000u);
  EXPECT_LE(static_cast<double>(packed.size()), 0.20 * static_cast<double>(json.size()));
}

TEST(AuthRequestWire, MinimalIsOneBlock) {
  Gen g(7);
  auto req = random_auth_request(g);
  req.identifiers.clear();
  auto wire = encode_auth_request(req, test_keys().public_part);
  EXPECT_EQ(wire.size(), 512u);
  EXPECT_EQ(decode_auth_request(wire, test_keys().private_part), req);
}

TEST(AuthRequestWire, CompressibleKilobyteOfIdentifiersFits) {
  Gen g(8);
  auto req = random_auth_request(g);
  req.identifiers.clear();
  for (int i = 0; i < 16; ++i) req.identifiers["sensor" + std::to_string(i)] = std::string(50, 'x') + "-model-A";
  ASSERT_GT(serialize_payload(req).size(), 1024u);
  auto wire = encode_auth_request(req, test_keys().public_part);
  EXPECT_EQ(wire.size(), 512u);
  EXPECT_EQ(decode_auth_request(wire, test_keys().private_part), req);
}

TEST(AuthRequestWire, RandomFourKilobytesTooLong) {
  Gen g(9);
  auto req = random_auth_request(g);
  req.identifiers.clear();
  req.identifiers["blob"] = to_hex(random_bytes(g, 2048));
  try {
    encode_auth_request(req, test_keys().public_part);
    ADD_FAILURE();
  } catch (const PlaintextTooLong& e) {
    EXPECT_EQ(e.limit(), 446u);
    EXPECT_GT(e.actual(), 446u);
  }
}

TEST(AuthRequestWire, GarbageDiscarded) {
  Gen g(10);
  for (int i = 0; i < 5; ++i) {
    auto c = code_of([&] { decode_auth_request(random_bytes(g, 512), test_keys().private_part); });
    EXPECT_EQ(c, Errc::decrypt_failed);
  }
  // Valid RSA block around a non-zlib plaintext.
  auto wire = asym_encrypt(test_keys().public_part, as_bytes("not compressed"));
  EXPECT_EQ(code_of([&] { decode_auth_request(wire, test_keys().private_part); }), Errc::checksum_mismatch);
  // Valid zlib around non-JSON.
  wire = asym_encrypt(test_keys().public_part, compress(as_bytes("{\"seq\":1}")));
  EXPECT_EQ(code_of([&] { decode_auth_request(wire, test_keys().private_part); }), Errc::malformed_payload);
}

TEST(AuthResponseWire, RoundTripAndPrefix) {
  Gen g(11);
  for (int i = 0; i < 200; ++i) {
    auto key = random_key(g);
    auto resp = random_auth_response(g);
    auto wire = encode_auth_response(resp, key);
    EXPECT_EQ(get_u32_be(wire), resp.seq);
    EXPECT_EQ(peek_prefix(wire), resp.seq);
    EXPECT_EQ(decode_auth_response(wire, key), resp);
  }
  auto wire = encode_auth_response(AuthResponse{7, 1400000000, 3}, random_key(g));
  EXPECT_EQ(Bytes(wire.begin(), wire.begin() + 4), (Bytes{0, 0, 0, 7}));
}

TEST(AuthResponseWire, WrongKeyFails) {
  Gen g(12);
  for (int i = 0; i < 200; ++i) {
    auto wire = encode_auth_response(random_auth_response(g), random_key(g));
    auto c = code_of([&] { decode_auth_response(wire, random_key(g)); });
    EXPECT_TRUE(c == Errc::decrypt_failed || c == Errc::checksum_mismatch) << to_string(c);
  }
}

TEST(AuthResponseWire, TamperedPrefixRejected) {
  auto key = generate_session_key();
  auto wire = encode_auth_response(AuthResponse{7, 1400000000, 3}, key);
  wire[3] = 8;
  EXPECT_EQ(code_of([&] { decode_auth_response(wire, key); }), Errc::malformed_payload);
}

TEST(DataPacketWire, RoundTrip) {
  Gen g(13);
  for (int i = 0; i < 300; ++i) {
    auto key = random_key(g);
    DataPacket pkt{static_cast<std::uint32_t>(1 + g() % 1000000), static_cast<std::uint32_t>(g()), random_batch(g, 60)};
    auto wire = encode_data_packet(pkt, key);
    EXPECT_EQ(get_u32_be(wire), pkt.session_id);
    EXPECT_EQ(decode_data_packet(wire, key), pkt);
    KeyLookup lookup = [&](std::uint32_t id) -> std::optional<SessionKey> {
      return id == pkt.session_id ? std::optional(key) : std::nullopt;
    };
    EXPECT_EQ(decode_data_packet(wire, lookup), pkt);
  }
}

TEST(DataPacketWire, UnknownSession) {
  auto key = generate_session_key();
  Gen g(14);
  auto wire = encode_data_packet(DataPacket{5, 1, random_batch(g)}, key);
  KeyLookup none = [](std::uint32_t) { return std::optional<SessionKey>{}; };
  EXPECT_EQ(code_of([&] { decode_data_packet(wire, none); }), Errc::unknown_session);
  EXPECT_EQ(code_of([&] { decode_data_packet(Bytes{0, 0, 0}, none); }), Errc::malformed_payload);
}

TEST(DataPacketWire, EmptyBatchRejected) {
  auto key = generate_session_key();
  EXPECT_EQ(code_of([&] { encode_data_packet(DataPacket{1, 1, {}}, key); }), Errc::invalid_argument);
  auto sealed = seal_payload(1, R"({"seq":1,"streams":{}})", key);
  EXPECT_EQ(code_of([&] { decode_data_packet(sealed, key); }), Errc::malformed_payload);
}

TEST(DataPacketWire, OversizeDatagramRejected) {
  auto key = generate_session_key();
  Gen g(15);
  auto wire = encode_data_packet(DataPacket{1, 1, random_batch(g, 30)}, key);
  CodecLimits tight{wire.size() - 1, kDefaultMaxDecompressed};
  EXPECT_EQ(code_of([&] { decode_data_packet(wire, key, tight); }), Errc::malformed_payload);
}

TEST(FeedbackWire, RoundTrip) {
  Gen g(16);
  for (int i = 0; i < 200; ++i) {
    auto key = random_key(g);
    auto fb = random_feedback(g);
    fb.session_id = static_cast<std::uint32_t>(1 + g() % 1000);
    auto wire = encode_feedback(fb, key);
    EXPECT_EQ(get_u32_be(wire), fb.session_id);
    EXPECT_EQ(decode_feedback(wire, key), fb);
  }
}

TEST(Framing, BigEndianLengthHeader) {
  Bytes blob(512, 0xab);
  auto f = frame(blob);
  ASSERT_EQ(f.size(), 516u);
  EXPECT_EQ(Bytes(f.begin(), f.begin() + 4), (Bytes{0x00, 0x00, 0x02, 0x00}));
}

TEST(Framing, DeframeConcatenation) {
  Gen g(17);
  for (int i = 0; i < 100; ++i) {
    std::vector<Bytes> blobs;
    Bytes stream;
    for (int j = 0, n = 1 + static_cast<int>(g() % 6); j < n; ++j) {
      blobs.push_back(random_bytes(g, g() % 3000));
      auto f = frame(blobs.back());
      stream.insert(stream.end(), f.begin(), f.end());
    }
    EXPECT_EQ(deframe(stream), blobs);

    // Arbitrary chunking gives the same blobs.
    FrameDecoder dec;
    std::vector<Bytes> got;
    for (std::size_t off = 0; off < stream.size();) {
      const std::size_t n = std::min<std::size_t>(stream.size() - off, 1 + g() % 700);
      dec.feed(ByteView(stream).subspan(off, n));
      off += n;
      while (auto b = dec.next()) got.push_back(*b);
    }
    dec.finish();
    EXPECT_EQ(got, blobs);
  }
}

TEST(Framing, OversizeHeaderRejectedBeforeBody) {
  FrameDecoder dec;
  Bytes header{0x80, 0x00, 0x00, 0x00};  // 2^31
  dec.feed(header);
  EXPECT_EQ(code_of([&] { dec.next(); }), Errc::frame_too_large);
  EXPECT_EQ(code_of([&] { deframe(header); }), Errc::frame_too_large);
  auto over = frame(Bytes(101));
  EXPECT_EQ(code_of([&] { deframe(over, 100); }), Errc::frame_too_large);
  EXPECT_EQ(deframe(frame(Bytes(100)), 100).size(), 1u);
}

TEST(Framing, TruncatedStream) {
  auto f = frame(Bytes(10, 1));
  for (std::size_t n = 1; n < f.size(); ++n) {
    EXPECT_EQ(code_of([&] { deframe(ByteView(f).first(n)); }), Errc::truncated_stream) << n;
  }
  EXPECT_TRUE(deframe(Bytes{}).empty());
}

TEST(Fuzz, RandomInputsFailCleanly) {
  Gen g(18);
  const auto key = random_key(g);
  KeyLookup lookup = [&](std::uint32_t) { return std::optional(key); };
  std::size_t inputs = 0;
  auto check = [&](auto&& f) {
    ++inputs;
    try {
      f();
    } catch (const Error& e) {
      EXPECT_TRUE(declared_decode_error(e.code())) << e.what();
    }
  };
  for (int i = 0; i < 100'000; ++i) {
    // Lengths around the ones real packets have.
    const std::size_t len = (i % 10 == 0) ? 32 + 16 * (g() % 64) + 4 : g() % 1500;
    const Bytes b = random_bytes(g, len);
    switch (i % 8) {
      case 0: check([&] { decode_data_packet(b, lookup); }); break;
      case 1: check([&] { decode_feedback(b, key); }); break;
      case 2: check([&] { decode_auth_response(b, key); }); break;
      case 3: check([&] { decompress(b); }); break;
      case 4: check([&] { deframe(b); }); break;
      case 5: check([&] { deserialize_payload<DataPacket>(std::string(b.begin(), b.end())); }); break;
      case 6: check([&] { deserialize_payload<AuthRequest>(std::string(b.begin(), b.end())); }); break;
      case 7:
        check([&] {
          FrameDecoder d(1500);
          d.feed(b);
          while (d.next()) {
          }
        });
        break;
    }
  }
  // Auth requests: the RSA path for full-size blocks, the length check otherwise.
  for (int i = 0; i < 300; ++i) {
    const Bytes b = random_bytes(g, i % 3 == 0 ? 512 : g() % 1024);
    check([&] { decode_auth_request(b, test_keys().private_part); });
  }
  EXPECT_GE(inputs, 100'000u);
}

TEST(Fuzz, SealedRandomJsonFailsCleanly) {
  // Valid encryption and compression around hostile JSON exercises the
  // parser behind the crypto layer.
  Gen g(19);
  const auto key = random_key(g);
  static const char* const atoms[] = {"{", "}", "[", "]", ",", ":", "\"seq\"", "\"streams\"", "\"gps\"",
                                      "\"ts\"", "1", "-1", "1e400", "null", "true", "\"x\"", "0.5"};
  for (int i = 0; i < 5000; ++i) {
    std::string json;
    for (int j = 0, n = static_cast<int>(g() % 40); j < n; ++j) json += atoms[g() % std::size(atoms)];
    auto wire = seal_payload(1, json, key);
    try {
      decode_data_packet(wire, key);
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::malformed_payload) << json;
    }
  }
}
