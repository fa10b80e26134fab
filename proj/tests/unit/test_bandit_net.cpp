#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "banditmt/bandit_net.hpp"
#include "synthetic.hpp"

using namespace banditmt;
namespace bt = banditmt::testing;

namespace {

const std::vector<Sentence> kSources{{"s1", "s2"}, {"s3"}, {"s2", "s2", "s1"}};
const std::vector<Sentence> kRefs{{"t1", "t2"}, {"t3"}, {"t2", "t2", "t1"}};

Frame trans(std::uint64_t id, const std::string& text) {
  return Frame{FrameKind::kTrans, id, text, std::nullopt, std::nullopt};
}

struct RawClient {
  LineConnection conn;
  explicit RawClient(std::uint16_t port) : conn(LineConnection::connect("127.0.0.1", port)) {}
  Frame read() {
    auto line = conn.read_line();
    REQUIRE(line);
    return decode_frame(*line);
  }
  void send(const Frame& f) { REQUIRE(conn.send_line(encode_frame(f))); }
  void send_raw(const std::string& s) { REQUIRE(conn.send_line(s)); }
};

}  // namespace

TEST_CASE("frame codec") {
  const Frame f{FrameKind::kReward, 12, std::nullopt, 0.25, std::nullopt};
  CHECK(encode_frame(f) == R"({"kind":"REWARD","id":12,"value":0.25})");
  CHECK(decode_frame(encode_frame(f)) == f);
  const Frame t = trans(3, "a \"b\" c");
  CHECK(decode_frame(encode_frame(t)) == t);
  const Frame e{FrameKind::kErr, std::nullopt, std::nullopt, std::nullopt, "unknown id"};
  CHECK(encode_frame(e) == R"({"kind":"ERR","message":"unknown id"})");
  CHECK(decode_frame(R"({"kind":"BYE"})").kind == FrameKind::kBye);
  for (const char* bad : {"", "not json", "[1,2]", R"({"kind":"NOPE"})", R"({"kind":"TRANS","id":1})",
                          R"({"kind":"TRANS","text":"x"})", R"({"kind":"TRANS","id":-1,"text":"x"})",
                          R"({"kind":"TRANS","id":"1","text":"x"})", R"({"kind":"REWARD","id":1})",
                          R"({"kind":"TRANS","id":1,"text":"x","extra":1})"}) {
    CAPTURE(bad);
    CHECK_THROWS_WITH_AS(decode_frame(bad), "malformed frame", ProtocolError);
  }
}

TEST_CASE("address parsing") {
  CHECK(parse_address("127.0.0.1:7070") == std::pair<std::string, std::uint16_t>{"127.0.0.1", 7070});
  CHECK_THROWS_AS(parse_address("nohost"), std::invalid_argument);
  CHECK_THROWS_AS(parse_address("h:99999"), std::invalid_argument);
  CHECK_THROWS_AS(parse_address("h:x"), std::invalid_argument);
}

TEST_CASE("loopback session with three sentences") {
  const auto dir = std::filesystem::temp_directory_path() / "banditmt_net_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  ServerConfig cfg;
  cfg.max_sessions = 1;
  cfg.log_dir = dir;
  BanditServer server(kSources, kRefs, cfg);
  server.start();
  REQUIRE(server.port() != 0);
  {
    RawClient c(server.port());
    Frame hello = c.read();
    CHECK(hello.kind == FrameKind::kHello);
    CHECK(hello.text == std::string(kProtocolVersion));
    for (std::uint64_t i = 0; i < 3; ++i) {
      Frame s = c.read();
      CHECK(s.kind == FrameKind::kSrc);
      CHECK(s.id == i);
      CHECK(s.text == join(kSources[i]));
    }
    CHECK(c.read().kind == FrameKind::kBye);
    // Out-of-order translations are accepted.
    c.send(trans(2, "t2 t2 t1"));
    Frame r2 = c.read();
    CHECK(r2.kind == FrameKind::kReward);
    CHECK(r2.id == 2);
    CHECK(*r2.value == doctest::Approx(1.0));
    c.send(trans(0, "t9"));
    Frame r0 = c.read();
    CHECK(r0.id == 0);
    CHECK(*r0.value == 0.0);
    c.send(trans(2, "again"));
    Frame dup = c.read();
    CHECK(dup.kind == FrameKind::kErr);
    CHECK(dup.message == std::string("duplicate id"));
    c.send(trans(17, "x"));
    CHECK(c.read().message == std::string("unknown id"));
    c.send_raw("{oops");
    CHECK(c.read().message == std::string("malformed frame"));
    c.send(trans(1, "t3"));
    CHECK(c.read().id == 1);
    c.send(Frame{FrameKind::kBye, std::nullopt, std::nullopt, std::nullopt, std::nullopt});
  }
  server.wait();
  auto sums = server.summaries();
  REQUIRE(sums.size() == 1);
  CHECK(sums[0].sources_sent == 3);
  CHECK(sums[0].rewards_sent == 3);
  CHECK(sums[0].errors == 3);
  CHECK(sums[0].client_bye);
  REQUIRE(sums[0].triples.size() == 3);
  CHECK(sums[0].triples[0].id == 2);
  CHECK(std::filesystem::exists(dir / "session_0_frames.csv"));
  auto logged = read_triples_csv(dir / "session_0_triples.csv");
  REQUIRE(logged.size() == 3);
  CHECK(logged[1].hypothesis == "t9");
  std::filesystem::remove_all(dir);
}

TEST_CASE("window limits outstanding sources") {
  std::vector<Sentence> src, ref;
  for (int i = 0; i < 10; ++i) {
    src.push_back({"s" + std::to_string(i)});
    ref.push_back({"t" + std::to_string(i)});
  }
  ServerConfig cfg;
  cfg.window = 4;
  cfg.max_sessions = 1;
  BanditServer server(src, ref, cfg);
  server.start();
  {
    RawClient c(server.port());
    c.read();
    for (std::uint64_t i = 0; i < 4; ++i) CHECK(c.read().id == i);
    c.send(trans(1, "t1"));
    CHECK(c.read().kind == FrameKind::kReward);
    Frame next = c.read();
    CHECK(next.kind == FrameKind::kSrc);
    CHECK(next.id == 4);
    c.send(Frame{FrameKind::kBye, std::nullopt, std::nullopt, std::nullopt, std::nullopt});
  }
  server.wait();
  CHECK(server.summaries()[0].sources_sent == 5);
}

TEST_CASE("sessions are independent") {
  ServerConfig cfg;
  cfg.max_sessions = 2;
  BanditServer server(kSources, kRefs, cfg);
  server.start();
  ClientLog a, b;
  std::thread ta([&] {
    NetworkFeedback ch("127.0.0.1", server.port());
    a = run_log_sources_client(ch);
  });
  std::thread tb([&] {
    NetworkFeedback ch("127.0.0.1", server.port());
    b = run_log_sources_client(ch);
  });
  ta.join();
  tb.join();
  server.wait();
  const std::vector<std::string> expected{"s1 s2", "s3", "s2 s2 s1"};
  CHECK(a.sources == expected);
  CHECK(b.sources == expected);
  CHECK(a.triples.size() == 3);
  for (const auto& t : a.triples) CHECK(t.reward == 0.0);
  auto sums = server.summaries();
  REQUIRE(sums.size() == 2);
  for (const auto& s : sums) {
    CHECK(s.rewards_sent == 3);
    CHECK(s.errors == 0);
  }
}

TEST_CASE("static client rewards match the reward function") {
  auto text = bt::lexicon_pairs(12, 5, 2, 4, 3);
  auto enc = bt::encode_pairs(text);
  TextCodec codec(enc.source_vocab, enc.target_vocab);
  ModelDims d{enc.source_vocab.size(), enc.target_vocab.size(), 4, 4, 1};
  NmtParams p = NmtParams::initialized(d, 3);
  ServerConfig cfg;
  cfg.max_sessions = 1;
  cfg.window = 5;
  BanditServer server(text.src, text.tgt, cfg);
  server.start();
  NetworkFeedback ch("127.0.0.1", server.port());
  DecodeConfig dc;
  dc.max_len = 6;
  ClientLog log = run_static_client(ch, p, codec, dc);
  server.wait();
  REQUIRE(log.triples.size() == 12);
  for (std::size_t i = 0; i < 12; ++i) {
    CHECK(log.triples[i].id == i);
    const Sentence hyp = codec.decode_target(decode(p, codec.encode_source(text.src[i]), dc).tokens);
    CHECK(log.triples[i].hypothesis == join(hyp));
    CHECK(log.triples[i].reward == sentence_reward(hyp, text.tgt[i]));
  }
}

TEST_CASE("network bandit loop equals the in-process loop") {
  auto text = bt::lexicon_pairs(30, 5, 2, 4, 8);
  auto enc = bt::encode_pairs(text);
  TextCodec codec(enc.source_vocab, enc.target_vocab);
  ModelDims d{enc.source_vocab.size(), enc.target_vocab.size(), 4, 4, 1};
  A2cConfig cfg;
  cfg.batch_size = 8;
  cfg.actor_lr = 1e-2;
  cfg.critic_lr = 1e-2;

  auto run = [&](FeedbackChannel& ch, bool reverse) {
    NmtParams p = NmtParams::initialized(d, 1);
    CriticParams c = CriticParams::initialized(d, 2);
    A2cLearner learner(p, c, cfg, 5);
    BanditLoopOptions opt;
    opt.reverse_submission = reverse;
    BanditLog log = run_bandit_loop(learner, ch, codec, opt);
    return std::make_pair(p.params(), log.rewards);
  };
  SimulatedFeedback sim(text.src, text.tgt);
  const auto local = run(sim, false);
  for (bool reverse : {false, true}) {
    ServerConfig sc;
    sc.max_sessions = 1;
    BanditServer server(text.src, text.tgt, sc);
    server.start();
    NetworkFeedback ch("127.0.0.1", server.port());
    const auto remote = run(ch, reverse);
    ch.close();
    server.wait();
    CHECK(remote.first == local.first);
    CHECK(remote.second == local.second);
  }
}
