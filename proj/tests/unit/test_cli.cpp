#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "banditmt/bandit_rl.hpp"
#include "banditmt/checkpoint.hpp"
#include "banditmt/config.hpp"
#include "cli.hpp"
#include "synthetic.hpp"

using namespace banditmt;
namespace bt = banditmt::testing;
namespace fs = std::filesystem;

namespace {

struct Run {
  int status;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int status = cli::dispatch(args, out, err);
  return {status, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& f) const { return (path / f).string(); }
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_lines(const std::string& path, const std::vector<Sentence>& lines) {
  std::ofstream out(path);
  for (const auto& l : lines) out << join(l) << '\n';
}

std::uint16_t free_port() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
  socklen_t len = sizeof(addr);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  return ntohs(addr.sin_port);
}

// Signals once the server has printed its listening line.
class ReadyBuf : public std::stringbuf {
 public:
  std::atomic<bool> ready{false};

 protected:
  int sync() override {
    if (str().find("listening on") != std::string::npos) ready = true;
    return std::stringbuf::sync();
  }
};

}  // namespace

TEST_CASE("empty config gives the paper-defaults profile") {
  const PipelineConfig c = parse_config("");
  CHECK(c.profile == Profile::kPaperDefaults);
  CHECK(c.train.batch_size == 64);
  CHECK(c.train.epochs == 13);
  CHECK(c.train.dropout == 0.3);
  CHECK(c.train.sgd.learning_rate == 1.0);
  CHECK(c.train.sgd.decay_factor == 0.5);
  CHECK(c.train.sgd.decay_start_epoch == 9);
  CHECK(c.train.sgd.clip_norm == 5.0);
  CHECK(c.train.bpe_merges == 20000);
  CHECK(c.train.layers == 2);
  CHECK(c.train.embedding == 500);
  CHECK(c.train.hidden == 500);
  CHECK(c.a2c.tau == doctest::Approx(2.0 / 3.0));
  CHECK(c.a2c.actor_lr == 1e-4);
  CHECK(c.a2c.critic_lr == 1e-4);
  CHECK(c.a2c.batch_size == 64);
  CHECK(c.a2c.pretrain_triples == 20000);
  CHECK(c.select.in_domain_cap == 200000);
  CHECK(c.decode.beam_width == 5);
  CHECK(parse_config("{}").train.batch_size == 64);
}

TEST_CASE("desk-scale profile") {
  const PipelineConfig c = parse_config("", Profile::kDeskScale);
  CHECK(c.train.batch_size == 8);
  CHECK(c.train.epochs == 13);
  CHECK(c.train.hidden == 32);
  CHECK(c.train.layers == 1);
  CHECK(c.a2c.batch_size == 16);
  CHECK(parse_config(R"({"profile":"desk-scale"})").train.hidden == 32);
  CHECK(parse_config(R"({"profile":"desk-scale"})", Profile::kPaperDefaults).train.hidden == 500);
  const PipelineConfig o = parse_config(R"({"profile":"desk-scale","train":{"epochs":3}})");
  CHECK(o.train.epochs == 3);
  CHECK(o.train.hidden == 32);
}

TEST_CASE("invalid configs name the offending key") {
  CHECK_THROWS_WITH_AS(parse_config(R"({"train":{"dropout":1.5}})"), doctest::Contains("train.dropout"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(R"({"train":{"dropot":0.1}})"), doctest::Contains("train.dropot"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(R"({"extra":1})"), doctest::Contains("extra"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(R"({"a2c":{"batch_size":-3}})"), doctest::Contains("a2c.batch_size"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(R"({"decode":{"mode":"fast"}})"), doctest::Contains("decode.mode"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(R"({"select":{"fraction":0}})"), doctest::Contains("select.fraction"),
                       ConfigError);
  CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"profile":"huge"})"), ConfigError);
}

TEST_CASE("serialization round trip") {
  for (const char* doc : {"", R"({"profile":"desk-scale","a2c":{"batch_size":8},"server":{"window":32}})",
                          R"({"train":{"normalization":"sentence"},"decode":{"mode":"beam","beam_width":3}})"}) {
    CAPTURE(doc);
    const PipelineConfig c = parse_config(doc);
    const std::string canon = serialize(c);
    CHECK(serialize(parse_config(canon)) == canon);
    CHECK(canon.find("\n  \"a2c\"") != std::string::npos);
    CHECK(canon.find("\"a2c\"") < canon.find("\"train\""));
  }
  TempDir dir("banditmt_cfg_test");
  write_file(dir / "c.json", R"({"train":{"epochs":4}})");
  CHECK(load_config(dir / "c.json").train.epochs == 4);
  write_file(dir / "empty.json", "");
  CHECK(serialize(load_config(dir / "empty.json")) == serialize(parse_config("{}")));
  CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);
}

TEST_CASE("dispatch usage errors") {
  Run r = run({"frobnicate"});
  CHECK(r.status == 2);
  CHECK(r.err.find("Usage") != std::string::npos);
  r = run({});
  CHECK(r.status == 2);
  r = run({"evaluate", "--hyp", "/nonexistent"});
  CHECK(r.status == 2);
  CHECK(r.err.find("--ref") != std::string::npos);
  r = run({"--help"});
  CHECK(r.status == 0);
  CHECK(r.out.find("bandit-train") != std::string::npos);
  TempDir dir("banditmt_cli_usage");
  write_file(dir / "bad.json", R"({"train":{"dropout":1.5}})");
  write_file(dir / "a.txt", "x\n");
  r = run({"--config", dir / "bad.json", "bpe-learn", "--input", dir / "a.txt", "--out", dir / "m.txt"});
  CHECK(r.status == 2);
  CHECK(r.err.find("train.dropout") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "m.txt"));
  r = run({"train", "--out", dir / "m.ckpt"});
  CHECK(r.status == 2);
  CHECK(r.err.find("--train") != std::string::npos);
}

TEST_CASE("evaluate") {
  TempDir dir("banditmt_cli_eval");
  write_file(dir / "ref.txt", "the cat sat\na dog ran fast\nhello there world\n");
  Run r = run({"evaluate", "--hyp", dir / "ref.txt", "--ref", dir / "ref.txt"});
  CHECK(r.status == 0);
  CHECK(r.out.find("BLEU 100.00") != std::string::npos);
  r = run({"evaluate", "--hyp", dir / "ref.txt", "--ref", dir / "ref.txt", "--window", "2", "--csv", dir / "w.csv"});
  CHECK(r.status == 0);
  CHECK(read_file(dir / "w.csv") == "window_index,mean,count\n0,1,2\n1,1,1\n");
  write_file(dir / "short.txt", "the cat sat\n");
  CHECK(run({"evaluate", "--hyp", dir / "short.txt", "--ref", dir / "ref.txt"}).status == 1);
}

TEST_CASE("bpe subcommands round trip") {
  TempDir dir("banditmt_cli_bpe");
  auto text = bt::lexicon_pairs(200, 12, 2, 6, 5);
  write_lines(dir / "a.txt", text.src);
  write_lines(dir / "b.txt", text.tgt);
  CHECK(run({"bpe-learn", "--input", dir / "a.txt", "--input", dir / "b.txt", "--merges", "30", "--out",
             dir / "bpe.txt"})
            .status == 0);
  CHECK(read_file(dir / "bpe.txt").rfind(std::string(kBpeVersion) + "\n", 0) == 0);
  CHECK(run({"bpe-apply", "--merges", dir / "bpe.txt", "--input", dir / "a.txt", "--out", dir / "a.bpe"}).status == 0);
  CHECK(read_file(dir / "a.bpe").find("@@") != std::string::npos);
  CHECK(run({"bpe-restore", "--input", dir / "a.bpe", "--out", dir / "a.back"}).status == 0);
  CHECK(read_file(dir / "a.back") == read_file(dir / "a.txt"));
}

TEST_CASE("desk-scale pipeline end to end") {
  TempDir dir("banditmt_cli_pipeline");
  auto train = bt::lexicon_pairs(300, 10, 2, 5, 1);
  auto stream = bt::lexicon_pairs(48, 10, 2, 5, 2);
  auto in_domain = bt::lexicon_pairs(100, 10, 2, 5, 3);
  write_lines(dir / "train.src", train.src);
  write_lines(dir / "train.tgt", train.tgt);
  write_lines(dir / "stream.src", stream.src);
  write_lines(dir / "stream.tgt", stream.tgt);
  write_lines(dir / "indomain.src", in_domain.src);
  write_file(dir / "cfg.json", R"({"profile":"desk-scale","train":{"epochs":2,"bpe_merges":40}})");
  const std::vector<std::string> g{"--seed", "7", "--config", dir / "cfg.json"};
  auto with = [&](std::vector<std::string> args) {
    std::vector<std::string> all = g;
    all.insert(all.end(), args.begin(), args.end());
    Run r = run(all);
    INFO(r.err);
    return r;
  };

  CHECK(with({"bpe-learn", "--input", dir / "train.src", "--input", dir / "train.tgt", "--out", dir / "bpe.txt"})
            .status == 0);
  Run sel = with({"select-data", "--in-domain", dir / "indomain.src", "--out-domain-src", dir / "train.src",
                  "--out-domain-tgt", dir / "train.tgt", "--fraction", "0.5", "--out-prefix", dir / "sel"});
  CHECK(sel.status == 0);
  CHECK(sel.out.find("selected 150 of 300") != std::string::npos);
  CHECK(fs::exists(dir / "sel.scores.csv"));

  Run tr = with({"train", "--train", dir / "sel.src" + "," + dir / "sel.tgt", "--bpe", dir / "bpe.txt", "--out",
                 dir / "m.ckpt", "--metrics", dir / "m.csv"});
  CHECK(tr.status == 0);
  CHECK(tr.out.find("epoch 2") != std::string::npos);
  CHECK(with({"train", "--src", dir / "sel.src", "--tgt", dir / "sel.tgt", "--bpe", dir / "bpe.txt", "--out",
              dir / "m2.ckpt"})
            .status == 0);
  CHECK(read_file(dir / "m.ckpt") == read_file(dir / "m2.ckpt"));

  const std::string addr = "127.0.0.1:" + std::to_string(free_port());
  ReadyBuf buf;
  std::ostream server_out(&buf);
  std::ostringstream server_err;
  int server_status = -1;
  std::thread server([&] {
    std::vector<std::string> args = g;
    for (std::string a : {std::string("serve-bandit"), std::string("--src"), dir / "stream.src", std::string("--ref"),
                          dir / "stream.tgt", std::string("--addr"), addr, std::string("--max-sessions"),
                          std::string("2"), std::string("--log"), dir / "logs"})
      args.push_back(a);
    fs::create_directories(dir / "logs");
    server_status = cli::dispatch(args, server_out, server_err);
  });
  for (int i = 0; i < 500 && !buf.ready; ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  if (!buf.ready) {
    server.join();
    FAIL("server did not start: " << server_err.str() << buf.str());
  }

  Run bandit = with({"bandit-train", "--ckpt", dir / "m.ckpt", "--critic", "none", "--server", addr, "--bpe",
                     dir / "bpe.txt", "--out", dir / "a.ckpt", "--log", dir / "bandit.csv"});
  CHECK(bandit.status == 0);
  CHECK(bandit.out.find("48 rewards, 3 updates") != std::string::npos);
  CHECK(read_triples_csv(dir / "bandit.csv").size() == 48);

  Run client = with({"client", "--mode", "static", "--addr", addr, "--ckpt", dir / "a.ckpt", "--bpe", dir / "bpe.txt",
                     "--out", dir / "hyp.txt", "--log", dir / "static.csv"});
  CHECK(client.status == 0);
  server.join();
  CHECK(server_status == 0);
  CHECK(fs::exists(dir / "logs" + "/session_0_triples.csv"));
  CHECK(fs::exists(dir / "logs" + "/session_1_frames.csv"));

  Run ev = with({"evaluate", "--hyp", dir / "hyp.txt", "--ref", dir / "stream.tgt", "--window", "16"});
  CHECK(ev.status == 0);
  CHECK(ev.out.find("BLEU ") == 0);
  CHECK(ev.out.find("window_index,mean,count") != std::string::npos);
}
