#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <fstream>
#include <random>
#include <set>

#include "banditmt/checkpoint.hpp"
#include "banditmt/seq2seq.hpp"
#include "finite_diff.hpp"
#include "reference_model.hpp"

using namespace banditmt;
namespace bt = banditmt::testing;

namespace {

ModelDims small_dims(std::size_t layers = 2) {
  ModelDims d;
  d.src_vocab = 9;
  d.tgt_vocab = 11;
  d.embed = 3;
  d.hidden = 4;
  d.layers = layers;
  return d;
}

std::vector<TokenId> ids(std::initializer_list<TokenId> l) { return l; }

}  // namespace

TEST_CASE("vocabulary") {
  Vocabulary v = Vocabulary::build(std::vector<Sentence>{{"b", "a"}, {"a", "c"}});
  CHECK(v.size() == Vocabulary::kReserved + 3);
  CHECK(v.id("b") == 4);
  CHECK(v.id("a") == 5);
  CHECK(v.id("zzz") == Vocabulary::kUnk);
  auto enc = v.encode(Sentence{"a", "zzz"});
  CHECK(enc == ids({5, Vocabulary::kUnk, Vocabulary::kEos}));
  CHECK(v.decode(ids({4, Vocabulary::kEos, 5})) == Sentence{"b"});
  CHECK(tokenize("  x \t y\n") == Sentence{"x", "y"});
  CHECK(join(Sentence{"x", "y"}) == "x y");
}

TEST_CASE("model layout") {
  NmtParams p(small_dims());
  CHECK(p.params().find("src_embed"));
  CHECK(p.params().find("encoder.l1.bwd.W"));
  CHECK(p.params().find("decoder.l1.b"));
  CHECK(p.params().find("output.W"));
  CHECK_FALSE(p.params().find("value.w"));
  CHECK(p.params().value(*p.params().find("decoder.l0.W")).shape() == Shape{16, 11});
  CriticParams c(small_dims());
  CHECK(c.params().find("value.w"));
  CHECK(c.params().find("value.b"));
  CHECK_FALSE(c.params().find("output.W"));
  ModelDims odd = small_dims();
  odd.hidden = 5;
  CHECK_THROWS_AS(odd.validate(), std::invalid_argument);
}

TEST_CASE("forward pass matches the plain-loop oracle") {
  for (std::size_t layers : {1u, 2u}) {
    CAPTURE(layers);
    const NmtParams p = NmtParams::initialized(small_dims(layers), 17 + layers);
    const auto src = ids({4, 5, 8, 6, Vocabulary::kEos});
    const auto tgt = ids({7, 4, 10, Vocabulary::kEos});
    for (double tau : {1.0, 2.0 / 3.0}) {
      Tape t;
      auto nodes = step_log_probs(t, p, src, tgt, tau);
      auto ref = bt::ref_step_log_probs(p, src, tgt, tau);
      REQUIRE(nodes.size() == ref.size());
      for (std::size_t i = 0; i < ref.size(); ++i) CHECK(t.value(nodes[i]).item() == doctest::Approx(ref[i]).epsilon(1e-12));
    }
    const CriticParams c = CriticParams::initialized(small_dims(layers), 3);
    Tape t;
    EncoderOutput enc = encode(t, c, src);
    DecoderState st = initial_state(t, c, enc);
    TokenId prev = Vocabulary::kBos;
    auto ref = bt::ref_critic_values(c, src, tgt);
    for (std::size_t i = 0; i < tgt.size(); ++i) {
      StepOutput s = decoder_step(t, c, st, prev, enc);
      CHECK(t.value(value_estimate(t, c, s.output)).item() == doctest::Approx(ref[i]).epsilon(1e-12));
      st = s.state;
      prev = tgt[i];
    }
  }
}

TEST_CASE("sequence log-probability gradient matches finite differences") {
  ModelDims d = small_dims(2);
  d.src_vocab = 6;
  d.tgt_vocab = 6;
  d.embed = 2;
  d.hidden = 2;
  NmtParams p = NmtParams::initialized(d, 5);
  p.init_uniform(5, 0.5);
  const auto src = ids({4, 5, Vocabulary::kEos});
  const auto tgt = ids({5, 4, Vocabulary::kEos});
  Tape t;
  Gradients g = backward(t, sequence_log_prob(t, p, src, tgt, 2.0 / 3.0), p.params());
  Gradients n = bt::numeric_gradient(p.params(), [&] {
    Tape u;
    return u.value(sequence_log_prob(u, p, src, tgt, 2.0 / 3.0)).item();
  });
  CHECK(max_abs_difference(g, n) <= 1e-8);
  CHECK(bt::max_relative_error(g, n, 1e-4) <= 1e-5);
}

TEST_CASE("zero weights give uniform step distributions") {
  NmtParams p(small_dims());
  const auto src = ids({4, Vocabulary::kEos});
  Tape t;
  EncoderOutput enc = encode(t, p, src);
  StepDistribution s = decode_step(t, p, initial_state(t, p, enc), Vocabulary::kBos, enc);
  for (double x : s.probs) CHECK(x == doctest::Approx(1.0 / 11.0));
  CHECK(sequence_log_prob(p, src, ids({4, Vocabulary::kEos})) == doctest::Approx(2.0 * std::log(1.0 / 11.0)));
}

TEST_CASE("max length rule") {
  DecodeConfig cfg;
  CHECK(cfg.max_len_for(3) == 16);
  CHECK(cfg.max_len_for(45) == 100);
  CHECK(cfg.max_len_for(60) == 100);
  cfg.max_len = 4;
  CHECK(cfg.max_len_for(60) == 4);

  NmtParams p(small_dims());
  // Zero weights: argmax picks the lowest id, which is never EOS, so decoding runs to the cap.
  DecodeConfig greedy;
  Hypothesis h = decode(p, ids({4, 5, Vocabulary::kEos}), greedy);
  CHECK(h.tokens.size() == greedy.max_len_for(3));
  CHECK(h.log_probs.size() == h.tokens.size());
}

TEST_CASE("greedy equals beam of width one") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    CAPTURE(seed);
    NmtParams p = NmtParams::initialized(small_dims(), seed);
    p.init_uniform(seed, 1.0);
    std::mt19937_64 rng(seed);
    std::vector<TokenId> src;
    for (int i = 0; i < 1 + static_cast<int>(seed % 6); ++i) src.push_back(4 + rng() % 5);
    src.push_back(Vocabulary::kEos);
    DecodeConfig g;
    DecodeConfig b;
    b.mode = DecodeMode::kBeam;
    b.beam_width = 1;
    const Hypothesis hg = decode(p, src, g);
    const Hypothesis hb = decode(p, src, b);
    CHECK(hg.tokens == hb.tokens);
    CHECK(hg.score() == doctest::Approx(hb.score()).epsilon(1e-12));
  }
}

TEST_CASE("beam score is the sum of token log-probabilities") {
  NmtParams p = NmtParams::initialized(small_dims(), 4);
  p.init_uniform(4, 1.0);
  const auto src = ids({4, 6, 7, Vocabulary::kEos});
  DecodeConfig b;
  b.mode = DecodeMode::kBeam;
  b.beam_width = 4;
  const Hypothesis h = decode(p, src, b);
  CHECK(h.score() == doctest::Approx(sequence_log_prob(p, src, h.tokens)).epsilon(1e-10));
}

TEST_CASE("decoding is deterministic") {
  NmtParams p = NmtParams::initialized(small_dims(), 9);
  p.init_uniform(9, 1.0);
  const auto src = ids({4, 6, 7, Vocabulary::kEos});
  for (DecodeMode mode : {DecodeMode::kGreedy, DecodeMode::kSample, DecodeMode::kBeam}) {
    DecodeConfig cfg;
    cfg.mode = mode;
    cfg.tau = 2.0 / 3.0;
    cfg.seed = 77;
    CHECK(decode(p, src, cfg).tokens == decode(p, src, cfg).tokens);
  }
  DecodeConfig a;
  a.mode = DecodeMode::kSample;
  std::set<std::vector<TokenId>> seen;
  for (std::uint64_t s = 0; s < 20; ++s) {
    a.seed = s;
    seen.insert(decode(p, src, a).tokens);
  }
  CHECK(seen.size() > 1);
}

TEST_CASE("sample_token follows the distribution") {
  std::mt19937_64 rng(1);
  const std::vector<Real> probs{0.1, 0.0, 0.6, 0.3};
  std::map<TokenId, int> counts;
  const int n = 40000;
  for (int i = 0; i < n; ++i) ++counts[sample_token(probs, rng)];
  CHECK(counts[1] == 0);
  for (TokenId k : {0u, 2u, 3u}) {
    const double se = std::sqrt(probs[k] * (1 - probs[k]) / n);
    CHECK(std::abs(counts[k] / double(n) - probs[k]) <= 4 * se);
  }
}

TEST_CASE("log_softmax") {
  auto l = log_softmax(std::vector<Real>{1000.0, 0.0}, 1.0);
  CHECK(l[0] == doctest::Approx(0.0));
  CHECK(l[1] == doctest::Approx(-1000.0));
  auto m = log_softmax(std::vector<Real>{2.0, 0.0}, 2.0 / 3.0);
  CHECK(std::exp(m[0]) == doctest::Approx(std::exp(3.0) / (std::exp(3.0) + 1.0)));
}

TEST_CASE("checkpoint round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "banditmt_ckpt_test";
  std::filesystem::create_directories(dir);
  Vocabulary sv = Vocabulary::build(std::vector<Sentence>{{"a", "b", "c", "d", "e"}});
  Vocabulary tv = Vocabulary::build(std::vector<Sentence>{{"x", "y", "z", "u", "v", "w", "q"}});
  const NmtParams p = NmtParams::initialized(small_dims(), 12);
  save_checkpoint(dir / "p.ckpt", p, sv, tv);
  Checkpoint back = load_checkpoint(dir / "p.ckpt");
  CHECK(back.policy().params() == p.params());
  CHECK(back.policy().dims() == p.dims());
  CHECK(back.source_vocab == sv);
  CHECK(back.target_vocab == tv);
  CHECK_THROWS(back.critic());

  const CriticParams c = CriticParams::initialized(small_dims(), 13);
  save_checkpoint(dir / "c.ckpt", c, sv, tv);
  CHECK(load_checkpoint(dir / "c.ckpt").critic().params() == c.params());

  {
    std::ofstream bad(dir / "bad.ckpt");
    bad << "not-a-checkpoint\n";
  }
  CHECK_THROWS(load_checkpoint(dir / "bad.ckpt"));
  CHECK_THROWS(load_checkpoint(dir / "missing.ckpt"));
  std::filesystem::remove_all(dir);
}
