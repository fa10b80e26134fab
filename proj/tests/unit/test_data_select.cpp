#include <doctest.h>

#include <cmath>
#include <random>

#include "banditmt/data_select.hpp"
#include "oracles.hpp"

using namespace banditmt;
namespace bt = banditmt::testing;

namespace {

std::vector<Sentence> random_corpus(std::size_t lines, std::size_t vocab, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Sentence> out;
  for (std::size_t i = 0; i < lines; ++i) {
    Sentence s;
    for (std::size_t w = 0, n = 1 + rng() % 7; w < n; ++w) {
      // Skewed draws so that higher-order n-grams repeat.
      const std::size_t k = std::min(rng() % vocab, rng() % vocab);
      s.push_back("w" + std::to_string(k));
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("probabilities sum to one for every history") {
  for (bool unk : {false, true}) {
    CAPTURE(unk);
    auto corpus = random_corpus(300, 12, 1);
    LmOptions opt;
    opt.unk_singletons = unk;
    NgramModel lm = train_lm(corpus, opt);
    auto vocab = lm.vocabulary();
    CHECK(vocab.size() == lm.vocabulary_size());
    std::vector<std::vector<std::string>> histories{{}, {"<s>"}, {"w0"}, {"<s>", "w1"}, {"w0", "w0", "w1"},
                                                    {"w3", "w2", "w9"}, {"zz", "w1"}, {"<s>", "w5", "w5"}};
    for (std::size_t i = 0; i + 2 < corpus.size() && histories.size() < 60; ++i)
      if (corpus[i].size() >= 3) histories.push_back({corpus[i][0], corpus[i][1], corpus[i][2]});
    for (const auto& h : histories) {
      double sum = 0.0;
      for (const auto& w : vocab) sum += lm.probability(h, w);
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("matches the brute-force Kneser-Ney oracle") {
  for (std::size_t order : {1u, 2u, 3u, 4u}) {
    for (bool unk : {false, true}) {
      CAPTURE(order);
      CAPTURE(unk);
      auto corpus = random_corpus(200, 10, order * 7 + unk);
      LmOptions opt;
      opt.order = order;
      opt.unk_singletons = unk;
      NgramModel lm = train_lm(corpus, opt);
      bt::BruteKneserNey brute(corpus, order, 0.75, unk);
      CHECK(lm.vocabulary_size() == brute.vocabulary_size());
      for (const auto& s : random_corpus(60, 12, 1000 + order)) CHECK(cross_entropy(s, lm) == brute.cross_entropy(s));
      CHECK(lm.probability(std::vector<std::string>{"<s>", "w1", "w2"}, "w3") ==
            brute.prob({"<s>", "w1", "w2"}, "w3"));
    }
  }
}

TEST_CASE("unigram level uses continuation counts") {
  std::vector<Sentence> corpus;
  for (int i = 0; i < 50; ++i) corpus.push_back({"a", "b", "c"});
  LmOptions opt;
  opt.order = 1;
  NgramModel lm = train_lm(corpus, opt);
  // Predictable types a, b, c, </s>, <unk>; each observed type has continuation count 1.
  CHECK(lm.vocabulary_size() == 5);
  for (const char* w : {"a", "b", "c", "</s>"}) CHECK(lm.probability({}, w) > lm.probability({}, "zzz"));
  double sum = 0.0;
  for (const auto& w : lm.vocabulary()) sum += lm.probability({}, w);
  CHECK(sum == doctest::Approx(1.0));

  // Every word appears once after every possible left context: a flat unigram.
  std::vector<Sentence> flat;
  for (const char* x : {"a", "b", "c"})
    for (const char* y : {"a", "b", "c"}) flat.push_back({x, y});
  NgramModel u = train_lm(flat, opt);
  const double pa = u.probability({}, "a");
  CHECK(u.probability({}, "b") == doctest::Approx(pa));
  CHECK(u.probability({}, "c") == doctest::Approx(pa));
}

TEST_CASE("unknown words and history handling") {
  auto corpus = random_corpus(100, 8, 3);
  NgramModel lm = train_lm(corpus);
  CHECK(lm.known("w0"));
  CHECK_FALSE(lm.known("nope"));
  CHECK(lm.probability({}, "nope") == lm.probability({}, "<unk>"));
  CHECK(lm.probability({}, "nope") > 0.0);
  // Longer histories are truncated to order - 1.
  CHECK(lm.probability(std::vector<std::string>{"w9", "w1", "w2", "w3"}, "w4") ==
        lm.probability(std::vector<std::string>{"w1", "w2", "w3"}, "w4"));
  CHECK_THROWS(lm.probability({}, "<s>"));
  CHECK_THROWS(train_lm(std::vector<Sentence>{}));
  LmOptions zero;
  zero.order = 0;
  CHECK_THROWS(train_lm(corpus, zero));
}

TEST_CASE("Moore-Lewis score") {
  auto a = random_corpus(300, 10, 4);
  std::vector<Sentence> b;
  for (const auto& s : random_corpus(300, 10, 5)) {
    Sentence t;
    for (const auto& w : s) t.push_back("v" + w.substr(1));
    b.push_back(t);
  }
  NgramModel la = train_lm(a);
  NgramModel lb = train_lm(b);
  for (const auto& s : random_corpus(20, 10, 6)) {
    CHECK(moore_lewis_score(s, la, lb) == doctest::Approx(-moore_lewis_score(s, lb, la)));
    CHECK(moore_lewis_score(s, la, la) == 0.0);
    CHECK(moore_lewis_score(s, la, lb) < 0.0);
  }
}

TEST_CASE("selection keeps a stable prefix of the ranking") {
  auto in = random_corpus(200, 10, 7);
  auto pool = random_corpus(150, 14, 8);
  NgramModel lin = train_lm(in);
  NgramModel lout = train_lm(pool);
  Selection all = select(pool, lin, lout, 1.0);
  CHECK(all.selected == pool.size());
  REQUIRE(all.ranking.size() == pool.size());
  for (std::size_t i = 1; i < all.ranking.size(); ++i) {
    CHECK(all.ranking[i - 1].score <= all.ranking[i].score);
    if (all.ranking[i - 1].score == all.ranking[i].score) CHECK(all.ranking[i - 1].index < all.ranking[i].index);
  }
  CHECK(select(pool, lin, lout, 0.3).selected == 45);
  CHECK(select(pool, lin, lout, 0.301).selected == 46);
  CHECK_THROWS(select(pool, lin, lout, 0.0));
  for (double f : {0.1, 0.25, 0.5}) {
    Selection s = select(pool, lin, lout, f);
    CHECK(s.ranking == all.ranking);
  }
}

TEST_CASE("select_data caps the in-domain corpus") {
  auto in = random_corpus(400, 10, 9);
  auto pool = random_corpus(100, 14, 10);
  SelectionConfig cfg;
  cfg.in_domain_cap = 50;
  cfg.fraction = 0.2;
  Selection s = select_data(in, pool, cfg);
  CHECK(s.selected == 20);
  LmOptions opt;
  opt.unk_singletons = true;
  NgramModel lin = train_lm(std::span<const Sentence>(in).first(50), opt);
  NgramModel lout = train_lm(pool);
  CHECK(s.ranking == select(pool, lin, lout, 0.2).ranking);
  cfg.fraction = 1.5;
  CHECK_THROWS(select_data(in, pool, cfg));
}
