#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "banditmt/metrics.hpp"

using namespace banditmt;

namespace {

std::vector<Sentence> split_all(const std::vector<std::string>& lines) {
  std::vector<Sentence> out;
  for (const auto& l : lines) out.push_back(tokenize(l));
  return out;
}

}  // namespace

TEST_CASE("corpus BLEU matches sacrebleu on a fixed fixture") {
  // sacrebleu 2.x, tokenize='none', smooth_method='none': 54.903955466142385
  const auto hyp = split_all({"the cat sat on the mat today", "a quick brown fox jumps over the dog",
                              "we will meet again at noon"});
  const auto ref = split_all({"the cat sat on a mat", "the quick brown fox jumps over the lazy dog",
                              "we shall meet again at noon tomorrow"});
  CHECK(std::abs(corpus_bleu(hyp, ref) - 54.903955466142385) <= 0.01);
}

TEST_CASE("corpus BLEU edge cases") {
  const auto ref = split_all({"a b c d e", "f g h i"});
  CHECK(corpus_bleu(ref, ref) == doctest::Approx(100.0));
  CHECK(corpus_bleu(split_all({"x y z w", "q r s t"}), ref) == 0.0);
  CHECK(corpus_bleu(split_all({"", ""}), ref) == 0.0);
  // Brevity penalty: one perfect prefix of half length.
  const auto half = split_all({"a b c d"});
  const auto full = split_all({"a b c d e f g h"});
  CHECK(corpus_bleu(half, full) == doctest::Approx(100.0 * std::exp(1.0 - 2.0)));
  CHECK_THROWS(corpus_bleu(half, ref));
}

TEST_CASE("sentence reward") {
  const Sentence ref{"a", "b", "c", "e"};
  const double expected = std::pow(3.0 / 4.0 * 3.0 / 4.0 * 2.0 / 3.0 * 1.0 / 2.0, 0.25);
  CHECK(sentence_reward(Sentence{"a", "b", "c", "d"}, ref) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(sentence_reward(ref, ref) == doctest::Approx(1.0));
  CHECK(sentence_reward(Sentence{}, ref) == 0.0);
  CHECK_THROWS_AS(sentence_reward(ref, Sentence{}), std::invalid_argument);
  CHECK(sentence_reward(Sentence{"x", "y"}, ref) == 0.0);
  // Short perfect prefix is penalised by exp(1 - r / c).
  const double bp = std::exp(1.0 - 4.0 / 2.0);
  const double p = std::pow(1.0 * 1.0 * 1.0 * 1.0, 0.25);
  CHECK(sentence_reward(Sentence{"a", "b"}, ref) == doctest::Approx(bp * p));

  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 2000; ++trial) {
    Sentence h, r;
    for (std::size_t i = 0, n = rng() % 8; i < n; ++i) h.push_back(std::string(1, char('a' + rng() % 4)));
    for (std::size_t i = 0, n = 1 + rng() % 8; i < n; ++i) r.push_back(std::string(1, char('a' + rng() % 4)));
    const double v = sentence_reward(h, r);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("windowed means") {
  const std::vector<Real> s{1, 2, 3, 4, 5, 6, 7};
  auto w = windowed_means(s, 3);
  REQUIRE(w.size() == 3);
  CHECK(w[0].mean == doctest::Approx(2.0));
  CHECK(w[1].mean == doctest::Approx(5.0));
  CHECK(w[2].mean == doctest::Approx(7.0));
  CHECK(w[2].count == 1);
  CHECK(w[2].partial);
  CHECK_FALSE(w[1].partial);
  CHECK(w[1].index == 1);
  CHECK(windowed_means(std::vector<Real>{}, 3).empty());
  CHECK_THROWS(windowed_means(s, 0));
}
