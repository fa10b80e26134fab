#include <benchmark/benchmark.h>

#include <random>

#include "banditmt/bandit_rl.hpp"
#include "banditmt/bpe.hpp"
#include "banditmt/data_select.hpp"
#include "banditmt/metrics.hpp"
#include "banditmt/supervised.hpp"

using namespace banditmt;

namespace {

std::vector<TokenId> ids(std::size_t n, std::size_t vocab, std::mt19937_64& rng) {
  std::vector<TokenId> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(TokenId(Vocabulary::kReserved + rng() % (vocab - Vocabulary::kReserved)));
  out.push_back(Vocabulary::kEos);
  return out;
}

std::vector<Sentence> words(std::size_t lines, std::size_t vocab, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Sentence> out(lines);
  for (auto& s : out)
    for (std::size_t i = 0, n = 3 + rng() % 12; i < n; ++i)
      s.push_back("w" + std::to_string(std::min(rng() % vocab, rng() % vocab)));
  return out;
}

ModelDims dims(std::size_t h) { return {200, 200, h, h, 1}; }

}  // namespace

static void BM_SequenceLogProbBackward(benchmark::State& state) {
  const auto h = std::size_t(state.range(0));
  NmtParams p = NmtParams::initialized(dims(h), 1);
  std::mt19937_64 rng(2);
  const auto x = ids(15, 200, rng), y = ids(15, 200, rng);
  for (auto _ : state) {
    Tape tape;
    Var lp = sequence_log_prob(tape, p, x, y);
    benchmark::DoNotOptimize(backward(tape, lp, p.params()));
  }
}
BENCHMARK(BM_SequenceLogProbBackward)->Arg(16)->Arg(32)->Arg(64);

static void BM_Decode(benchmark::State& state) {
  NmtParams p = NmtParams::initialized(dims(32), 1);
  std::mt19937_64 rng(3);
  const auto x = ids(15, 200, rng);
  DecodeConfig dc;
  dc.mode = state.range(0) == 1 ? DecodeMode::kGreedy : DecodeMode::kBeam;
  dc.beam_width = std::size_t(state.range(0));
  dc.max_len = 20;
  for (auto _ : state) benchmark::DoNotOptimize(decode(p, x, dc));
}
BENCHMARK(BM_Decode)->Arg(1)->Arg(5);

static void BM_A2cGradient(benchmark::State& state) {
  NmtParams p = NmtParams::initialized(dims(32), 1);
  CriticParams c = CriticParams::initialized(dims(32), 2);
  std::mt19937_64 rng(4);
  const auto x = ids(15, 200, rng), y = ids(15, 200, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(a2c_gradient(p, c, x, y, 0.4, 2.0 / 3.0));
    benchmark::DoNotOptimize(critic_gradient(c, RewardTriple{0, x, y, 0.4}));
  }
}
BENCHMARK(BM_A2cGradient);

static void BM_TrainLm(benchmark::State& state) {
  const auto corpus = words(std::size_t(state.range(0)), 500, 5);
  for (auto _ : state) benchmark::DoNotOptimize(train_lm(corpus));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainLm)->Arg(1000)->Arg(10000);

static void BM_MooreLewisSelect(benchmark::State& state) {
  const auto in = words(2000, 300, 6), pool = words(10000, 500, 7);
  const NgramModel lin = train_lm(in), lout = train_lm(pool);
  for (auto _ : state) benchmark::DoNotOptimize(select(pool, lin, lout, 0.3));
}
BENCHMARK(BM_MooreLewisSelect);

static void BM_LearnBpe(benchmark::State& state) {
  std::mt19937_64 rng(8);
  std::vector<Sentence> corpus(2000);
  for (auto& s : corpus)
    for (std::size_t w = 0, n = 1 + rng() % 10; w < n; ++w) {
      std::string word;
      for (std::size_t c = 0, m = 1 + rng() % 8; c < m; ++c) word.push_back(char('a' + rng() % 12));
      s.push_back(word);
    }
  for (auto _ : state) benchmark::DoNotOptimize(learn_bpe(corpus, std::size_t(state.range(0))));
}
BENCHMARK(BM_LearnBpe)->Arg(100)->Arg(1000);

static void BM_SentenceReward(benchmark::State& state) {
  const auto c = words(2, 30, 9);
  for (auto _ : state) benchmark::DoNotOptimize(sentence_reward(c[0], c[1]));
}
BENCHMARK(BM_SentenceReward);
BENCHMARK_MAIN();
