#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "banditmt/model.hpp"
#include "banditmt/optim.hpp"
#include "banditmt/tape.hpp"
#include "banditmt/vocab.hpp"

namespace banditmt {

/// Source and target ids, both EOS-terminated.
struct SentencePair {
  std::vector<TokenId> source;
  std::vector<TokenId> target;
};

struct ParallelCorpus {
  std::vector<SentencePair> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
  /// Maps words through the vocabularies (UNK for unknown) and appends EOS.
  static ParallelCorpus from_text(std::span<const Sentence> sources, std::span<const Sentence> targets,
                                  const Vocabulary& source_vocab, const Vocabulary& target_vocab);
};

enum class LossNormalization { kPerToken, kPerSentence };

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t epochs = 13;
  std::size_t embedding = 500;
  std::size_t hidden = 500;
  std::size_t layers = 2;
  Real dropout = 0.3;
  SgdConfig sgd;
  std::size_t bpe_merges = 20000;
  Real heldout_fraction = 0.05;
  LossNormalization normalization = LossNormalization::kPerToken;

  void validate() const;
  ModelDims dims_for(std::size_t source_vocab, std::size_t target_vocab) const;
};

struct BatchLoss {
  Tape tape;
  Var loss;
  Real value = 0.0;
  std::size_t tokens = 0;
  Real total_nll = 0.0;  // un-normalised sum of -log P over the batch
};

/// Mean negative log-likelihood of the batch (per token by default) with
/// dropout masks drawn from `seed`.
BatchLoss batch_nll(const NmtParams& params, std::span<const SentencePair> batch, Real dropout_rate,
                    std::uint64_t seed, LossNormalization normalization = LossNormalization::kPerToken);

/// exp(mean per-token NLL) with dropout off.
Real perplexity(const NmtParams& params, std::span<const SentencePair> corpus);

/// Teacher-forced next-token accuracy (argmax vs reference) over all target positions.
Real token_accuracy(const NmtParams& params, std::span<const SentencePair> corpus);

struct EpochMetrics {
  int epoch = 0;
  Real train_ppl = 0.0;
  Real heldout_ppl = 0.0;
  Real learning_rate = 0.0;
};

struct TrainResult {
  NmtParams params;
  std::vector<EpochMetrics> metrics;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Seeded mini-batch SGD on length-bucketed batches. When `heldout` is empty a
/// fraction of `corpus` is split off; if that fraction rounds to zero pairs the
/// held-out column reports perplexity on the whole corpus.
TrainResult train_supervised(const ParallelCorpus& corpus, const ModelDims& dims, const TrainConfig& config,
                             std::uint64_t seed, const ParallelCorpus& heldout = {},
                             const EpochCallback& on_epoch = {});

void write_metrics_csv(const std::filesystem::path& path, std::span<const EpochMetrics> metrics);

}  // namespace banditmt
