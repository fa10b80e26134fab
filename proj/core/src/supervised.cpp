#include "banditmt/supervised.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "banditmt/seq2seq.hpp"

namespace banditmt {

ParallelCorpus ParallelCorpus::from_text(std::span<const Sentence> sources, std::span<const Sentence> targets,
                                         const Vocabulary& source_vocab, const Vocabulary& target_vocab) {
  if (sources.size() != targets.size()) throw std::invalid_argument("parallel corpus: side lengths differ");
  ParallelCorpus c;
  c.pairs.reserve(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (sources[i].empty() || targets[i].empty())
      throw std::invalid_argument("parallel corpus: empty side at line " + std::to_string(i + 1));
    c.pairs.push_back({source_vocab.encode(sources[i]), target_vocab.encode(targets[i])});
  }
  return c;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("train.batch_size must be positive");
  if (epochs == 0) throw std::invalid_argument("train.epochs must be positive");
  if (embedding == 0 || hidden == 0 || layers == 0) throw std::invalid_argument("train: model sizes must be positive");
  if (hidden % 2 != 0) throw std::invalid_argument("train.hidden must be even");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("train.dropout must be in [0,1)");
  if (!(heldout_fraction >= 0.0 && heldout_fraction < 1.0))
    throw std::invalid_argument("train.heldout_fraction must be in [0,1)");
  sgd.validate();
}

ModelDims TrainConfig::dims_for(std::size_t source_vocab, std::size_t target_vocab) const {
  return ModelDims{source_vocab, target_vocab, embedding, hidden, layers};
}

BatchLoss batch_nll(const NmtParams& params, std::span<const SentencePair> batch, Real dropout_rate,
                    std::uint64_t seed, LossNormalization normalization) {
  if (batch.empty()) throw std::invalid_argument("batch_nll: empty batch");
  BatchLoss out;
  std::mt19937_64 rng(seed);
  const Dropout dropout{dropout_rate, &rng};
  Var total;
  for (const SentencePair& pair : batch) {
    Var lp = sequence_log_prob(out.tape, params, pair.source, pair.target, 1.0, dropout);
    total = total.valid() ? out.tape.add(total, lp) : lp;
    out.tokens += pair.target.size();
  }
  out.total_nll = -out.tape.value(total).item();
  const Real denom = normalization == LossNormalization::kPerToken ? static_cast<Real>(out.tokens)
                                                                    : static_cast<Real>(batch.size());
  out.loss = out.tape.scale(total, -1.0 / denom);
  out.value = out.tape.value(out.loss).item();
  return out;
}

Real perplexity(const NmtParams& params, std::span<const SentencePair> corpus) {
  if (corpus.empty()) throw std::invalid_argument("perplexity: empty corpus");
  Real nll = 0.0;
  std::size_t tokens = 0;
  for (const SentencePair& pair : corpus) {
    nll -= sequence_log_prob(params, pair.source, pair.target);
    tokens += pair.target.size();
  }
  return std::exp(nll / static_cast<Real>(tokens));
}

Real token_accuracy(const NmtParams& params, std::span<const SentencePair> corpus) {
  std::size_t correct = 0;
  std::size_t total = 0;
  for (const SentencePair& pair : corpus) {
    Tape tape;
    EncoderOutput enc = encode(tape, params, pair.source);
    DecoderState state = initial_state(tape, params, enc);
    TokenId prev = Vocabulary::kBos;
    for (TokenId y : pair.target) {
      StepOutput s = decoder_step(tape, params, state, prev, enc);
      Var logits = policy_logits(tape, params, s.output);
      correct += argmax(tape.value(logits).data()) == y;
      ++total;
      state = std::move(s.state);
      prev = y;
    }
  }
  return total == 0 ? 0.0 : static_cast<Real>(correct) / static_cast<Real>(total);
}

namespace {

std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order,
                                                   const ParallelCorpus& corpus, std::size_t batch_size,
                                                   std::mt19937_64& rng) {
  constexpr std::size_t kBucketBatches = 16;
  const std::size_t pool = batch_size * kBucketBatches;
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += pool) {
    const std::size_t end = std::min(order.size(), start + pool);
    std::vector<std::size_t> chunk(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
    std::stable_sort(chunk.begin(), chunk.end(), [&](std::size_t a, std::size_t b) {
      const auto& pa = corpus.pairs[a];
      const auto& pb = corpus.pairs[b];
      if (pa.target.size() != pb.target.size()) return pa.target.size() < pb.target.size();
      return pa.source.size() < pb.source.size();
    });
    for (std::size_t b = 0; b < chunk.size(); b += batch_size)
      batches.emplace_back(chunk.begin() + static_cast<std::ptrdiff_t>(b),
                           chunk.begin() + static_cast<std::ptrdiff_t>(std::min(chunk.size(), b + batch_size)));
  }
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

}  // namespace

TrainResult train_supervised(const ParallelCorpus& corpus, const ModelDims& dims, const TrainConfig& config,
                             std::uint64_t seed, const ParallelCorpus& heldout, const EpochCallback& on_epoch) {
  if (corpus.empty()) throw std::invalid_argument("train_supervised: empty corpus");
  config.validate();
  std::mt19937_64 rng(seed);
  TrainResult result{NmtParams::initialized(dims, rng()), {}};

  ParallelCorpus train;
  ParallelCorpus dev = heldout;
  if (dev.empty()) {
    std::vector<std::size_t> idx(corpus.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto split = static_cast<std::size_t>(config.heldout_fraction * static_cast<Real>(corpus.size()));
    if (split == 0 || split >= corpus.size()) {
      train = corpus;
      dev = corpus;
    } else {
      for (std::size_t i = 0; i < idx.size(); ++i) (i < split ? dev : train).pairs.push_back(corpus.pairs[idx[i]]);
    }
  } else {
    train = corpus;
  }

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<SentencePair> batch;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const int e = static_cast<int>(epoch);
    std::shuffle(order.begin(), order.end(), rng);
    Real nll = 0.0;
    std::size_t tokens = 0;
    for (const auto& ids : make_batches(order, train, config.batch_size, rng)) {
      batch.clear();
      for (std::size_t i : ids) batch.push_back(train.pairs[i]);
      BatchLoss bl = batch_nll(result.params, batch, config.dropout, rng(), config.normalization);
      Gradients grads = backward(bl.tape, bl.loss, result.params.params());
      nll += bl.total_nll;
      tokens += bl.tokens;
      sgd_step(result.params.params(), std::move(grads), config.sgd, e);
    }
    EpochMetrics m{e, std::exp(nll / static_cast<Real>(tokens)), perplexity(result.params, dev.pairs),
                   config.sgd.rate_at(e)};
    result.metrics.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return result;
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const EpochMetrics> metrics) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write metrics file " + path.string());
  out << "epoch,train_ppl,heldout_ppl,lr\n";
  out.precision(10);
  for (const auto& m : metrics)
    out << m.epoch << ',' << m.train_ppl << ',' << m.heldout_ppl << ',' << m.learning_rate << '\n';
}

}  // namespace banditmt
