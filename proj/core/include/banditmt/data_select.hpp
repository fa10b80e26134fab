#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "banditmt/array.hpp"
#include "banditmt/vocab.hpp"

namespace banditmt {

struct LmOptions {
  std::size_t order = 4;
  Real discount = 0.75;
  bool unk_singletons = false;  // train <unk> by replacing singleton words
};

/// Interpolated Kneser-Ney n-gram model over whitespace tokens. Sentences are
/// padded with one <s> and one </s>; the uniform backstop spreads over every
/// predictable type (observed words, </s>, <unk>).
class NgramModel {
 public:
  using Ngram = std::vector<std::uint32_t>;

  static constexpr const char* kBos = "<s>";
  static constexpr const char* kEos = "</s>";
  static constexpr const char* kUnk = "<unk>";

  std::size_t order() const { return options_.order; }
  Real discount() const { return options_.discount; }
  /// Predictable types: observed words, </s> and <unk> (not <s>).
  std::size_t vocabulary_size() const { return predictable_; }
  std::vector<std::string> vocabulary() const;
  bool known(const std::string& word) const;

  /// P(word | history) with the history truncated to order - 1 tokens.
  /// Unknown words are scored as <unk>; "<s>" may appear in the history.
  Real probability(std::span<const std::string> history, const std::string& word) const;

  friend NgramModel train_lm(std::span<const Sentence> corpus, const LmOptions& options);

 private:
  struct NgramHash {
    std::size_t operator()(const Ngram& g) const noexcept;
  };
  struct HistoryStats {
    Real total = 0.0;         // sum of adjusted counts over continuations
    std::size_t types = 0;    // continuations with nonzero adjusted count
  };

  std::uint32_t lookup(const std::string& word) const;
  Real prob_ids(const Ngram& context, std::uint32_t word) const;

  LmOptions options_;
  std::unordered_map<std::string, std::uint32_t> ids_;
  std::vector<std::string> words_;
  std::size_t predictable_ = 0;
  std::uint32_t bos_ = 0;
  std::uint32_t eos_ = 0;
  std::uint32_t unk_ = 0;
  // Indexed by n-gram length - 1.
  std::vector<std::unordered_map<Ngram, Real, NgramHash>> adjusted_;
  std::vector<std::unordered_map<Ngram, HistoryStats, NgramHash>> histories_;
};

/// Throws std::invalid_argument on an empty corpus or order 0.
NgramModel train_lm(std::span<const Sentence> corpus, const LmOptions& options = {});

/// Mean negative log-probability in nats over the words and </s>.
Real cross_entropy(std::span<const std::string> sentence, const NgramModel& lm);

/// H_in(s) - H_out(s); lower means more in-domain-like.
Real moore_lewis_score(std::span<const std::string> sentence, const NgramModel& lm_in, const NgramModel& lm_out);

struct SelectionConfig {
  std::size_t in_domain_cap = 200000;
  Real fraction = 0.5;
  std::size_t order = 4;
  std::size_t unk_singleton_limit = 100000;  // in-domain LMs below this many lines get <unk> training
  void validate() const;
};

struct ScoredSentence {
  std::size_t index = 0;
  Real score = 0.0;
  bool operator==(const ScoredSentence&) const = default;
};

struct Selection {
  std::vector<ScoredSentence> ranking;  // every sentence, ascending score, stable
  std::size_t selected = 0;             // ceil(fraction * N) leading entries of `ranking`
};

/// Ranks `sources` by Moore-Lewis score and keeps the leading fraction.
Selection select(std::span<const Sentence> sources, const NgramModel& lm_in, const NgramModel& lm_out, Real fraction);

/// Trains both language models (in-domain capped at `config.in_domain_cap`
/// lines, out-of-domain on all of `out_domain_sources`) and runs select().
Selection select_data(std::span<const Sentence> in_domain, std::span<const Sentence> out_domain_sources,
                      const SelectionConfig& config);

}  // namespace banditmt
