#include "synthetic.hpp"

#include <algorithm>
#include <random>
#include <string>

namespace banditmt::testing {

void TextPairs::append(const TextPairs& other) {
  src.insert(src.end(), other.src.begin(), other.src.end());
  tgt.insert(tgt.end(), other.tgt.begin(), other.tgt.end());
}

TextPairs lexicon_pairs(std::size_t n, std::size_t vocab, std::size_t min_len, std::size_t max_len,
                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  std::uniform_int_distribution<std::size_t> word(0, vocab - 1);
  TextPairs out;
  for (std::size_t i = 0; i < n; ++i) {
    Sentence s, t;
    for (std::size_t k = len(rng); k > 0; --k) {
      const std::size_t w = word(rng);
      s.push_back("s" + std::to_string(w));
      t.push_back("t" + std::to_string(w));
    }
    out.src.push_back(std::move(s));
    out.tgt.push_back(std::move(t));
  }
  return out;
}

DomainShiftTask make_domain_shift_task(const DomainShiftSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> len(spec.min_len, spec.max_len);
  std::uniform_int_distribution<std::size_t> word(0, spec.vocab - 1);
  std::bernoulli_distribution primary(spec.primary_rate);

  auto sentence = [&](bool domain_b) {
    Sentence s, t;
    for (std::size_t k = len(rng); k > 0; --k) {
      const std::size_t w = word(rng);
      s.push_back("w" + std::to_string(w));
      const bool use_primary = domain_b ? w >= spec.shifted : primary(rng);
      t.push_back((use_primary ? "p" : "q") + std::to_string(w));
    }
    return std::make_pair(s, t);
  };
  DomainShiftTask task;
  auto fill = [&](TextPairs& into, std::size_t n, bool b) {
    for (std::size_t i = 0; i < n; ++i) {
      auto [s, t] = sentence(b);
      into.src.push_back(std::move(s));
      into.tgt.push_back(std::move(t));
    }
  };
  fill(task.pretrain, spec.pretrain, false);
  fill(task.stream, spec.stream, true);
  fill(task.heldout, spec.heldout, true);
  return task;
}

SelectionTask make_selection_task(const SelectionSpec& spec, std::uint64_t seed) {
  const std::size_t kTopic = spec.topic_vocab;
  const std::size_t kAmbiguous = spec.ambiguous_vocab;
  const std::size_t kGeneral = spec.general_vocab;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> len(3, 7);
  std::uniform_int_distribution<std::size_t> topic(0, kTopic - 1);
  std::uniform_int_distribution<std::size_t> amb(0, kAmbiguous - 1);
  std::uniform_int_distribution<std::size_t> gen(0, kGeneral - 1);
  std::bernoulli_distribution coin(0.5);
  std::bernoulli_distribution mixed(spec.mixed_rate);

  // Each slot is one source word and its translation in context.
  auto topic_word = [&] {
    const std::size_t i = topic(rng);
    return std::make_pair("T" + std::to_string(i), "x" + std::to_string(i));
  };
  auto amb_word = [&](bool in_domain) {
    const std::size_t i = amb(rng);
    return std::make_pair("A" + std::to_string(i), (in_domain ? "ai" : "ao") + std::to_string(i));
  };
  auto general_word = [&] {
    const std::size_t i = gen(rng);
    return std::make_pair("G" + std::to_string(i), "g" + std::to_string(i));
  };
  auto make = [&](int kind) {
    Sentence s, t;
    const std::size_t n = len(rng);
    // Mixed kinds always carry at least one general word.
    const std::size_t forced = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    for (std::size_t k = 0; k < n; ++k) {
      std::pair<std::string, std::string> slot;
      const bool force_general = (kind == 1 || kind == 2) && k == forced;
      switch (force_general ? 3 : kind) {
        case 0: slot = coin(rng) ? topic_word() : amb_word(true); break;
        case 1: slot = mixed(rng) ? topic_word() : general_word(); break;
        case 2: slot = mixed(rng) ? amb_word(false) : general_word(); break;
        default: slot = general_word(); break;
      }
      s.push_back(slot.first);
      t.push_back(slot.second);
    }
    return std::make_pair(s, t);
  };

  SelectionTask task;
  for (std::size_t i = 0; i < spec.in_domain_lines; ++i) task.in_domain.push_back(make(0).first);
  std::vector<int> kinds;
  kinds.insert(kinds.end(), spec.in_like, 0);
  kinds.insert(kinds.end(), spec.topic_general, 1);
  kinds.insert(kinds.end(), spec.ambiguous_general, 2);
  kinds.insert(kinds.end(), spec.general, 3);
  std::shuffle(kinds.begin(), kinds.end(), rng);
  for (int k : kinds) {
    auto [s, t] = make(k);
    task.pool.src.push_back(std::move(s));
    task.pool.tgt.push_back(std::move(t));
    task.kind.push_back(k);
  }
  for (std::size_t i = 0; i < spec.heldout; ++i) {
    auto [s, t] = make(0);
    task.heldout.src.push_back(std::move(s));
    task.heldout.tgt.push_back(std::move(t));
  }
  return task;
}

Encoded encode_pairs(const TextPairs& train) {
  Encoded e{Vocabulary::build(train.src), Vocabulary::build(train.tgt), {}};
  e.corpus = ParallelCorpus::from_text(train.src, train.tgt, e.source_vocab, e.target_vocab);
  return e;
}

ParallelCorpus encode_with(const TextPairs& pairs, const Vocabulary& sv, const Vocabulary& tv) {
  return ParallelCorpus::from_text(pairs.src, pairs.tgt, sv, tv);
}

}  // namespace banditmt::testing
