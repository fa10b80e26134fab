#include "banditmt/data_select.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace banditmt {

std::size_t NgramModel::NgramHash::operator()(const Ngram& g) const noexcept {
  std::size_t h = 1469598103934665603ULL;
  for (std::uint32_t x : g) h = (h ^ x) * 1099511628211ULL;
  return h;
}

std::vector<std::string> NgramModel::vocabulary() const {
  std::vector<std::string> out;
  for (std::uint32_t i = 0; i < words_.size(); ++i)
    if (i != bos_) out.push_back(words_[i]);
  return out;
}

bool NgramModel::known(const std::string& word) const { return ids_.count(word) != 0; }

std::uint32_t NgramModel::lookup(const std::string& word) const {
  auto it = ids_.find(word);
  return it == ids_.end() ? unk_ : it->second;
}

Real NgramModel::prob_ids(const Ngram& context, std::uint32_t word) const {
  const Real d = options_.discount;
  if (context.empty()) {
    const HistoryStats& s = histories_[0].at(Ngram{});
    auto it = adjusted_[0].find(Ngram{word});
    const Real a = it == adjusted_[0].end() ? 0.0 : it->second;
    return (std::max(a - d, 0.0) + d * static_cast<Real>(s.types) / static_cast<Real>(predictable_)) / s.total;
  }
  const Real lower = prob_ids(Ngram(context.begin() + 1, context.end()), word);
  auto hs = histories_[context.size()].find(context);
  if (hs == histories_[context.size()].end() || hs->second.total <= 0.0) return lower;
  Ngram full = context;
  full.push_back(word);
  auto it = adjusted_[context.size()].find(full);
  const Real a = it == adjusted_[context.size()].end() ? 0.0 : it->second;
  return (std::max(a - d, 0.0) + d * static_cast<Real>(hs->second.types) * lower) / hs->second.total;
}

Real NgramModel::probability(std::span<const std::string> history, const std::string& word) const {
  if (word == kBos) throw std::invalid_argument("ngram: <s> is not predictable");
  const std::size_t keep = std::min(history.size(), options_.order - 1);
  Ngram context;
  for (std::size_t i = history.size() - keep; i < history.size(); ++i) context.push_back(lookup(history[i]));
  return prob_ids(context, lookup(word));
}

NgramModel train_lm(std::span<const Sentence> corpus, const LmOptions& options) {
  if (corpus.empty()) throw std::invalid_argument("train_lm: empty corpus");
  if (options.order == 0) throw std::invalid_argument("train_lm: order must be >= 1");
  if (!(options.discount > 0.0 && options.discount < 1.0)) throw std::invalid_argument("train_lm: discount must be in (0,1)");

  std::map<std::string, std::size_t> counts;
  for (const auto& line : corpus)
    for (const auto& w : line) {
      if (w == NgramModel::kBos || w == NgramModel::kEos) throw std::invalid_argument("train_lm: reserved token in corpus: " + w);
      ++counts[w];
    }

  NgramModel lm;
  lm.options_ = options;
  auto intern = [&lm](const std::string& w) {
    auto [it, fresh] = lm.ids_.emplace(w, static_cast<std::uint32_t>(lm.words_.size()));
    if (fresh) lm.words_.push_back(w);
    return it->second;
  };
  lm.bos_ = intern(NgramModel::kBos);
  lm.eos_ = intern(NgramModel::kEos);
  lm.unk_ = intern(NgramModel::kUnk);
  for (const auto& [w, c] : counts)
    if (!(options.unk_singletons && c == 1)) intern(w);
  lm.predictable_ = lm.words_.size() - 1;

  const std::size_t n = options.order;
  std::vector<std::unordered_map<NgramModel::Ngram, Real, NgramModel::NgramHash>> raw(n);
  NgramModel::Ngram padded;
  for (const auto& line : corpus) {
    padded.assign(1, lm.bos_);
    for (const auto& w : line) padded.push_back(lm.lookup(w));
    padded.push_back(lm.eos_);
    for (std::size_t j = 1; j < padded.size(); ++j)
      for (std::size_t k = 1; k <= n && k <= j + 1; ++k)
        raw[k - 1][NgramModel::Ngram(padded.begin() + static_cast<std::ptrdiff_t>(j + 1 - k),
                                     padded.begin() + static_cast<std::ptrdiff_t>(j + 1))] += 1.0;
  }

  lm.adjusted_.resize(n);
  lm.adjusted_[n - 1] = raw[n - 1];
  for (std::size_t k = 1; k < n; ++k) {
    auto& adj = lm.adjusted_[k - 1];
    for (const auto& [g, c] : raw[k - 1])
      if (g.front() == lm.bos_) adj[g] = c;
    for (const auto& [g, c] : raw[k]) adj[NgramModel::Ngram(g.begin() + 1, g.end())] += 1.0;
  }

  lm.histories_.resize(n);
  lm.histories_[0][{}];
  for (std::size_t k = 1; k <= n; ++k)
    for (const auto& [g, a] : lm.adjusted_[k - 1]) {
      auto& s = lm.histories_[k - 1][NgramModel::Ngram(g.begin(), g.end() - 1)];
      s.total += a;
      ++s.types;
    }
  return lm;
}

Real cross_entropy(std::span<const std::string> sentence, const NgramModel& lm) {
  if (sentence.empty()) throw std::invalid_argument("cross_entropy: empty sentence");
  std::vector<std::string> padded;
  padded.reserve(sentence.size() + 2);
  padded.emplace_back(NgramModel::kBos);
  padded.insert(padded.end(), sentence.begin(), sentence.end());
  padded.emplace_back(NgramModel::kEos);
  const std::span<const std::string> all(padded);
  Real nll = 0.0;
  for (std::size_t j = 1; j < padded.size(); ++j) {
    const std::size_t start = j + 1 > lm.order() ? j + 1 - lm.order() : 0;
    nll -= std::log(lm.probability(all.subspan(start, j - start), padded[j]));
  }
  return nll / static_cast<Real>(padded.size() - 1);
}

Real moore_lewis_score(std::span<const std::string> sentence, const NgramModel& lm_in, const NgramModel& lm_out) {
  return cross_entropy(sentence, lm_in) - cross_entropy(sentence, lm_out);
}

void SelectionConfig::validate() const {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("select.fraction must be in (0,1]");
  if (in_domain_cap == 0) throw std::invalid_argument("select.in_domain_cap must be >= 1");
  if (order == 0) throw std::invalid_argument("select.order must be >= 1");
}

Selection select(std::span<const Sentence> sources, const NgramModel& lm_in, const NgramModel& lm_out, Real fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("select: fraction must be in (0,1]");
  Selection out;
  out.ranking.reserve(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i)
    out.ranking.push_back({i, moore_lewis_score(sources[i], lm_in, lm_out)});
  std::stable_sort(out.ranking.begin(), out.ranking.end(),
                   [](const ScoredSentence& a, const ScoredSentence& b) { return a.score < b.score; });
  const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<Real>(sources.size()) - 1e-9));
  out.selected = std::min(sources.size(), keep);
  return out;
}

Selection select_data(std::span<const Sentence> in_domain, std::span<const Sentence> out_domain_sources,
                      const SelectionConfig& config) {
  config.validate();
  const auto capped = in_domain.first(std::min(in_domain.size(), config.in_domain_cap));
  LmOptions in_opts{config.order, 0.75, capped.size() < config.unk_singleton_limit};
  LmOptions out_opts{config.order, 0.75, false};
  const NgramModel lm_in = train_lm(capped, in_opts);
  const NgramModel lm_out = train_lm(out_domain_sources, out_opts);
  return select(out_domain_sources, lm_in, lm_out, config.fraction);
}

}  // namespace banditmt
