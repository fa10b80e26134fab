#include "banditmt/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <stdexcept>

namespace banditmt {
namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(std::span<const std::string> words, std::size_t n) {
  NgramCounts counts;
  if (words.size() < n) return counts;
  for (std::size_t i = 0; i + n <= words.size(); ++i) ++counts[std::vector<std::string>(words.begin() + i, words.begin() + i + n)];
  return counts;
}

struct Stats {
  std::array<std::size_t, kBleuOrder> matches{};
  std::array<std::size_t, kBleuOrder> totals{};
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
};

Stats collect(std::span<const std::string> hyp, std::span<const std::string> ref) {
  Stats s;
  s.hyp_len = hyp.size();
  s.ref_len = ref.size();
  for (std::size_t n = 1; n <= kBleuOrder; ++n) {
    NgramCounts h = count_ngrams(hyp, n);
    NgramCounts r = count_ngrams(ref, n);
    for (const auto& [gram, c] : h) {
      s.totals[n - 1] += c;
      auto it = r.find(gram);
      if (it != r.end()) s.matches[n - 1] += std::min(c, it->second);
    }
  }
  return s;
}

Real brevity_penalty(std::size_t hyp_len, std::size_t ref_len) {
  if (hyp_len >= ref_len) return 1.0;
  return std::exp(1.0 - static_cast<Real>(ref_len) / static_cast<Real>(hyp_len));
}

}  // namespace

Real sentence_reward(std::span<const std::string> hypothesis, std::span<const std::string> reference) {
  if (reference.empty()) throw std::invalid_argument("sentence_reward: empty reference");
  if (hypothesis.empty()) return 0.0;
  const Stats s = collect(hypothesis, reference);
  if (s.matches[0] == 0) return 0.0;
  Real log_sum = std::log(static_cast<Real>(s.matches[0]) / static_cast<Real>(s.totals[0]));
  for (std::size_t n = 1; n < kBleuOrder; ++n)
    log_sum += std::log((static_cast<Real>(s.matches[n]) + 1.0) / (static_cast<Real>(s.totals[n]) + 1.0));
  const Real value = brevity_penalty(s.hyp_len, s.ref_len) * std::exp(log_sum / static_cast<Real>(kBleuOrder));
  return std::clamp(value, 0.0, 1.0);
}

Real corpus_bleu(std::span<const Sentence> hypotheses, std::span<const Sentence> references) {
  if (hypotheses.size() != references.size())
    throw std::invalid_argument("corpus_bleu: " + std::to_string(hypotheses.size()) + " hypotheses vs " +
                                std::to_string(references.size()) + " references");
  Stats total;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    if (references[i].empty()) throw std::invalid_argument("corpus_bleu: empty reference at " + std::to_string(i));
    Stats s = collect(hypotheses[i], references[i]);
    for (std::size_t n = 0; n < kBleuOrder; ++n) {
      total.matches[n] += s.matches[n];
      total.totals[n] += s.totals[n];
    }
    total.hyp_len += s.hyp_len;
    total.ref_len += s.ref_len;
  }
  if (total.hyp_len == 0) return 0.0;
  Real log_sum = 0.0;
  for (std::size_t n = 0; n < kBleuOrder; ++n) {
    if (total.matches[n] == 0) return 0.0;
    log_sum += std::log(static_cast<Real>(total.matches[n]) / static_cast<Real>(total.totals[n]));
  }
  return 100.0 * brevity_penalty(total.hyp_len, total.ref_len) * std::exp(log_sum / static_cast<Real>(kBleuOrder));
}

std::vector<WindowMean> windowed_means(std::span<const Real> scores, std::size_t window) {
  if (window == 0) throw std::invalid_argument("windowed_means: window must be >= 1");
  std::vector<WindowMean> out;
  for (std::size_t start = 0; start < scores.size(); start += window) {
    const std::size_t end = std::min(scores.size(), start + window);
    Real sum = 0.0;
    for (std::size_t i = start; i < end; ++i) sum += scores[i];
    out.push_back({out.size(), sum / static_cast<Real>(end - start), end - start, end - start < window});
  }
  return out;
}

}  // namespace banditmt
