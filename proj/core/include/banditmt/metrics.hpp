#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "banditmt/array.hpp"
#include "banditmt/vocab.hpp"

namespace banditmt {

inline constexpr std::size_t kBleuOrder = 4;

/// Scores a hypothesis against its hidden reference; must return a value in [0, 1].
using RewardFn = std::function<Real(std::span<const std::string> hypothesis, std::span<const std::string> reference)>;

/// Sentence BLEU of order 4 with uniform weights, add-one smoothing on the
/// n >= 2 precisions and brevity penalty exp(1 - r/c) when c < r.
/// Empty hypothesis scores 0; empty reference throws std::invalid_argument.
Real sentence_reward(std::span<const std::string> hypothesis, std::span<const std::string> reference);

/// Corpus BLEU in [0, 100]: pooled clipped n-gram counts (n <= 4), geometric
/// mean, corpus brevity penalty.
Real corpus_bleu(std::span<const Sentence> hypotheses, std::span<const Sentence> references);

struct WindowMean {
  std::size_t index = 0;
  Real mean = 0.0;
  std::size_t count = 0;
  bool partial = false;  // trailing window shorter than the window size
};

/// Means of consecutive non-overlapping windows.
std::vector<WindowMean> windowed_means(std::span<const Real> scores, std::size_t window);

}  // namespace banditmt
