#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "banditmt/vocab.hpp"

namespace banditmt {

inline constexpr const char* kBpeVersion = "banditmt-bpe-1";
inline constexpr std::string_view kContinuationMarker = "@@";
inline constexpr std::string_view kEndOfWord = "</w>";

/// Ordered merge table. Non-final subword units carry the "@@" suffix when
/// applied; the end-of-word sentinel never appears in output tokens.
class BpeModel {
 public:
  using Merge = std::pair<std::string, std::string>;

  BpeModel() = default;
  explicit BpeModel(std::vector<Merge> merges);

  const std::vector<Merge>& merges() const { return merges_; }
  std::optional<std::size_t> rank(const Merge& merge) const;

  /// Subword units of one word; the last unit keeps the sentinel suffix.
  std::vector<std::string> segment(const std::string& word) const;

  /// Header line "banditmt-bpe-1", then "left right" per merge in learned order.
  void save(const std::filesystem::path& path) const;
  static BpeModel load(const std::filesystem::path& path);

 private:
  std::vector<Merge> merges_;
  std::map<Merge, std::size_t> ranks_;
};

/// Greedy most-frequent-pair merging over the word-frequency table of
/// `corpus`. Ties go to the lexicographically smallest (left, right) pair;
/// stops early once no pair occurs at least twice.
BpeModel learn_bpe(std::span<const Sentence> corpus, std::size_t num_merges);

/// Throws std::invalid_argument for tokens already containing "@@".
Sentence apply_bpe(const BpeModel& model, std::span<const std::string> words);

/// Joins "@@"-marked units with their successors. A dangling marker at the end
/// is stripped and reported through `warnings` when given.
Sentence restore_words(std::span<const std::string> subwords, std::vector<std::string>* warnings = nullptr);

/// Splits a UTF-8 string into code-point substrings.
std::vector<std::string> utf8_characters(std::string_view word);

}  // namespace banditmt
