#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace banditmt {

using TokenId = std::uint32_t;
using Sentence = std::vector<std::string>;

/// Bijection between tokens and ids with fixed reserved ids.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kBos = 2;
  static constexpr TokenId kEos = 3;
  static constexpr std::size_t kReserved = 4;

  Vocabulary();

  /// Every distinct token of `lines`, in first-seen order, after the reserved ids.
  static Vocabulary build(std::span<const Sentence> lines);

  TokenId add(const std::string& token);
  std::optional<TokenId> find(const std::string& token) const;
  TokenId id(const std::string& token) const;  // kUnk when absent
  const std::string& token(TokenId id) const;
  std::size_t size() const { return tokens_.size(); }

  std::vector<TokenId> encode(std::span<const std::string> words, bool append_eos = true) const;
  /// Drops reserved tokens and stops at EOS.
  Sentence decode(std::span<const TokenId> ids) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Splits on ASCII whitespace.
Sentence tokenize(const std::string& line);
std::string join(std::span<const std::string> words);

}  // namespace banditmt
