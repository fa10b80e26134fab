#pragma once

#include <optional>
#include <span>
#include <vector>

#include "banditmt/bpe.hpp"
#include "banditmt/vocab.hpp"

namespace banditmt {

/// Maps word-level text to model ids and back, through an optional BPE table.
class TextCodec {
 public:
  TextCodec(Vocabulary source_vocab, Vocabulary target_vocab, std::optional<BpeModel> bpe = std::nullopt);

  const Vocabulary& source_vocab() const { return source_; }
  const Vocabulary& target_vocab() const { return target_; }
  const std::optional<BpeModel>& bpe() const { return bpe_; }

  /// Subword ids with EOS appended.
  std::vector<TokenId> encode_source(std::span<const std::string> words) const;
  std::vector<TokenId> encode_target(std::span<const std::string> words) const;
  /// Stops at EOS and restores words when a BPE table is present.
  Sentence decode_target(std::span<const TokenId> ids) const;

 private:
  Vocabulary source_;
  Vocabulary target_;
  std::optional<BpeModel> bpe_;
};

}  // namespace banditmt
