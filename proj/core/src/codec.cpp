#include "banditmt/codec.hpp"

namespace banditmt {

TextCodec::TextCodec(Vocabulary source_vocab, Vocabulary target_vocab, std::optional<BpeModel> bpe)
    : source_(std::move(source_vocab)), target_(std::move(target_vocab)), bpe_(std::move(bpe)) {}

std::vector<TokenId> TextCodec::encode_source(std::span<const std::string> words) const {
  if (!bpe_) return source_.encode(words);
  const Sentence units = apply_bpe(*bpe_, words);
  return source_.encode(units);
}

std::vector<TokenId> TextCodec::encode_target(std::span<const std::string> words) const {
  if (!bpe_) return target_.encode(words);
  const Sentence units = apply_bpe(*bpe_, words);
  return target_.encode(units);
}

Sentence TextCodec::decode_target(std::span<const TokenId> ids) const {
  Sentence units = target_.decode(ids);
  if (!bpe_) return units;
  return restore_words(units);
}

}  // namespace banditmt
