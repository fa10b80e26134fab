#include "banditmt/vocab.hpp"

#include <sstream>
#include <stdexcept>

namespace banditmt {

Vocabulary::Vocabulary() {
  for (const char* t : {"<pad>", "<unk>", "<s>", "</s>"}) add(t);
}

Vocabulary Vocabulary::build(std::span<const Sentence> lines) {
  Vocabulary v;
  for (const auto& line : lines)
    for (const auto& w : line) v.add(w);
  return v;
}

TokenId Vocabulary::add(const std::string& token) {
  if (token.empty()) throw std::invalid_argument("vocabulary: empty token");
  auto [it, inserted] = index_.emplace(token, static_cast<TokenId>(tokens_.size()));
  if (inserted) tokens_.push_back(token);
  return it->second;
}

std::optional<TokenId> Vocabulary::find(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id(const std::string& token) const { return find(token).value_or(kUnk); }

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) throw std::out_of_range("vocabulary: id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

std::vector<TokenId> Vocabulary::encode(std::span<const std::string> words, bool append_eos) const {
  std::vector<TokenId> ids;
  ids.reserve(words.size() + 1);
  for (const auto& w : words) ids.push_back(id(w));
  if (append_eos) ids.push_back(kEos);
  return ids;
}

Sentence Vocabulary::decode(std::span<const TokenId> ids) const {
  Sentence out;
  for (TokenId t : ids) {
    if (t == kEos) break;
    if (t < kReserved) continue;
    out.push_back(token(t));
  }
  return out;
}

Sentence tokenize(const std::string& line) {
  Sentence out;
  std::istringstream in(line);
  std::string w;
  while (in >> w) out.push_back(std::move(w));
  return out;
}

std::string join(std::span<const std::string> words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

}  // namespace banditmt
