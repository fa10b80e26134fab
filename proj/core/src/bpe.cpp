#include "banditmt/bpe.hpp"

#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

namespace banditmt {
namespace {

void reject_marker(const std::string& word) {
  if (word.find(kContinuationMarker) != std::string::npos)
    throw std::invalid_argument("bpe: input token contains reserved marker '@@': " + word);
}

bool ends_with_sentinel(const std::string& unit) {
  return unit.size() >= kEndOfWord.size() &&
         unit.compare(unit.size() - kEndOfWord.size(), kEndOfWord.size(), kEndOfWord) == 0;
}

std::vector<std::string> initial_symbols(const std::string& word) {
  std::vector<std::string> symbols = utf8_characters(word);
  symbols.emplace_back(kEndOfWord);
  return symbols;
}

void merge_in_place(std::vector<std::string>& symbols, const BpeModel::Merge& merge) {
  std::vector<std::string> out;
  out.reserve(symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (i + 1 < symbols.size() && symbols[i] == merge.first && symbols[i + 1] == merge.second) {
      out.push_back(symbols[i] + symbols[i + 1]);
      ++i;
    } else {
      out.push_back(std::move(symbols[i]));
    }
  }
  symbols = std::move(out);
}

}  // namespace

std::vector<std::string> utf8_characters(std::string_view word) {
  std::vector<std::string> chars;
  for (std::size_t i = 0; i < word.size();) {
    const auto lead = static_cast<unsigned char>(word[i]);
    std::size_t len = 1;
    if (lead >= 0xF0) len = 4;
    else if (lead >= 0xE0) len = 3;
    else if (lead >= 0xC0) len = 2;
    len = std::min(len, word.size() - i);
    chars.emplace_back(word.substr(i, len));
    i += len;
  }
  return chars;
}

BpeModel::BpeModel(std::vector<Merge> merges) : merges_(std::move(merges)) {
  for (std::size_t i = 0; i < merges_.size(); ++i)
    if (!ranks_.emplace(merges_[i], i).second)
      throw std::invalid_argument("bpe: duplicate merge '" + merges_[i].first + " " + merges_[i].second + "'");
}

std::optional<std::size_t> BpeModel::rank(const Merge& merge) const {
  auto it = ranks_.find(merge);
  if (it == ranks_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> BpeModel::segment(const std::string& word) const {
  std::vector<std::string> symbols = initial_symbols(word);
  while (symbols.size() > 1) {
    std::size_t best_rank = std::numeric_limits<std::size_t>::max();
    std::size_t best_at = 0;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      auto it = ranks_.find(Merge{symbols[i], symbols[i + 1]});
      if (it != ranks_.end() && it->second < best_rank) {
        best_rank = it->second;
        best_at = i;
      }
    }
    if (best_rank == std::numeric_limits<std::size_t>::max()) break;
    merge_in_place(symbols, Merge{symbols[best_at], symbols[best_at + 1]});
  }
  return symbols;
}

void BpeModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write merges file " + path.string());
  out << kBpeVersion << '\n';
  for (const auto& [left, right] : merges_) out << left << ' ' << right << '\n';
}

BpeModel BpeModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open merges file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kBpeVersion)
    throw std::runtime_error("merges file " + path.string() + ": missing '" + kBpeVersion + "' header");
  std::vector<Merge> merges;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto space = line.find(' ');
    if (space == std::string::npos || space == 0 || space + 1 >= line.size() ||
        line.find(' ', space + 1) != std::string::npos)
      throw std::runtime_error("merges file " + path.string() + ": malformed line " + std::to_string(lineno));
    merges.emplace_back(line.substr(0, space), line.substr(space + 1));
  }
  return BpeModel(std::move(merges));
}

BpeModel learn_bpe(std::span<const Sentence> corpus, std::size_t num_merges) {
  std::map<std::string, std::size_t> word_counts;
  for (const auto& line : corpus)
    for (const auto& w : line) {
      reject_marker(w);
      ++word_counts[w];
    }

  struct WordType {
    std::vector<std::string> symbols;
    std::size_t count;
  };
  std::vector<WordType> types;
  types.reserve(word_counts.size());
  for (const auto& [w, c] : word_counts) types.push_back({initial_symbols(w), c});

  // Pair counts are maintained incrementally; `queue` orders pairs by count
  // descending, then lexicographically.
  std::map<BpeModel::Merge, long> counts;
  std::map<BpeModel::Merge, std::set<std::size_t>> where;
  std::set<std::pair<long, BpeModel::Merge>> queue;
  auto apply_delta = [&](const std::map<BpeModel::Merge, long>& delta) {
    for (const auto& [pair, d] : delta) {
      if (d == 0) continue;
      long& c = counts[pair];
      if (c > 0) queue.erase({-c, pair});
      c += d;
      if (c > 0) queue.insert({-c, pair});
      else counts.erase(pair);
    }
  };
  auto tally = [](std::map<BpeModel::Merge, long>& delta, const WordType& t, long sign) {
    for (std::size_t i = 0; i + 1 < t.symbols.size(); ++i)
      delta[{t.symbols[i], t.symbols[i + 1]}] += sign * long(t.count);
  };
  {
    std::map<BpeModel::Merge, long> init;
    for (std::size_t w = 0; w < types.size(); ++w) {
      tally(init, types[w], 1);
      for (std::size_t i = 0; i + 1 < types[w].symbols.size(); ++i)
        where[{types[w].symbols[i], types[w].symbols[i + 1]}].insert(w);
    }
    apply_delta(init);
  }

  std::vector<BpeModel::Merge> merges;
  while (merges.size() < num_merges && !queue.empty() && -queue.begin()->first >= 2) {
    const BpeModel::Merge chosen = queue.begin()->second;
    const std::set<std::size_t> affected = std::move(where[chosen]);
    where.erase(chosen);
    std::map<BpeModel::Merge, long> delta;
    for (std::size_t w : affected) {
      WordType& t = types[w];
      tally(delta, t, -1);
      merge_in_place(t.symbols, chosen);
      tally(delta, t, 1);
      for (std::size_t i = 0; i + 1 < t.symbols.size(); ++i) where[{t.symbols[i], t.symbols[i + 1]}].insert(w);
    }
    apply_delta(delta);
    merges.push_back(chosen);
  }
  return BpeModel(std::move(merges));
}

Sentence apply_bpe(const BpeModel& model, std::span<const std::string> words) {
  Sentence out;
  std::map<std::string, std::vector<std::string>> cache;
  for (const auto& word : words) {
    reject_marker(word);
    auto it = cache.find(word);
    if (it == cache.end()) it = cache.emplace(word, model.segment(word)).first;
    std::vector<std::string> units = it->second;
    if (!units.empty() && units.back() == kEndOfWord) units.pop_back();
    for (std::size_t i = 0; i < units.size(); ++i) {
      std::string unit = units[i];
      if (ends_with_sentinel(unit)) unit.resize(unit.size() - kEndOfWord.size());
      if (i + 1 < units.size()) unit += kContinuationMarker;
      out.push_back(std::move(unit));
    }
  }
  return out;
}

Sentence restore_words(std::span<const std::string> subwords, std::vector<std::string>* warnings) {
  Sentence out;
  std::string pending;
  bool open = false;
  for (const auto& unit : subwords) {
    const bool marked = unit.size() >= kContinuationMarker.size() &&
                        unit.compare(unit.size() - kContinuationMarker.size(), kContinuationMarker.size(),
                                     kContinuationMarker) == 0;
    if (marked) {
      pending += unit.substr(0, unit.size() - kContinuationMarker.size());
      open = true;
    } else {
      out.push_back(pending + unit);
      pending.clear();
      open = false;
    }
  }
  if (open) {
    if (warnings) warnings->push_back("dangling continuation marker at end of sequence");
    if (!pending.empty()) out.push_back(pending);
  }
  return out;
}

}  // namespace banditmt
