#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kwext/types.hpp"

namespace kwext {

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::vector<std::string> split_ws(std::string_view text) {
  std::vector<std::string> words;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) words.push_back(std::move(w));
  return words;
}

// Immutable token/id bijection. Reserved ids occupy slots 0..2; the rest
// are assigned by descending corpus frequency, ties broken lexicographically.
class Vocabulary {
 public:
  Vocabulary() {
    tokens_ = {"<bos>", "<eos>", "<unk>"};
    reindex();
  }

  explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.size() < kNumReserved)
      throw DataError("vocabulary must contain the reserved tokens");
    reindex();
  }

  static Vocabulary build(const std::vector<std::string>& corpus_lines, std::size_t max_size) {
    if (corpus_lines.empty()) throw DataError("empty corpus");
    std::map<std::string, std::size_t> freq;
    for (const auto& line : corpus_lines)
      for (auto& w : split_ws(lowercase(line))) ++freq[w];
    std::vector<std::pair<std::string, std::size_t>> items(freq.begin(), freq.end());
    std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    Vocabulary v;
    for (const auto& [tok, n] : items) {
      (void)n;
      if (v.size() >= max_size) break;
      if (!v.index_.count(tok)) {
        v.index_.emplace(tok, static_cast<TokenId>(v.tokens_.size()));
        v.tokens_.push_back(tok);
      }
    }
    return v;
  }

  std::size_t size() const { return tokens_.size(); }

  const std::string& token(TokenId id) const {
    if (id >= tokens_.size()) throw DataError("unknown token id");
    return tokens_[id];
  }

  TokenId id_or_unk(std::string_view tok) const {
    auto it = index_.find(std::string(tok));
    return it == index_.end() ? kUnk : it->second;
  }

  bool contains(std::string_view tok) const { return index_.count(std::string(tok)) > 0; }

  TokenSeq tokenize(std::string_view text) const {
    TokenSeq ids;
    for (auto& w : split_ws(lowercase(text))) ids.push_back(id_or_unk(w));
    return ids;
  }

  // Space-joined tokens; BOS/EOS are stripped.
  std::string detokenize(const TokenSeq& ids) const {
    std::string out;
    for (TokenId id : ids) {
      if (id == kBos || id == kEos) continue;
      if (id >= tokens_.size()) throw DataError("unknown token id");
      if (!out.empty()) out += ' ';
      out += tokens_[id];
    }
    return out;
  }

  // One token per line; line number == TokenId.
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocabulary file: " + path);
    for (const auto& t : tokens_) out << t << '\n';
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read vocabulary file: " + path);
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      tokens.push_back(line);
    }
    return Vocabulary(std::move(tokens));
  }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second)
        throw DataError("duplicate token in vocabulary: " + tokens_[i]);
    }
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace kwext
