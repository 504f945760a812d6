// Test-only utilities: independent oracles and fixture builders. Nothing in
// here may call into the decoder paths it is used to check.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "kwext/decoder.hpp"
#include "kwext/scorer.hpp"
#include "kwext/trie.hpp"
#include "kwext/types.hpp"
#include "kwext/vocab.hpp"

namespace kwtest {

using kwext::kBos;
using kwext::kEos;
using kwext::TokenId;
using kwext::TokenSeq;

// Vocabulary whose non-reserved tokens are "w3".."w{n-1}" (token string ==
// "w" + id), convenient for generated fixtures.
inline kwext::Vocabulary numbered_vocab(std::size_t size) {
  std::vector<std::string> tokens{"<bos>", "<eos>", "<unk>"};
  for (std::size_t i = tokens.size(); i < size; ++i) tokens.push_back("w" + std::to_string(i));
  return kwext::Vocabulary(std::move(tokens));
}

inline std::string join_ids(const TokenSeq& ids) {
  std::string s;
  for (TokenId id : ids) {
    if (!s.empty()) s += ' ';
    s += "w" + std::to_string(id);
  }
  return s;
}

// Random keyword set over ids [3, vocab_size); may contain duplicates.
inline std::vector<TokenSeq> random_keywords(std::mt19937_64& rng, std::size_t count,
                                             std::size_t vocab_size, std::size_t max_len = 6) {
  std::uniform_int_distribution<std::size_t> len_dist(1, max_len);
  std::uniform_int_distribution<TokenId> tok_dist(3, static_cast<TokenId>(vocab_size - 1));
  std::vector<TokenSeq> keywords;
  for (std::size_t i = 0; i < count; ++i) {
    TokenSeq kw(len_dist(rng));
    for (auto& t : kw) t = tok_dist(rng);
    keywords.push_back(std::move(kw));
  }
  return keywords;
}

// Random table scorer: one stored record per trie prefix, random distributions
// at every level. Deterministic given the rng state.
inline kwext::TableScorer random_table_scorer(std::mt19937_64& rng, const kwext::Trie& trie,
                                              const kwext::Vocabulary& vocab, int order,
                                              const std::string& query_text) {
  std::vector<kwext::TableScorer::Record> records;
  std::uniform_real_distribution<double> u(0.05, 1.0);
  // Collect every prefix (path from root) of the trie.
  std::vector<TokenSeq> prefixes;
  TokenSeq path;
  auto walk = [&](auto&& self, std::uint32_t node) -> void {
    prefixes.push_back(path);
    for (const auto& edge : trie.children(node)) {
      if (edge.token == kEos) continue;
      path.push_back(edge.token);
      self(self, edge.node);
      path.pop_back();
    }
  };
  walk(walk, kwext::Trie::kRootIndex);

  for (const auto& prefix : prefixes) {
    kwext::TableScorer::Record rec;
    rec.query = query_text;
    rec.prefix = join_ids(prefix);
    for (int k = 0; k < order; ++k) {
      std::vector<std::pair<std::string, double>> dist;
      double total = 0.0;
      std::vector<double> raw(vocab.size());
      for (auto& p : raw) {
        p = u(rng);
        total += p;
      }
      for (std::size_t id = 0; id < vocab.size(); ++id)
        dist.emplace_back(vocab.token(static_cast<TokenId>(id)), raw[id] / total);
      rec.dists.push_back(std::move(dist));
    }
    records.push_back(std::move(rec));
  }
  return kwext::TableScorer(records, vocab);
}

// Sum of unmodified g_1 log-probabilities along a keyword path, independently
// of the decoder (the score-consistency oracle).
inline double rescore_path(const TokenSeq& query, const TokenSeq& keyword,
                           const kwext::Scorer& scorer) {
  double score = 0.0;
  TokenSeq prefix;
  for (TokenId t : keyword) {
    score += scorer.predict(query, prefix).dists[0][t];
    prefix.push_back(t);
  }
  score += scorer.predict(query, prefix).dists[0][kEos];
  return score;
}

// Exhaustive oracle: every keyword in the trie, scored exactly, sorted by
// score descending with ties by token sequence ascending.
inline std::vector<std::pair<TokenSeq, double>> enumerate_and_score(
    const TokenSeq& query, const kwext::Trie& trie, const kwext::Scorer& scorer) {
  std::vector<std::pair<TokenSeq, double>> out;
  for (const auto& kw : trie.enumerate())
    out.emplace_back(kw, rescore_path(query, kw, scorer));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return out;
}

// Reference Trie-constrained beam search with no lookahead, written
// independently of the production decoder. Ranks and stores plain summed
// g_1 scores.
inline std::vector<std::pair<TokenSeq, double>> reference_plain_beam(
    const TokenSeq& query, const kwext::Trie& trie, const kwext::Scorer& scorer,
    std::size_t beam_size, std::size_t max_length) {
  struct Entry {
    TokenSeq generated;  // no BOS, no EOS
    double score = 0.0;
  };
  auto order_desc = [](const Entry& a, const Entry& b) {
    if (a.score != b.score) return a.score > b.score;
    // Production hypotheses carry a BOS prefix; comparing the generated
    // tokens directly is equivalent.
    return a.generated < b.generated;
  };

  std::vector<Entry> alive{Entry{}};
  std::vector<Entry> done;
  for (std::size_t step = 0; step < max_length; ++step) {
    std::vector<Entry> grown;
    std::vector<Entry> newly_done;
    for (const auto& entry : alive) {
      auto dist = scorer.predict(query, entry.generated).dists[0];
      for (TokenId next : trie.suffixes(entry.generated).allowed) {
        Entry e;
        e.generated = entry.generated;
        e.generated.push_back(next);
        e.score = entry.score + dist[next];
        (next == kEos ? newly_done : grown).push_back(std::move(e));
      }
    }
    std::sort(grown.begin(), grown.end(), order_desc);
    if (grown.size() > beam_size) grown.resize(beam_size);
    for (auto& e : newly_done) done.push_back(std::move(e));
    std::sort(done.begin(), done.end(), order_desc);
    if (done.size() > beam_size) done.resize(beam_size);
    alive = std::move(grown);
    if (alive.empty()) break;
    if (done.size() == beam_size && alive.front().score <= done.back().score) break;
  }
  std::vector<std::pair<TokenSeq, double>> out;
  for (auto& e : done) {
    e.generated.pop_back();  // strip EOS
    out.emplace_back(e.generated, e.score);
  }
  return out;
}

// The bi-gram lookahead fixture: "the best hotel {in -> toronto|texas,
// of -> tokyo}". Distribution values follow the published example, with the
// future mass renormalized to sum to one.
struct ForkFixture {
  kwext::Vocabulary vocab{std::vector<std::string>{"<bos>", "<eos>", "<unk>", "the", "best",
                                                   "hotel", "in", "of", "toronto", "texas",
                                                   "tokyo"}};
  kwext::Trie trie{11};
  std::vector<kwext::TableScorer::Record> records;
  std::string query = "best hotel";

  ForkFixture() {
    trie.insert(vocab.tokenize("the best hotel in toronto"));
    trie.insert(vocab.tokenize("the best hotel in texas"));
    trie.insert(vocab.tokenize("the best hotel of tokyo"));

    auto rest = [](std::vector<std::pair<std::string, double>> named) {
      double total = 0.0;
      for (auto& [t, p] : named) total += p;
      named.emplace_back("the", 1.0 - total);  // park leftover mass off-path
      return named;
    };
    // g_1 at "the best hotel": of 0.5, in 0.4; g_2: texas 0.9, toronto 0.05,
    // tokyo 0.05.
    records.push_back({query,
                       "the best hotel",
                       {rest({{"in", 0.4}, {"of", 0.5}}),
                        rest({{"texas", 0.9}, {"toronto", 0.05}, {"tokyo", 0.05}})}});
    records.push_back({query,
                       "the best hotel in",
                       {rest({{"texas", 0.9}, {"toronto", 0.05}}), rest({})}});
  }

  kwext::TableScorer scorer() const { return kwext::TableScorer(records, vocab); }
};

}  // namespace kwtest
