#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "kwext/scorer.hpp"
#include "kwext/trie.hpp"
#include "kwext/types.hpp"

namespace kwext {

struct BeamConfig {
  int beam_size = 5;
  int ngram_order = 1;           // lookahead depth is ngram_order - 1
  double residual_weight = 0.8;  // lambda; 1 disables lookahead
  int max_length = 20;
  double length_norm_alpha = 0.0;  // 0 = no normalization

  void validate() const {
    if (beam_size < 1) throw DataError("beam size must be positive");
    if (ngram_order < 1) throw DataError("ngram order must be positive");
    if (residual_weight < 0.0 || residual_weight > 1.0)
      throw DataError("lambda must be in [0,1]");
    if (max_length < 1) throw DataError("max length must be positive");
    if (length_norm_alpha < 0.0) throw DataError("length norm alpha must be non-negative");
  }
};

// A decoded prefix with two scores: the cumulative unmodified model score
// (original) and the lookahead-modified score used only for selection.
struct Hypothesis {
  TokenSeq tokens;  // starts with BOS; finished hypotheses end with EOS
  double original_score = 0.0;
  double ranking_score = 0.0;
  bool finished = false;
};

struct ExtensionResult {
  // Finished keywords (without BOS/EOS) with their original model scores,
  // sorted by original score descending, ties by token sequence ascending.
  std::vector<std::pair<TokenSeq, double>> outputs;
  BeamConfig config;
  std::size_t steps_taken = 0;
  std::size_t hypotheses_expanded = 0;
};

// Modified next-token scores over the Trie-allowed suffixes of `prefix`.
//
// Scores are modified from the farthest level inward: at level k a token's
// score becomes lambda * g_k[token] + (1 - lambda) * max over its Trie
// children of the modified level-(k+1) score, bottoming out at `depth`
// where the raw masked g_depth is used. Tokens outside the allowed set are
// implicitly -inf (they are simply absent from the result).
inline std::vector<std::pair<TokenId, double>> lookahead_modify(
    const NGramPrediction& prediction, const Trie& trie, const TokenSeq& prefix, double lambda,
    int depth) {
  if (depth < 1 || depth > prediction.order)
    throw DataError("lookahead depth exceeds scorer order");
  auto node = trie.find(prefix);
  if (!node) throw DataError("prefix outside trie");

  // rec(child reached via `token` at level k) -> modified g_k[token]
  auto rec = [&](auto&& self, std::uint32_t child_node, TokenId token, int level) -> double {
    double own = prediction.dists[level - 1][token];
    if (level == depth) return own;
    const auto& children = trie.children(child_node);
    if (children.empty()) return lambda * own;  // no future levels in the Trie
    double best = kNegInf;
    for (const auto& edge : children)
      best = std::max(best, self(self, edge.node, edge.token, level + 1));
    return lambda * own + (1.0 - lambda) * best;
  };

  std::vector<std::pair<TokenId, double>> out;
  for (const auto& edge : trie.children(*node))
    out.emplace_back(edge.token, rec(rec, edge.node, edge.token, 1));
  return out;
}

namespace detail {

struct Candidate {
  TokenSeq tokens;
  double original = 0.0;
  double ranking = 0.0;
};

// Score descending, ties by token sequence ascending.
inline bool better(double sa, const TokenSeq& ta, double sb, const TokenSeq& tb) {
  if (sa != sb) return sa > sb;
  return ta < tb;
}

}  // namespace detail

// Trie-constrained beam search with n-level lookahead. Hypotheses are ranked
// by modified scores but store their original model scores; the returned
// keywords are ordered by original score.
inline ExtensionResult beam_search(const TokenSeq& query, const Trie& trie, const Scorer& scorer,
                                   const BeamConfig& config) {
  config.validate();
  if (trie.empty()) throw DataError("empty trie");
  if (scorer.order() < config.ngram_order)
    throw DataError("lookahead depth exceeds scorer order");

  const double alpha = config.length_norm_alpha;
  const auto norm = [alpha](double score, std::size_t generated) {
    if (alpha <= 0.0) return score;
    return score / std::pow(static_cast<double>(generated), alpha);
  };
  // Generated length of a hypothesis = tokens after BOS (EOS included).
  const auto gen_len = [](const TokenSeq& tokens) { return tokens.size() - 1; };

  ExtensionResult result;
  result.config = config;

  std::vector<Hypothesis> alive{Hypothesis{{kBos}, 0.0, 0.0, false}};
  std::vector<Hypothesis> finished;
  const std::size_t b = static_cast<std::size_t>(config.beam_size);

  while (result.steps_taken < static_cast<std::size_t>(config.max_length)) {
    std::vector<detail::Candidate> next_alive;
    std::vector<detail::Candidate> next_finished;
    for (const Hypothesis& hyp : alive) {
      TokenSeq prefix(hyp.tokens.begin() + 1, hyp.tokens.end());
      NGramPrediction pred = scorer.predict(query, prefix);
      auto modified = lookahead_modify(pred, trie, prefix, config.residual_weight,
                                       config.ngram_order);
      ++result.hypotheses_expanded;
      for (const auto& [token, mod_score] : modified) {
        detail::Candidate cand;
        cand.tokens = hyp.tokens;
        cand.tokens.push_back(token);
        cand.original = hyp.original_score + pred.dists[0][token];
        cand.ranking = hyp.original_score + mod_score;
        (token == kEos ? next_finished : next_alive).push_back(std::move(cand));
      }
    }
    ++result.steps_taken;

    auto cand_better = [&](const detail::Candidate& a, const detail::Candidate& c) {
      return detail::better(norm(a.ranking, gen_len(a.tokens)), a.tokens,
                            norm(c.ranking, gen_len(c.tokens)), c.tokens);
    };
    std::sort(next_alive.begin(), next_alive.end(), cand_better);
    if (next_alive.size() > b) next_alive.resize(b);

    // Finished buffer: existing entries compete with new EOS candidates on
    // their (normalized) ranking scores; survivors keep original scores.
    for (const auto& c : next_finished)
      finished.push_back(Hypothesis{c.tokens, c.original, c.ranking, true});
    std::sort(finished.begin(), finished.end(), [&](const Hypothesis& a, const Hypothesis& c) {
      return detail::better(norm(a.ranking_score, gen_len(a.tokens)), a.tokens,
                            norm(c.ranking_score, gen_len(c.tokens)), c.tokens);
    });
    finished.erase(std::unique(finished.begin(), finished.end(),
                               [](const Hypothesis& a, const Hypothesis& c) {
                                 return a.tokens == c.tokens;
                               }),
                   finished.end());
    if (finished.size() > b) finished.resize(b);

    alive.clear();
    for (const auto& c : next_alive)
      alive.push_back(Hypothesis{c.tokens, c.original, c.ranking, false});

    if (alive.empty()) break;
    if (finished.size() == b) {
      double best_alive = kNegInf;
      for (const auto& h : alive)
        best_alive = std::max(best_alive, norm(h.ranking_score, gen_len(h.tokens)));
      double worst_finished = norm(finished.back().ranking_score,
                                   gen_len(finished.back().tokens));
      if (best_alive <= worst_finished) break;
    }
  }

  std::sort(finished.begin(), finished.end(), [&](const Hypothesis& a, const Hypothesis& c) {
    return detail::better(norm(a.original_score, gen_len(a.tokens)), a.tokens,
                          norm(c.original_score, gen_len(c.tokens)), c.tokens);
  });
  for (const auto& h : finished) {
    TokenSeq keyword(h.tokens.begin() + 1, h.tokens.end() - 1);  // strip BOS/EOS
    result.outputs.emplace_back(std::move(keyword), h.original_score);
  }
  return result;
}

// Round-robin merge with deduplication: rank 1 of each source, then rank 2,
// and so on; the first occurrence of a keyword wins. Truncated to k.
inline std::vector<TokenSeq> merge_results(const std::vector<std::vector<TokenSeq>>& results,
                                           std::size_t k) {
  std::vector<TokenSeq> merged;
  std::map<TokenSeq, bool> seen;
  std::size_t longest = 0;
  for (const auto& r : results) longest = std::max(longest, r.size());
  for (std::size_t rank = 0; rank < longest && merged.size() < k; ++rank) {
    for (const auto& r : results) {
      if (rank >= r.size()) continue;
      if (seen.emplace(r[rank], true).second) {
        merged.push_back(r[rank]);
        if (merged.size() == k) break;
      }
    }
  }
  return merged;
}

}  // namespace kwext
