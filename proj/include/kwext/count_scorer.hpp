#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "kwext/io.hpp"
#include "kwext/scorer.hpp"
#include "kwext/types.hpp"

namespace kwext {

struct CountScorerConfig {
  int markov_order = 3;
  // Jelinek-Mercer interpolation weights, lowest order first; must sum to 1.
  std::vector<double> interpolation_weights = {0.25, 0.35, 0.40};
  double copy_bonus_beta = 1.0;
  double floor_logprob = std::log(1e-10);
  int future_top_k = 8;

  void validate() const {
    if (markov_order < 1) throw DataError("markov order must be positive");
    if (static_cast<int>(interpolation_weights.size()) != markov_order)
      throw DataError("need one interpolation weight per order");
    double sum = 0.0;
    for (double w : interpolation_weights) {
      if (w < 0.0) throw DataError("interpolation weights must be non-negative");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw DataError("interpolation weights must sum to 1");
    if (future_top_k < 1) throw DataError("future top-k must be positive");
  }
};

// Interpolated count-based n-gram scorer with a copy bonus for tokens that
// appear in the input query. Replaces a trained neural model: its next-token
// conditionals come from relative k-gram frequencies over the training
// keywords, and future distributions g_2..g_n are top-k sum-marginals over
// one-token continuations of the current context.
class CountScorer : public Scorer {
 public:
  static CountScorer train(const std::vector<std::pair<TokenSeq, TokenSeq>>& pairs,
                           const CountScorerConfig& config, std::size_t vocab_size) {
    config.validate();
    if (pairs.empty()) throw DataError("empty training set");
    CountScorer m;
    m.config_ = config;
    m.vocab_size_ = vocab_size;
    m.counts_.resize(config.markov_order);
    for (const auto& [query, keyword] : pairs) {
      (void)query;  // queries only matter at predict time, via the copy bonus
      TokenSeq seq;
      seq.reserve(keyword.size() + 2);
      seq.push_back(kBos);
      seq.insert(seq.end(), keyword.begin(), keyword.end());
      seq.push_back(kEos);
      for (std::size_t i = 1; i < seq.size(); ++i) {
        ++m.total_tokens_;
        for (int k = 1; k <= config.markov_order; ++k) {
          if (static_cast<std::size_t>(k) > i + 1) break;
          TokenSeq gram(seq.begin() + (i + 1 - k), seq.begin() + (i + 1));
          ++m.counts_[k - 1][gram];
        }
      }
    }
    m.build_derived();
    return m;
  }

  int order() const override { return config_.markov_order; }
  std::size_t vocab_size() const override { return vocab_size_; }
  const CountScorerConfig& config() const { return config_; }

  std::uint64_t gram_count(const TokenSeq& gram) const {
    if (gram.empty() || gram.size() > counts_.size()) return 0;
    auto& m = counts_[gram.size() - 1];
    auto it = m.find(gram);
    return it == m.end() ? 0 : it->second;
  }

  NGramPrediction predict(const TokenSeq& query, const TokenSeq& prefix) const override {
    std::vector<std::uint8_t> in_query(vocab_size_, 0);
    for (TokenId id : query)
      if (id < vocab_size_) in_query[id] = 1;

    TokenSeq ctx;
    ctx.push_back(kBos);
    ctx.insert(ctx.end(), prefix.begin(), prefix.end());

    NGramPrediction pred;
    pred.order = config_.markov_order;
    pred.dists.push_back(conditional(ctx, in_query));
    for (int level = 2; level <= config_.markov_order; ++level) {
      const auto& prev = pred.dists.back();
      auto top = top_k_ids(prev, config_.future_top_k);
      std::vector<double> acc(vocab_size_, 0.0);
      TokenSeq ext = ctx;
      ext.push_back(0);
      for (TokenId v : top) {
        ext.back() = v;
        double pv = std::exp(prev[v]);
        auto cond = conditional(ext, in_query);
        for (std::size_t w = 0; w < vocab_size_; ++w) acc[w] += pv * std::exp(cond[w]);
      }
      double total = std::accumulate(acc.begin(), acc.end(), 0.0);
      for (std::size_t w = 0; w < vocab_size_; ++w) acc[w] = std::log(acc[w] / total);
      pred.dists.push_back(std::move(acc));
    }
    return pred;
  }

  // Versioned binary model file; round-trip is bit-exact.
  std::vector<std::uint8_t> serialize() const {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), {'K', 'W', 'C', 'S'});
    io::put_u32(out, kFormatVersion);
    io::put_u32(out, static_cast<std::uint32_t>(config_.markov_order));
    for (double w : config_.interpolation_weights) io::put_f64(out, w);
    io::put_f64(out, config_.copy_bonus_beta);
    io::put_f64(out, config_.floor_logprob);
    io::put_u32(out, static_cast<std::uint32_t>(config_.future_top_k));
    io::put_u32(out, static_cast<std::uint32_t>(vocab_size_));
    io::put_u64(out, total_tokens_);
    for (int k = 1; k <= config_.markov_order; ++k) {
      io::put_u64(out, counts_[k - 1].size());
      for (const auto& [gram, count] : counts_[k - 1]) {
        for (TokenId id : gram) io::put_u32(out, id);
        io::put_u64(out, count);
      }
    }
    return out;
  }

  static CountScorer deserialize(std::span<const std::uint8_t> bytes) {
    io::Reader r(bytes);
    char magic[4];
    r.take(magic, 4);
    if (std::memcmp(magic, "KWCS", 4) != 0) throw DataError("scorer file: bad magic");
    std::uint32_t version = r.u32();
    if (version != kFormatVersion)
      throw DataError("scorer file: unsupported version " + std::to_string(version));
    CountScorer m;
    m.config_.markov_order = static_cast<int>(r.u32());
    if (m.config_.markov_order < 1 || m.config_.markov_order > 16)
      throw DataError("scorer file: implausible markov order");
    m.config_.interpolation_weights.clear();
    for (int k = 0; k < m.config_.markov_order; ++k)
      m.config_.interpolation_weights.push_back(r.f64());
    m.config_.copy_bonus_beta = r.f64();
    m.config_.floor_logprob = r.f64();
    m.config_.future_top_k = static_cast<int>(r.u32());
    m.vocab_size_ = r.u32();
    m.total_tokens_ = r.u64();
    m.counts_.resize(m.config_.markov_order);
    for (int k = 1; k <= m.config_.markov_order; ++k) {
      std::uint64_t n = r.u64();
      for (std::uint64_t i = 0; i < n; ++i) {
        TokenSeq gram(k);
        for (int j = 0; j < k; ++j) gram[j] = r.u32();
        m.counts_[k - 1][gram] = r.u64();
      }
    }
    m.config_.validate();
    m.build_derived();
    return m;
  }

  void save(const std::string& path) const {
    auto bytes = serialize();
    io::write_file(path, bytes);
  }

  static CountScorer load(const std::string& path) {
    auto bytes = io::read_file(path);
    return deserialize(bytes);
  }

 private:
  static constexpr std::uint32_t kFormatVersion = 1;

  struct Continuation {
    std::uint64_t context_count = 0;
    std::vector<std::pair<TokenId, std::uint64_t>> successors;
  };

  void build_derived() {
    unigram_prob_.assign(vocab_size_, 0.0);
    if (!counts_.empty()) {
      for (const auto& [gram, count] : counts_[0])
        if (gram[0] < vocab_size_)
          unigram_prob_[gram[0]] =
              static_cast<double>(count) / static_cast<double>(total_tokens_);
    }
    continuations_.assign(std::max(0, config_.markov_order - 1), {});
    for (int k = 2; k <= config_.markov_order; ++k) {
      for (const auto& [gram, count] : counts_[k - 1]) {
        TokenSeq ctx(gram.begin(), gram.end() - 1);
        auto& c = continuations_[k - 2][ctx];
        c.context_count += count;
        c.successors.emplace_back(gram.back(), count);
      }
    }
  }

  // p(w | last m-1 tokens of ctx), interpolated, floored, copy-boosted,
  // renormalized; returned in log space.
  std::vector<double> conditional(const TokenSeq& ctx,
                                  const std::vector<std::uint8_t>& in_query) const {
    std::vector<double> p(vocab_size_);
    double w1 = config_.interpolation_weights[0];
    for (std::size_t w = 0; w < vocab_size_; ++w) p[w] = w1 * unigram_prob_[w];
    for (int k = 2; k <= config_.markov_order; ++k) {
      std::size_t need = static_cast<std::size_t>(k - 1);
      if (ctx.size() < need) continue;
      TokenSeq sub(ctx.end() - need, ctx.end());
      auto it = continuations_[k - 2].find(sub);
      if (it == continuations_[k - 2].end()) continue;
      double wk = config_.interpolation_weights[k - 1];
      double denom = static_cast<double>(it->second.context_count);
      for (const auto& [tok, count] : it->second.successors)
        if (tok < vocab_size_) p[tok] += wk * static_cast<double>(count) / denom;
    }
    double floor = std::exp(config_.floor_logprob);
    double boost = std::exp(config_.copy_bonus_beta);
    double total = 0.0;
    for (std::size_t w = 0; w < vocab_size_; ++w) {
      p[w] = std::max(p[w], floor);
      if (in_query[w]) p[w] *= boost;
      total += p[w];
    }
    for (std::size_t w = 0; w < vocab_size_; ++w) p[w] = std::log(p[w] / total);
    return p;
  }

  // Indices of the k largest entries, ties broken by ascending id.
  static std::vector<TokenId> top_k_ids(const std::vector<double>& dist, int k) {
    std::vector<TokenId> ids(dist.size());
    std::iota(ids.begin(), ids.end(), 0);
    std::size_t keep = std::min<std::size_t>(k, ids.size());
    std::partial_sort(ids.begin(), ids.begin() + keep, ids.end(), [&](TokenId a, TokenId b) {
      if (dist[a] != dist[b]) return dist[a] > dist[b];
      return a < b;
    });
    ids.resize(keep);
    return ids;
  }

  CountScorerConfig config_;
  std::size_t vocab_size_ = 0;
  std::uint64_t total_tokens_ = 0;
  std::vector<std::map<TokenSeq, std::uint64_t>> counts_;  // counts_[k-1]: k-grams
  std::vector<std::map<TokenSeq, Continuation>> continuations_;
  std::vector<double> unigram_prob_;
};

}  // namespace kwext
