#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "kwext/types.hpp"

namespace kwext {

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
  double epsilon = 0.25;  // idf floor, relative to the average idf
};

// Okapi BM25 over the keyword library, one keyword per document.
class Bm25Index {
 public:
  struct Hit {
    std::string keyword;
    double score;
  };

  Bm25Index(const std::vector<std::pair<std::string, TokenSeq>>& keywords,
            const Bm25Params& params = {})
      : params_(params) {
    if (keywords.empty()) throw DataError("empty keyword library");
    docs_.reserve(keywords.size());
    double total_len = 0.0;
    std::unordered_map<TokenId, std::size_t> df;
    for (const auto& [text, ids] : keywords) {
      Doc d;
      d.text = text;
      d.length = ids.size();
      for (TokenId t : ids) ++d.tf[t];
      for (const auto& [t, n] : d.tf) {
        (void)n;
        ++df[t];
      }
      total_len += static_cast<double>(d.length);
      docs_.push_back(std::move(d));
    }
    avg_doc_length_ = total_len / static_cast<double>(docs_.size());

    const double n_docs = static_cast<double>(docs_.size());
    double idf_sum = 0.0;
    for (const auto& [t, d] : df) {
      double idf = std::log((n_docs - static_cast<double>(d) + 0.5) /
                                (static_cast<double>(d) + 0.5) +
                            1.0);
      idf_.emplace(t, idf);
      idf_sum += idf;
    }
    double avg_idf = idf_sum / static_cast<double>(idf_.size());
    double floor = params_.epsilon * avg_idf;
    for (auto& [t, idf] : idf_) idf = std::max(idf, floor);
  }

  double avg_doc_length() const { return avg_doc_length_; }
  std::size_t doc_count() const { return docs_.size(); }
  double idf(TokenId t) const {
    auto it = idf_.find(t);
    return it == idf_.end() ? 0.0 : it->second;
  }

  double score(const TokenSeq& query, std::size_t doc) const {
    const Doc& d = docs_[doc];
    double len_norm = params_.k1 * (1.0 - params_.b +
                                    params_.b * static_cast<double>(d.length) / avg_doc_length_);
    double s = 0.0;
    for (TokenId t : query) {
      auto it = d.tf.find(t);
      if (it == d.tf.end()) continue;
      double tf = static_cast<double>(it->second);
      s += idf(t) * tf * (params_.k1 + 1.0) / (tf + len_norm);
    }
    return s;
  }

  // Top-k by score descending, ties by keyword text ascending. Documents
  // sharing no query term are omitted.
  std::vector<Hit> query(const TokenSeq& query_ids, std::size_t k) const {
    std::vector<Hit> hits;
    for (std::size_t i = 0; i < docs_.size(); ++i) {
      double s = score(query_ids, i);
      if (s > 0.0) hits.push_back(Hit{docs_[i].text, s});
    }
    std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.keyword < b.keyword;
    });
    if (hits.size() > k) hits.resize(k);
    return hits;
  }

 private:
  struct Doc {
    std::string text;
    std::size_t length = 0;
    std::map<TokenId, std::size_t> tf;
  };

  Bm25Params params_;
  std::vector<Doc> docs_;
  double avg_doc_length_ = 0.0;
  std::unordered_map<TokenId, double> idf_;
};

}  // namespace kwext
