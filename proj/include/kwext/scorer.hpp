#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kwext/types.hpp"
#include "kwext/vocab.hpp"

namespace kwext {

// The scorer's output: `order` log-probability distributions over the
// vocabulary. dists[k] is the model's distribution for output position
// len(prefix)+k+1.
struct NGramPrediction {
  int order = 0;
  std::vector<std::vector<double>> dists;  // each of vocabulary size
};

// Source of next-n token distributions. Implementations must be pure:
// identical (query, prefix) inputs yield identical outputs.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual int order() const = 0;
  virtual std::size_t vocab_size() const = 0;
  virtual NGramPrediction predict(const TokenSeq& query, const TokenSeq& prefix) const = 0;
};

namespace detail {

inline std::vector<double> uniform_logdist(std::size_t vocab_size) {
  return std::vector<double>(vocab_size, -std::log(static_cast<double>(vocab_size)));
}

// Converts linear-space probabilities over a token subset into a full
// log-distribution: remaining ids get a small floor mass, then the whole
// thing is renormalized.
inline std::vector<double> fill_and_log(const std::vector<std::pair<TokenId, double>>& probs,
                                        std::size_t vocab_size, double floor = 1e-10) {
  std::vector<double> dist(vocab_size, floor);
  for (const auto& [tok, p] : probs) dist[tok] = std::max(p, floor);
  double total = 0.0;
  for (double p : dist) total += p;
  for (double& p : dist) p = std::log(p / total);
  return dist;
}

}  // namespace detail

// Deterministic fixture scorer: returns exactly the stored distributions for
// listed (query, prefix) keys and uniform distributions otherwise.
//
// File format: one JSON object per line with fields
//   query (string), prefix (string),
//   dists (array of arrays of [token, probability] pairs, linear space).
class TableScorer : public Scorer {
 public:
  struct Record {
    std::string query;
    std::string prefix;
    std::vector<std::vector<std::pair<std::string, double>>> dists;
  };

  TableScorer(const std::vector<Record>& records, const Vocabulary& vocab)
      : vocab_(vocab), vocab_size_(vocab.size()) {
    for (std::size_t i = 0; i < records.size(); ++i) add_record(records[i], i + 1);
    if (order_ == 0) order_ = 1;
  }

  static TableScorer load(const std::string& path, const Vocabulary& vocab) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read table scorer file: " + path);
    std::vector<Record> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw DataError("table scorer line " + std::to_string(lineno) + ": " + e.what());
      }
      Record rec;
      try {
        rec.query = j.at("query").get<std::string>();
        rec.prefix = j.at("prefix").get<std::string>();
        for (const auto& dist : j.at("dists")) {
          std::vector<std::pair<std::string, double>> entries;
          for (const auto& pair : dist)
            entries.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<double>());
          rec.dists.push_back(std::move(entries));
        }
      } catch (const nlohmann::json::exception& e) {
        throw DataError("table scorer line " + std::to_string(lineno) + ": " + e.what());
      }
      records.push_back(std::move(rec));
    }
    return TableScorer(records, vocab);
  }

  int order() const override { return order_; }
  std::size_t vocab_size() const override { return vocab_size_; }

  NGramPrediction predict(const TokenSeq& query, const TokenSeq& prefix) const override {
    NGramPrediction pred;
    pred.order = order_;
    auto it = table_.find(key(query, prefix));
    for (int k = 0; k < order_; ++k) {
      if (it != table_.end() && k < static_cast<int>(it->second.size()))
        pred.dists.push_back(it->second[k]);
      else
        pred.dists.push_back(detail::uniform_logdist(vocab_size_));
    }
    return pred;
  }

 private:
  void add_record(const Record& rec, std::size_t lineno) {
    std::vector<std::vector<double>> dists;
    for (const auto& entries : rec.dists) {
      std::vector<std::pair<TokenId, double>> probs;
      double total = 0.0;
      for (const auto& [tok, p] : entries) {
        TokenId id = tok == "<eos>" ? kEos : vocab_.id_or_unk(tok);
        probs.emplace_back(id, p);
        total += p;
      }
      if (std::abs(total - 1.0) > 1e-6)
        throw DataError("table scorer line " + std::to_string(lineno) +
                        ": distribution sums to " + std::to_string(total));
      dists.push_back(detail::fill_and_log(probs, vocab_size_));
    }
    order_ = std::max(order_, static_cast<int>(dists.size()));
    table_[key(vocab_.tokenize(rec.query), vocab_.tokenize(rec.prefix))] = std::move(dists);
  }

  static std::string key(const TokenSeq& query, const TokenSeq& prefix) {
    std::string k;
    for (TokenId id : query) k += std::to_string(id) + ",";
    k += "|";
    for (TokenId id : prefix) k += std::to_string(id) + ",";
    return k;
  }

  const Vocabulary& vocab_;
  std::size_t vocab_size_;
  int order_ = 0;
  std::map<std::string, std::vector<std::vector<double>>> table_;
};

}  // namespace kwext
