#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "kwext/trie.hpp"
#include "kwext/types.hpp"
#include "kwext/vocab.hpp"

namespace kwext {

struct QueryRecord {
  std::string query;
  std::set<std::string> golden;
  std::string scenario;  // optional label for per-family breakdowns
};

// TSV: query TAB golden keywords separated by " || ".
inline std::vector<QueryRecord> load_dataset(const std::vector<std::string>& lines) {
  std::vector<QueryRecord> records;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto tab = lines[i].find('\t');
    if (tab == std::string::npos)
      throw DataError("dataset line " + std::to_string(i + 1) + ": missing TAB");
    QueryRecord rec;
    rec.query = lines[i].substr(0, tab);
    std::string rest = lines[i].substr(tab + 1);
    // Extra columns (e.g. a scenario label) may follow the goldens.
    auto tab2 = rest.find('\t');
    if (tab2 != std::string::npos) {
      rec.scenario = rest.substr(tab2 + 1);
      rest = rest.substr(0, tab2);
    }
    std::size_t pos = 0;
    while (pos != std::string::npos) {
      auto sep = rest.find(" || ", pos);
      std::string g = rest.substr(pos, sep == std::string::npos ? sep : sep - pos);
      if (!g.empty()) rec.golden.insert(g);
      pos = sep == std::string::npos ? sep : sep + 4;
    }
    if (rec.golden.empty())
      throw DataError("dataset line " + std::to_string(i + 1) + ": no golden keywords");
    records.push_back(std::move(rec));
  }
  return records;
}

inline double recall_at_k(const std::vector<std::string>& results,
                          const std::set<std::string>& golden, std::size_t k) {
  if (golden.empty()) throw DataError("empty golden set");
  std::set<std::string> seen;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < results.size() && i < k; ++i)
    if (golden.count(results[i]) && seen.insert(results[i]).second) ++hits;
  return static_cast<double>(hits) / static_cast<double>(golden.size());
}

// Truncated average precision: (sum over i<=K of Prec@i * rel_i) / min(|golden|, K).
inline double ap_at_k(const std::vector<std::string>& results,
                      const std::set<std::string>& golden, std::size_t k) {
  if (golden.empty()) throw DataError("empty golden set");
  std::set<std::string> seen;
  double score = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < results.size() && i < k; ++i) {
    if (golden.count(results[i]) && seen.insert(results[i]).second) {
      ++hits;
      score += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return score / static_cast<double>(std::min(golden.size(), k));
}

inline double map_at_k(const std::vector<std::vector<std::string>>& per_query_results,
                       const std::vector<std::set<std::string>>& per_query_golden,
                       std::size_t k) {
  if (per_query_results.size() != per_query_golden.size())
    throw DataError("results/golden size mismatch");
  if (per_query_results.empty()) throw DataError("no queries");
  double total = 0.0;
  for (std::size_t q = 0; q < per_query_results.size(); ++q)
    total += ap_at_k(per_query_results[q], per_query_golden[q], k);
  return total / static_cast<double>(per_query_results.size());
}

struct MetricsReport {
  std::map<std::size_t, double> recall;  // K -> mean recall
  std::map<std::size_t, double> map;     // K -> MAP
  std::size_t query_count = 0;
  // Per-query rows: scenario label, recall@maxK, AP@maxK.
  struct Detail {
    std::string scenario;
    double recall_max_k = 0.0;
    double ap_max_k = 0.0;
  };
  std::vector<Detail> details;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["query_count"] = query_count;
    for (const auto& [k, v] : recall) j["recall"][std::to_string(k)] = v;
    for (const auto& [k, v] : map) j["map"][std::to_string(k)] = v;
    std::map<std::string, std::pair<double, std::size_t>> by_family;
    for (const auto& d : details) {
      auto& [sum, n] = by_family[d.scenario.empty() ? "all" : d.scenario];
      sum += d.recall_max_k;
      ++n;
    }
    for (const auto& [fam, agg] : by_family)
      j["recall_by_scenario"][fam] = agg.first / static_cast<double>(agg.second);
    return j;
  }
};

inline unsigned worker_count() {
  if (const char* env = std::getenv("TRIE_DECODE_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return static_cast<unsigned>(n);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

// Runs `system` on every query (in parallel; aggregation is order-independent)
// and computes recall@K / MAP@K for every requested K. Golden keywords absent
// from the Trie are a fail-fast error.
inline MetricsReport evaluate(
    const std::vector<QueryRecord>& dataset,
    const std::function<std::vector<std::string>(const QueryRecord&)>& system,
    const std::set<std::size_t>& ks, const Trie& trie, const Vocabulary& vocab) {
  if (dataset.empty()) throw DataError("empty dataset");
  if (ks.empty()) throw DataError("no K values requested");

  std::string offenders;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    for (const auto& g : dataset[i].golden)
      if (!trie.contains(vocab.tokenize(g)))
        offenders += "\n  record " + std::to_string(i + 1) + ": " + g;
  if (!offenders.empty()) throw DataError("golden keywords missing from trie:" + offenders);

  std::vector<std::vector<std::string>> results(dataset.size());
  std::atomic<std::size_t> cursor{0};
  unsigned workers = std::min<unsigned>(worker_count(), dataset.size());
  auto run = [&] {
    for (;;) {
      std::size_t i = cursor.fetch_add(1);
      if (i >= dataset.size()) return;
      results[i] = system(dataset[i]);
    }
  };
  if (workers <= 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run);
    for (auto& t : pool) t.join();
  }

  MetricsReport report;
  report.query_count = dataset.size();
  std::size_t max_k = *ks.rbegin();
  for (std::size_t k : ks) {
    double rsum = 0.0, apsum = 0.0;
    for (std::size_t q = 0; q < dataset.size(); ++q) {
      rsum += recall_at_k(results[q], dataset[q].golden, k);
      apsum += ap_at_k(results[q], dataset[q].golden, k);
    }
    report.recall[k] = rsum / static_cast<double>(dataset.size());
    report.map[k] = apsum / static_cast<double>(dataset.size());
  }
  for (std::size_t q = 0; q < dataset.size(); ++q) {
    MetricsReport::Detail d;
    d.scenario = dataset[q].scenario;
    d.recall_max_k = recall_at_k(results[q], dataset[q].golden, max_k);
    d.ap_max_k = ap_at_k(results[q], dataset[q].golden, max_k);
    report.details.push_back(std::move(d));
  }
  return report;
}

// Plain-text table with one row per system, R@K and MAP@K columns.
inline std::string render_table(const std::vector<std::pair<std::string, MetricsReport>>& rows,
                                const std::set<std::size_t>& ks) {
  std::ostringstream out;
  out << "Model";
  for (std::size_t k : ks) out << "\tR@" << k;
  for (std::size_t k : ks) out << "\tMAP@" << k;
  out << "\n";
  out.setf(std::ios::fixed);
  for (const auto& [name, report] : rows) {
    out << name;
    out.precision(2);
    for (std::size_t k : ks) out << '\t' << 100.0 * report.recall.at(k);
    out.precision(4);
    for (std::size_t k : ks) out << '\t' << report.map.at(k);
    out << "\n";
  }
  return out.str();
}

}  // namespace kwext
