#pragma once

#include <algorithm>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kwext/eval.hpp"
#include "kwext/types.hpp"

namespace kwext {

// Parameters for the synthetic adversarial benchmark. Three scenario
// families, each one query per instance:
//   noise  - the golden keyword contains one token with zero training-pair
//            frequency, bridged only by its well-trained future tokens.
//   trap   - many trained keywords share a prefix whose subtree lacks the
//            golden suffix; a rarer prefix has it.
//   fork   - two comparable branches under the same head; only the less
//            trained one leads to the golden keyword.
struct SynthSpec {
  std::size_t noise_queries = 100;
  std::size_t trap_queries = 200;
  std::size_t fork_queries = 200;

  std::size_t noise_branch_count = 30;  // trained siblings beside the noise token
  std::size_t trap_branch_count = 50;   // completions under the common prefix
  std::size_t fork_branch_count = 30;   // trained siblings beside the golden branch

  std::size_t trap_keyword_len = 5;   // tokens per trained distractor keyword
  std::size_t trap_reps = 1;          // training reps per common-prefix completion
  std::size_t fork_trap_reps = 2;     // training reps per fork distractor
  std::size_t rare_prefix_reps = 5;   // trained fillers under the rarer prefix

  std::size_t tail_pool = 20;         // shared well-trained tail tokens
  std::size_t branch_pool = 64;       // shared distractor branch tokens
  std::size_t rare_pool = 400;        // shared rare continuation tokens
  std::size_t generic_keywords = 40;  // tail-only keywords giving tails mass
  std::size_t generic_reps = 3;

  static SynthSpec from_json(const nlohmann::json& j) {
    SynthSpec s;
    auto get = [&](const char* key, std::size_t& field) {
      if (j.contains(key)) field = j.at(key).get<std::size_t>();
    };
    get("noise_queries", s.noise_queries);
    get("trap_queries", s.trap_queries);
    get("fork_queries", s.fork_queries);
    get("noise_branch_count", s.noise_branch_count);
    get("trap_branch_count", s.trap_branch_count);
    get("fork_branch_count", s.fork_branch_count);
    get("trap_keyword_len", s.trap_keyword_len);
    get("trap_reps", s.trap_reps);
    get("fork_trap_reps", s.fork_trap_reps);
    get("rare_prefix_reps", s.rare_prefix_reps);
    get("tail_pool", s.tail_pool);
    get("branch_pool", s.branch_pool);
    get("rare_pool", s.rare_pool);
    get("generic_keywords", s.generic_keywords);
    get("generic_reps", s.generic_reps);
    s.validate();
    return s;
  }

  void validate() const {
    if (noise_queries + trap_queries + fork_queries == 0)
      throw DataError("synth spec requests zero queries");
    if (tail_pool < 4 || branch_pool == 0 || rare_pool == 0)
      throw DataError("synth spec pools too small");
    if (trap_keyword_len < 3) throw DataError("trap keyword length must be at least 3");
  }
};

struct SynthData {
  std::vector<std::string> library;                        // one keyword per line
  std::vector<std::pair<std::string, std::string>> pairs;  // (query, keyword)
  std::vector<QueryRecord> tests;                          // scenario labels set
};

namespace detail {

inline std::string join(const std::vector<std::string>& tokens) {
  std::string s;
  for (const auto& t : tokens) {
    if (!s.empty()) s += ' ';
    s += t;
  }
  return s;
}

}  // namespace detail

// Deterministic by seed: the same (seed, spec) yields byte-identical outputs.
inline SynthData synth_generate(std::uint64_t seed, const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(seed);

  std::vector<std::string> tails, branches, rares, noises, golden_branches;
  for (std::size_t i = 0; i < spec.tail_pool; ++i) tails.push_back("tail" + std::to_string(i));
  for (std::size_t i = 0; i < spec.branch_pool; ++i)
    branches.push_back("br" + std::to_string(i));
  for (std::size_t i = 0; i < spec.rare_pool; ++i) rares.push_back("rr" + std::to_string(i));
  for (std::size_t i = 0; i < 64; ++i) noises.push_back("nz" + std::to_string(i));
  for (std::size_t i = 0; i < 16; ++i) golden_branches.push_back("gb" + std::to_string(i));

  auto pick = [&rng](const std::vector<std::string>& pool) -> const std::string& {
    std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
    return pool[d(rng)];
  };
  auto pick_distinct = [&](const std::vector<std::string>& pool, std::size_t n) {
    std::set<std::string> chosen;
    while (chosen.size() < n) chosen.insert(pick(pool));
    return std::vector<std::string>(chosen.begin(), chosen.end());
  };

  SynthData data;
  std::set<std::string> library_set;
  auto add_keyword = [&](const std::vector<std::string>& toks) {
    std::string k = detail::join(toks);
    if (library_set.insert(k).second) data.library.push_back(k);
    return k;
  };
  auto add_trained = [&](const std::vector<std::string>& toks, std::size_t reps) {
    std::string k = add_keyword(toks);
    std::string q = toks.size() >= 2 ? toks[0] + " " + toks[1] : toks[0];
    for (std::size_t r = 0; r < reps; ++r) data.pairs.emplace_back(q, k);
    return k;
  };
  auto rare_tail = [&](std::vector<std::string>& kw, std::size_t target_len) {
    while (kw.size() < target_len) kw.push_back(pick(rares));
  };

  // Generic tail-only keywords: give tail tokens unigram mass, tail->tail
  // bigrams, and tail->EOS bigrams.
  for (std::size_t g = 0; g < spec.generic_keywords; ++g) {
    auto ts = pick_distinct(tails, 2);
    add_trained({"gen" + std::to_string(g), ts[0], ts[1]}, spec.generic_reps);
  }

  // Family 1: noise token on the golden path.
  for (std::size_t i = 0; i < spec.noise_queries; ++i) {
    std::string head = "nh" + std::to_string(i);
    for (std::size_t j = 0; j < spec.noise_branch_count; ++j) {
      std::vector<std::string> kw{head, branches[j]};
      rare_tail(kw, spec.trap_keyword_len);
      add_trained(kw, 1);
    }
    auto cs = pick_distinct(tails, 2);
    std::string golden = add_keyword({head, pick(noises), cs[0], cs[1]});
    QueryRecord rec;
    rec.query = head + " " + cs[0] + " " + cs[1];
    rec.golden = {golden};
    rec.scenario = "noise";
    data.tests.push_back(std::move(rec));
  }

  // Family 2: common-prefix trap with a rarer prefix holding the golden.
  for (std::size_t i = 0; i < spec.trap_queries; ++i) {
    std::string head = "th" + std::to_string(i);
    std::string common = "cp" + std::to_string(i);
    std::string rarer = "rp" + std::to_string(i);
    for (std::size_t j = 0; j < spec.trap_branch_count; ++j) {
      std::vector<std::string> kw{head, common, branches[j % branches.size()]};
      rare_tail(kw, spec.trap_keyword_len);
      add_trained(kw, spec.trap_reps);
    }
    for (std::size_t j = 0; j < spec.rare_prefix_reps; ++j) {
      std::vector<std::string> kw{head, rarer, golden_branches[j % golden_branches.size()]};
      rare_tail(kw, spec.trap_keyword_len);
      add_trained(kw, 1);
    }
    auto cs = pick_distinct(tails, 3);
    std::string golden = add_trained({head, rarer, cs[0], cs[1], cs[2]}, 1);
    QueryRecord rec;
    rec.query = head + " " + cs[1] + " " + cs[2];
    rec.golden = {golden};
    rec.scenario = "trap";
    data.tests.push_back(std::move(rec));
  }

  // Family 3: ambiguous fork, the lightly trained branch holds the golden.
  for (std::size_t i = 0; i < spec.fork_queries; ++i) {
    std::string head = "fh" + std::to_string(i);
    for (std::size_t j = 0; j < spec.fork_branch_count; ++j) {
      std::vector<std::string> kw{head, branches[j % branches.size()]};
      rare_tail(kw, spec.trap_keyword_len);
      add_trained(kw, spec.fork_trap_reps);
    }
    auto cs = pick_distinct(tails, 2);
    std::string golden = add_trained({head, pick(golden_branches), cs[0], cs[1]}, 1);
    QueryRecord rec;
    rec.query = head + " " + cs[0] + " " + cs[1];
    rec.golden = {golden};
    rec.scenario = "fork";
    data.tests.push_back(std::move(rec));
  }

  return data;
}

}  // namespace kwext
