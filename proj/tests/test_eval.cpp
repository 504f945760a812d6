#include <cstdlib>
#include <map>
#include <random>
#include <set>

#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "kwext/eval.hpp"
#include "kwext/synth.hpp"
#include "kwext/vocab.hpp"

using kwext::ap_at_k;
using kwext::load_dataset;
using kwext::map_at_k;
using kwext::QueryRecord;
using kwext::recall_at_k;
using kwext::SynthSpec;

TEST_CASE("recall examples") {
  CHECK(recall_at_k({"B", "A", "C"}, {"A"}, 5) == 1.0);
  CHECK(recall_at_k({"B", "C"}, {"A"}, 5) == 0.0);
  CHECK(recall_at_k({"A", "B"}, {"A", "Z"}, 2) == 0.5);
  CHECK(recall_at_k({"B", "A"}, {"A"}, 1) == 0.0);  // K cuts before the hit
  CHECK_THROWS_WITH(recall_at_k({"A"}, {}, 5), "empty golden set");
}

TEST_CASE("average precision examples") {
  CHECK(ap_at_k({"A"}, {"A"}, 5) == 1.0);
  CHECK(ap_at_k({"B", "A"}, {"A"}, 5) == 0.5);  // one golden at rank 2
  CHECK(map_at_k({{"A"}, {"B"}}, {{"A"}, {"A"}}, 5) == 0.5);
  // Two goldens found at ranks 1 and 3, K=5: (1/1 + 2/3) / 2.
  CHECK(ap_at_k({"A", "X", "B"}, {"A", "B"}, 5) ==
        Catch::Approx((1.0 + 2.0 / 3.0) / 2.0));
  // Denominator is min(|golden|, K): 3 goldens but K=2.
  CHECK(ap_at_k({"A", "B"}, {"A", "B", "C"}, 2) == Catch::Approx((1.0 + 1.0) / 2.0));
}

TEST_CASE("metrics ignore results beyond rank K and duplicates") {
  std::vector<std::string> results{"A", "A", "B"};
  CHECK(recall_at_k(results, {"A", "B"}, 2) == 0.5);  // duplicate A counts once
  CHECK(ap_at_k(results, {"A"}, 1) == ap_at_k({"A", "Z", "Q"}, {"A"}, 1));
}

TEST_CASE("property: recall is non-decreasing in K and matches brute force") {
  std::mt19937_64 rng(3);
  for (int round = 0; round < 200; ++round) {
    std::vector<std::string> results;
    std::set<std::string> golden;
    std::size_t n = 1 + rng() % 10;
    for (std::size_t i = 0; i < n; ++i) results.push_back("k" + std::to_string(rng() % 12));
    std::size_t g = 1 + rng() % 4;
    for (std::size_t i = 0; i < g; ++i) golden.insert("k" + std::to_string(rng() % 12));

    double prev = 0.0;
    for (std::size_t k = 1; k <= 12; ++k) {
      // Brute force straight from the definition.
      std::set<std::string> topk(results.begin(),
                                 results.begin() + std::min(results.size(), k));
      std::size_t inter = 0;
      for (const auto& s : topk)
        if (golden.count(s)) ++inter;
      double expect = static_cast<double>(inter) / static_cast<double>(golden.size());
      double got = recall_at_k(results, golden, k);
      REQUIRE(got == expect);
      CHECK(got >= prev);
      prev = got;
    }
  }
}

TEST_CASE("dataset parsing") {
  auto recs = load_dataset({"q one\tkw a || kw b", "", "q two\tkw c\tfork"});
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].query == "q one");
  CHECK(recs[0].golden == std::set<std::string>{"kw a", "kw b"});
  CHECK(recs[1].scenario == "fork");
  CHECK_THROWS_WITH(load_dataset({"no tab here"}),
                    Catch::Matchers::ContainsSubstring("line 1"));
  CHECK_THROWS_WITH(load_dataset({"q\t"}),
                    Catch::Matchers::ContainsSubstring("no golden keywords"));
}

TEST_CASE("evaluate: perfect and empty systems, fail-fast on missing goldens") {
  auto vocab = kwext::Vocabulary(
      std::vector<std::string>{"<bos>", "<eos>", "<unk>", "alpha", "beta", "gamma"});
  kwext::Trie trie(vocab.size());
  trie.insert(vocab.tokenize("alpha beta"));
  trie.insert(vocab.tokenize("gamma"));

  std::vector<QueryRecord> ds{{"q1", {"alpha beta"}, ""}, {"q2", {"gamma"}, ""}};
  auto perfect = [](const QueryRecord& r) {
    return std::vector<std::string>(r.golden.begin(), r.golden.end());
  };
  auto report = kwext::evaluate(ds, perfect, {1, 5}, trie, vocab);
  CHECK(report.recall.at(1) == 1.0);
  CHECK(report.map.at(5) == 1.0);
  CHECK(report.query_count == 2);

  auto nothing = [](const QueryRecord&) { return std::vector<std::string>{}; };
  auto empty_report = kwext::evaluate(ds, nothing, {5}, trie, vocab);
  CHECK(empty_report.recall.at(5) == 0.0);
  CHECK(empty_report.map.at(5) == 0.0);

  std::vector<QueryRecord> bad{{"q1", {"alpha gamma"}, ""}};
  CHECK_THROWS_WITH(kwext::evaluate(bad, perfect, {5}, trie, vocab),
                    Catch::Matchers::ContainsSubstring("golden keywords missing from trie"));
}

TEST_CASE("evaluate: parallel and serial runs agree") {
  auto vocab = kwtest::numbered_vocab(10);
  kwext::Trie trie(10);
  std::vector<QueryRecord> ds;
  for (kwext::TokenId t = 3; t < 10; ++t) {
    trie.insert(kwext::TokenSeq{t});
    ds.push_back({"w" + std::to_string(t), {"w" + std::to_string(t)}, ""});
  }
  auto sys = [&](const QueryRecord& r) {
    return r.query == "w5" ? std::vector<std::string>{"w9", "w5"}
                           : std::vector<std::string>{r.query};
  };
  setenv("TRIE_DECODE_THREADS", "1", 1);
  auto serial = kwext::evaluate(ds, sys, {1, 2}, trie, vocab);
  setenv("TRIE_DECODE_THREADS", "4", 1);
  auto parallel = kwext::evaluate(ds, sys, {1, 2}, trie, vocab);
  unsetenv("TRIE_DECODE_THREADS");
  CHECK(serial.recall == parallel.recall);
  CHECK(serial.map == parallel.map);
  CHECK(serial.recall.at(1) < serial.recall.at(2));
}

TEST_CASE("merged lists never lower recall once K covers both lists") {
  // Union argument checked by brute force on a small fixture.
  std::vector<std::string> a{"x", "y"};
  std::vector<std::string> b{"z", "y"};
  std::set<std::string> golden{"y", "z"};
  auto merged_ranked = std::vector<std::string>{"x", "z", "y"};  // round robin
  std::size_t k = a.size() + b.size();
  CHECK(recall_at_k(merged_ranked, golden, k) >= recall_at_k(a, golden, k));
  CHECK(recall_at_k(merged_ranked, golden, k) >= recall_at_k(b, golden, k));
}

TEST_CASE("report rendering and json shape") {
  kwext::MetricsReport r;
  r.recall[5] = 0.5;
  r.map[5] = 0.25;
  r.query_count = 4;
  r.details.push_back({"fork", 1.0, 1.0});
  r.details.push_back({"trap", 0.0, 0.0});
  auto table = kwext::render_table({{"plain", r}}, {5});
  CHECK(table.find("Model\tR@5\tMAP@5") == 0);
  CHECK(table.find("plain\t50.00\t0.2500") != std::string::npos);
  auto j = r.to_json();
  CHECK(j["recall"]["5"] == 0.5);
  CHECK(j["recall_by_scenario"]["fork"] == 1.0);
}

TEST_CASE("synth generator: determinism by seed") {
  SynthSpec spec;
  spec.noise_queries = 5;
  spec.trap_queries = 5;
  spec.fork_queries = 5;
  auto a = kwext::synth_generate(7, spec);
  auto b = kwext::synth_generate(7, spec);
  CHECK(a.library == b.library);
  CHECK(a.pairs == b.pairs);
  REQUIRE(a.tests.size() == b.tests.size());
  for (std::size_t i = 0; i < a.tests.size(); ++i) {
    CHECK(a.tests[i].query == b.tests[i].query);
    CHECK(a.tests[i].golden == b.tests[i].golden);
  }
  auto c = kwext::synth_generate(8, spec);
  CHECK(a.library != c.library);
}

TEST_CASE("synth generator: trap family structure") {
  SynthSpec spec;
  spec.noise_queries = 0;
  spec.fork_queries = 0;
  spec.trap_queries = 3;
  spec.trap_branch_count = 50;
  auto data = kwext::synth_generate(11, spec);
  REQUIRE(data.tests.size() == 3);
  for (const auto& rec : data.tests) {
    CHECK(rec.scenario == "trap");
    std::string head = rec.query.substr(0, rec.query.find(' '));
    std::string common_prefix = head + " cp";
    std::string golden = *rec.golden.begin();
    std::size_t siblings = 0;
    for (const auto& kw : data.library) {
      if (kw.rfind(common_prefix, 0) == 0) {
        ++siblings;
        CHECK(kw != golden);  // the common prefix owns no golden completion
      }
    }
    CHECK(siblings == 50);
    CHECK(golden.rfind(head + " rp", 0) == 0);  // golden sits under the rarer prefix
  }
}

TEST_CASE("synth generator: noise family plants exactly one untrained token") {
  SynthSpec spec;
  spec.trap_queries = 0;
  spec.fork_queries = 0;
  spec.noise_queries = 10;
  spec.generic_keywords = 200;  // enough to give every tail token training mass
  auto data = kwext::synth_generate(13, spec);
  std::map<std::string, std::size_t> freq;
  for (const auto& [q, kw] : data.pairs) {
    (void)q;
    for (const auto& tok : kwext::split_ws(kw)) ++freq[tok];
  }
  REQUIRE(data.tests.size() == 10);
  for (const auto& rec : data.tests) {
    std::size_t zero_freq = 0;
    for (const auto& tok : kwext::split_ws(*rec.golden.begin()))
      if (!freq.count(tok)) ++zero_freq;
    CHECK(zero_freq == 1);
  }
}

TEST_CASE("synth generator: goldens are always in the library") {
  SynthSpec spec;
  spec.noise_queries = 4;
  spec.trap_queries = 4;
  spec.fork_queries = 4;
  auto data = kwext::synth_generate(21, spec);
  std::set<std::string> lib(data.library.begin(), data.library.end());
  for (const auto& rec : data.tests)
    for (const auto& g : rec.golden) CHECK(lib.count(g) == 1);
}

TEST_CASE("synth spec validation") {
  SynthSpec zero;
  zero.noise_queries = zero.trap_queries = zero.fork_queries = 0;
  CHECK_THROWS_WITH(zero.validate(), "synth spec requests zero queries");
  CHECK_NOTHROW(SynthSpec::from_json(nlohmann::json{{"trap_queries", 1}}));
  CHECK_THROWS_AS(SynthSpec::from_json(nlohmann::json{{"tail_pool", 1}}), kwext::DataError);
}
