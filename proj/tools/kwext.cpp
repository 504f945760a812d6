// kwext: trie-constrained keyword extension engine.
//
// Subcommands: build-vocab, build-trie, train-scorer, extend, eval, synth.
// Exit codes: 0 success, 2 usage/config error, 3 data-validation error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kwext/bm25.hpp"
#include "kwext/count_scorer.hpp"
#include "kwext/decoder.hpp"
#include "kwext/eval.hpp"
#include "kwext/io.hpp"
#include "kwext/synth.hpp"
#include "kwext/trie.hpp"
#include "kwext/vocab.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

// Signals a dataset whose goldens cannot be retrieved at all (exit code 3).
class ValidationError : public kwext::DataError {
 public:
  using kwext::DataError::DataError;
};

json make_manifest(const std::string& command, const json& config,
                   const std::vector<std::string>& input_paths, std::uint64_t seed) {
  json m;
  m["command"] = command;
  m["config"] = config;
  m["seed"] = seed;
  m["tool_version"] = kToolVersion;
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  m["timestamp"] = static_cast<std::int64_t>(now);
  for (const auto& p : input_paths) m["inputs"][p] = kwext::io::file_digest(p);
  return m;
}

void write_manifest(const std::string& out_path, const json& manifest) {
  std::ofstream out(out_path + ".manifest.json");
  out << manifest.dump(2) << "\n";
}

std::vector<std::string> nonblank_lines(const std::string& path) {
  std::vector<std::string> lines;
  for (auto& l : kwext::io::read_lines(path))
    if (!l.empty()) lines.push_back(std::move(l));
  return lines;
}

int cmd_build_vocab(const std::string& corpus, std::size_t max_size, const std::string& out) {
  auto lines = nonblank_lines(corpus);
  auto vocab = kwext::Vocabulary::build(lines, max_size);
  vocab.save(out);
  write_manifest(out, make_manifest("build-vocab", {{"max_size", max_size}}, {corpus}, 0));
  std::cout << "tokens: " << vocab.size() << "\n";
  return 0;
}

int cmd_build_trie(const std::string& keywords, const std::string& vocab_path,
                   const std::string& out) {
  auto vocab = kwext::Vocabulary::load(vocab_path);
  std::vector<kwext::TokenSeq> ids;
  for (const auto& line : nonblank_lines(keywords)) ids.push_back(vocab.tokenize(line));
  auto trie = kwext::Trie::build(ids, static_cast<std::uint32_t>(vocab.size()));
  trie.save(out);
  write_manifest(out, make_manifest("build-trie", json::object(), {keywords, vocab_path}, 0));
  std::cout << "keywords: " << trie.keyword_count() << "\n";
  return 0;
}

int cmd_train_scorer(const std::string& pairs_path, const std::string& vocab_path, int order,
                     double beta, const std::vector<double>& weights, double floor_prob,
                     int top_k, const std::string& out) {
  auto vocab = kwext::Vocabulary::load(vocab_path);
  std::vector<std::pair<kwext::TokenSeq, kwext::TokenSeq>> pairs;
  auto lines = nonblank_lines(pairs_path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto tab = lines[i].find('\t');
    if (tab == std::string::npos)
      throw kwext::DataError("pairs line " + std::to_string(i + 1) + ": missing TAB");
    pairs.emplace_back(vocab.tokenize(lines[i].substr(0, tab)),
                       vocab.tokenize(lines[i].substr(tab + 1)));
  }
  kwext::CountScorerConfig config;
  config.markov_order = order;
  config.copy_bonus_beta = beta;
  config.floor_logprob = std::log(floor_prob);
  config.future_top_k = top_k;
  if (!weights.empty()) {
    config.interpolation_weights = weights;
  } else {
    // Default: put more weight on higher orders.
    config.interpolation_weights.assign(order, 0.0);
    double rest = 1.0;
    for (int k = 0; k < order - 1; ++k) {
      config.interpolation_weights[k] = rest / 3.0;
      rest -= rest / 3.0;
    }
    config.interpolation_weights[order - 1] = rest;
  }
  auto model = kwext::CountScorer::train(pairs, config, vocab.size());
  model.save(out);
  json cfg{{"order", order},
           {"beta", beta},
           {"floor", floor_prob},
           {"top_k", top_k},
           {"weights", config.interpolation_weights}};
  write_manifest(out, make_manifest("train-scorer", cfg, {pairs_path, vocab_path}, 0));
  std::cout << "trained on " << pairs.size() << " pairs\n";
  return 0;
}

int cmd_extend(const std::string& trie_path, const std::string& vocab_path,
               const std::string& scorer_path, const std::string& query_text, int beam,
               int ngram, double lambda, int max_len, bool plain) {
  auto vocab = kwext::Vocabulary::load(vocab_path);
  auto trie = kwext::Trie::load(trie_path);
  auto scorer = kwext::CountScorer::load(scorer_path);
  kwext::BeamConfig config;
  config.beam_size = beam;
  config.ngram_order = plain ? 1 : ngram;
  config.residual_weight = plain ? 1.0 : lambda;
  config.max_length = max_len;
  config.validate();
  auto result = kwext::beam_search(vocab.tokenize(query_text), trie, scorer, config);
  std::printf("%s\n", ("# query: " + query_text).c_str());
  for (const auto& [ids, score] : result.outputs)
    std::printf("%.6f\t%s\n", score, vocab.detokenize(ids).c_str());
  return 0;
}

struct EvalOptions {
  std::string trie_path, vocab_path, scorer_path, dataset_path, out_path;
  std::vector<std::size_t> beams{5, 10, 15, 20};
  std::vector<double> lambdas{0.8};
  std::vector<int> ngrams{1};
  bool with_bm25 = false;
  bool with_merge = false;
};

int cmd_eval(const EvalOptions& opt) {
  auto vocab = kwext::Vocabulary::load(opt.vocab_path);
  auto trie = kwext::Trie::load(opt.trie_path);
  auto scorer = kwext::CountScorer::load(opt.scorer_path);
  auto dataset = kwext::load_dataset(kwext::io::read_lines(opt.dataset_path));
  if (dataset.empty()) throw kwext::DataError("empty dataset");

  std::set<std::size_t> ks(opt.beams.begin(), opt.beams.end());
  std::size_t max_k = *ks.rbegin();

  // Fail fast if any golden keyword cannot be retrieved at all.
  std::string offenders;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    for (const auto& g : dataset[i].golden)
      if (!trie.contains(vocab.tokenize(g)))
        offenders += "\n  record " + std::to_string(i + 1) + ": " + g;
  if (!offenders.empty())
    throw ValidationError("golden keywords missing from trie:" + offenders);

  auto decode_system = [&](int n, double lambda) {
    return [&, n, lambda](const kwext::QueryRecord& rec) {
      kwext::BeamConfig config;
      config.beam_size = static_cast<int>(max_k);
      config.ngram_order = n;
      config.residual_weight = lambda;
      auto result = kwext::beam_search(vocab.tokenize(rec.query), trie, scorer, config);
      std::vector<std::string> out;
      for (const auto& [ids, score] : result.outputs) {
        (void)score;
        out.push_back(vocab.detokenize(ids));
      }
      return out;
    };
  };

  // Cache per-(n, lambda) ranked lists so merged rows reuse them.
  std::map<std::pair<int, double>, std::vector<std::vector<std::string>>> lists;
  auto ranked_lists = [&](int n, double lambda) -> const std::vector<std::vector<std::string>>& {
    auto key = std::make_pair(n, lambda);
    auto it = lists.find(key);
    if (it != lists.end()) return it->second;
    auto system = decode_system(n, lambda);
    std::vector<std::vector<std::string>> out(dataset.size());
    std::atomic<std::size_t> cursor{0};
    unsigned workers = std::min<unsigned>(kwext::worker_count(), dataset.size());
    auto run = [&] {
      for (;;) {
        std::size_t i = cursor.fetch_add(1);
        if (i >= dataset.size()) return;
        out[i] = system(dataset[i]);
      }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 0; w + 1 < workers; ++w) pool.emplace_back(run);
    run();
    for (auto& t : pool) t.join();
    return lists.emplace(key, std::move(out)).first->second;
  };

  auto metrics_for = [&](const std::vector<std::vector<std::string>>& ranked) {
    kwext::MetricsReport report;
    report.query_count = dataset.size();
    for (std::size_t k : ks) {
      double rsum = 0.0, apsum = 0.0;
      for (std::size_t q = 0; q < dataset.size(); ++q) {
        rsum += kwext::recall_at_k(ranked[q], dataset[q].golden, k);
        apsum += kwext::ap_at_k(ranked[q], dataset[q].golden, k);
      }
      report.recall[k] = rsum / static_cast<double>(dataset.size());
      report.map[k] = apsum / static_cast<double>(dataset.size());
    }
    for (std::size_t q = 0; q < dataset.size(); ++q) {
      kwext::MetricsReport::Detail d;
      d.scenario = dataset[q].scenario;
      d.recall_max_k = kwext::recall_at_k(ranked[q], dataset[q].golden, max_k);
      d.ap_max_k = kwext::ap_at_k(ranked[q], dataset[q].golden, max_k);
      report.details.push_back(std::move(d));
    }
    return report;
  };

  std::vector<std::pair<std::string, kwext::MetricsReport>> rows;
  char name[64];
  for (int n : opt.ngrams) {
    for (double lambda : opt.lambdas) {
      std::snprintf(name, sizeof name, "n=%d lambda=%.2f", n, lambda);
      rows.emplace_back(name, metrics_for(ranked_lists(n, lambda)));
      if (opt.with_merge && lambda < 1.0) {
        const auto& a = ranked_lists(n, lambda);
        const auto& b = ranked_lists(n, 1.0);
        std::vector<std::vector<std::string>> merged(dataset.size());
        for (std::size_t q = 0; q < dataset.size(); ++q) {
          std::vector<kwext::TokenSeq> ra, rb;
          for (const auto& s : a[q]) ra.push_back(vocab.tokenize(s));
          for (const auto& s : b[q]) rb.push_back(vocab.tokenize(s));
          for (const auto& ids : kwext::merge_results({ra, rb}, 2 * max_k))
            merged[q].push_back(vocab.detokenize(ids));
        }
        std::snprintf(name, sizeof name, "merged n=%d lambda=%.2f+plain", n, lambda);
        rows.emplace_back(name, metrics_for(merged));
      }
    }
  }
  if (opt.with_bm25) {
    std::vector<std::pair<std::string, kwext::TokenSeq>> docs;
    for (const auto& ids : trie.enumerate()) docs.emplace_back(vocab.detokenize(ids), ids);
    kwext::Bm25Index index(docs);
    std::vector<std::vector<std::string>> ranked(dataset.size());
    for (std::size_t q = 0; q < dataset.size(); ++q)
      for (const auto& hit : index.query(vocab.tokenize(dataset[q].query), max_k))
        ranked[q].push_back(hit.keyword);
    rows.emplace_back("bm25", metrics_for(ranked));
  }

  std::cout << kwext::render_table(rows, ks);
  if (!opt.out_path.empty()) {
    json report;
    report["ks"] = std::vector<std::size_t>(ks.begin(), ks.end());
    for (const auto& [rowname, metrics] : rows) report["rows"][rowname] = metrics.to_json();
    std::ofstream out(opt.out_path);
    out << report.dump(2) << "\n";
    json cfg{{"beams", opt.beams}, {"lambdas", opt.lambdas},   {"ngrams", opt.ngrams},
             {"bm25", opt.with_bm25}, {"merge", opt.with_merge}};
    write_manifest(opt.out_path,
                   make_manifest("eval", cfg,
                                 {opt.trie_path, opt.vocab_path, opt.scorer_path,
                                  opt.dataset_path},
                                 0));
  }
  return 0;
}

int cmd_synth(std::uint64_t seed, const std::string& spec_path, const std::string& out_dir) {
  json spec_json;
  {
    std::ifstream in(spec_path);
    if (!in) throw kwext::DataError("cannot read spec file: " + spec_path);
    try {
      in >> spec_json;
    } catch (const json::exception& e) {
      throw kwext::DataError(std::string("malformed spec: ") + e.what());
    }
  }
  kwext::SynthSpec spec;
  try {
    spec = kwext::SynthSpec::from_json(spec_json);
  } catch (const json::exception& e) {
    throw kwext::DataError(std::string("malformed spec: ") + e.what());
  }
  auto data = kwext::synth_generate(seed, spec);
  fs::create_directories(out_dir);
  {
    std::ofstream out(out_dir + "/keywords.txt", std::ios::binary);
    for (const auto& k : data.library) out << k << "\n";
  }
  {
    std::ofstream out(out_dir + "/pairs.tsv", std::ios::binary);
    for (const auto& [q, k] : data.pairs) out << q << "\t" << k << "\n";
  }
  {
    std::ofstream out(out_dir + "/test.tsv", std::ios::binary);
    for (const auto& rec : data.tests) {
      out << rec.query << "\t";
      bool first = true;
      for (const auto& g : rec.golden) {
        if (!first) out << " || ";
        first = false;
        out << g;
      }
      out << "\t" << rec.scenario << "\n";
    }
  }
  write_manifest(out_dir + "/dataset", make_manifest("synth", spec_json, {spec_path}, seed));
  std::cout << "keywords: " << data.library.size() << "\npairs: " << data.pairs.size()
            << "\nqueries: " << data.tests.size() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trie-constrained keyword extension engine with lookahead beam search"};
  app.require_subcommand(1);

  std::string corpus, keywords, vocab_path, out, pairs_path, trie_path, scorer_path;
  std::string query_text, dataset_path, spec_path, out_dir, out_path;
  std::size_t max_size = 30000;
  int order = 3, top_k = 8, beam = 5, ngram = 2, max_len = 20;
  double beta = 1.0, floor_prob = 1e-10, lambda = 0.8;
  std::vector<double> weights;
  std::uint64_t seed = 0;
  bool plain = false;
  EvalOptions eval_opt;

  auto* sc_vocab = app.add_subcommand("build-vocab", "Build a vocabulary file from a corpus");
  sc_vocab->add_option("--corpus", corpus)->required()->check(CLI::ExistingFile);
  sc_vocab->add_option("--max-size", max_size);
  sc_vocab->add_option("--out", out)->required();

  auto* sc_trie = app.add_subcommand("build-trie", "Build the keyword-library trie");
  sc_trie->add_option("--keywords", keywords)->required()->check(CLI::ExistingFile);
  sc_trie->add_option("--vocab", vocab_path)->required()->check(CLI::ExistingFile);
  sc_trie->add_option("--out", out)->required();

  auto* sc_train = app.add_subcommand("train-scorer", "Train the count-based n-gram scorer");
  sc_train->add_option("--pairs", pairs_path)->required()->check(CLI::ExistingFile);
  sc_train->add_option("--vocab", vocab_path)->required()->check(CLI::ExistingFile);
  sc_train->add_option("--order", order);
  sc_train->add_option("--beta", beta);
  sc_train->add_option("--weights", weights)->delimiter(',');
  sc_train->add_option("--floor", floor_prob);
  sc_train->add_option("--top-k", top_k);
  sc_train->add_option("--out", out)->required();

  auto* sc_extend = app.add_subcommand("extend", "Extend one query to ranked keywords");
  sc_extend->add_option("--trie", trie_path)->required()->check(CLI::ExistingFile);
  sc_extend->add_option("--vocab", vocab_path)->required()->check(CLI::ExistingFile);
  sc_extend->add_option("--scorer", scorer_path)->required()->check(CLI::ExistingFile);
  sc_extend->add_option("--query", query_text)->required();
  sc_extend->add_option("--beam", beam);
  sc_extend->add_option("--ngram", ngram);
  sc_extend->add_option("--lambda", lambda);
  sc_extend->add_option("--max-len", max_len);
  sc_extend->add_flag("--plain", plain, "Disable lookahead (forces lambda=1)");

  auto* sc_eval = app.add_subcommand("eval", "Evaluate systems on a dataset");
  sc_eval->add_option("--trie", eval_opt.trie_path)->required()->check(CLI::ExistingFile);
  sc_eval->add_option("--vocab", eval_opt.vocab_path)->required()->check(CLI::ExistingFile);
  sc_eval->add_option("--scorer", eval_opt.scorer_path)->required()->check(CLI::ExistingFile);
  sc_eval->add_option("--dataset", eval_opt.dataset_path)->required()->check(CLI::ExistingFile);
  sc_eval->add_option("--beams", eval_opt.beams)->delimiter(',');
  sc_eval->add_option("--lambdas", eval_opt.lambdas)->delimiter(',');
  sc_eval->add_option("--ngrams", eval_opt.ngrams)->delimiter(',');
  sc_eval->add_flag("--bm25", eval_opt.with_bm25, "Add a BM25 baseline row");
  sc_eval->add_flag("--merge", eval_opt.with_merge, "Add merged lookahead+plain rows");
  sc_eval->add_option("--out", eval_opt.out_path, "Write a JSON report here");

  auto* sc_synth = app.add_subcommand("synth", "Generate the synthetic adversarial benchmark");
  sc_synth->add_option("--seed", seed)->required();
  sc_synth->add_option("--spec", spec_path)->required()->check(CLI::ExistingFile);
  sc_synth->add_option("--out-dir", out_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sc_vocab->parsed()) return cmd_build_vocab(corpus, max_size, out);
    if (sc_trie->parsed()) return cmd_build_trie(keywords, vocab_path, out);
    if (sc_train->parsed())
      return cmd_train_scorer(pairs_path, vocab_path, order, beta, weights, floor_prob, top_k,
                              out);
    if (sc_extend->parsed())
      return cmd_extend(trie_path, vocab_path, scorer_path, query_text, beam, ngram, lambda,
                        max_len, plain);
    if (sc_eval->parsed()) return cmd_eval(eval_opt);
    if (sc_synth->parsed()) return cmd_synth(seed, spec_path, out_dir);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
