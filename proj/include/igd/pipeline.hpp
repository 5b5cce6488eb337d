#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "igd/decoder.hpp"
#include "igd/eval.hpp"
#include "igd/trainer.hpp"

namespace igd {

// Parsed form of `kind(key=value,...)`; values may be nested specs.
struct ScorerSpec {
  std::string kind;
  std::map<std::string, std::string> args;
};
ScorerSpec parse_scorer_spec(std::string_view text);

// Kinds: prior, personalized(lambda, train, base), biased(gamma, base),
// replay(path), tabular(model). Relative paths resolve against the cwd.
ScorerPtr make_scorer(std::string_view spec, const PrefixTrie& trie);

struct AbRunConfig {
  std::vector<double> beta_grid = kDefaultBetaGrid;
  std::vector<double> alpha_grid{0.0, 0.1, 0.2, 0.3, 0.4};
  WeightKind weight_kind = WeightKind::binary;
  double learning_rate = 5.0;
  VocabMode vocab_mode = VocabMode::full;
  int epochs = 1;
  std::size_t batch_size = 16;
  double lambda = 0.5;
  double gamma = 2.0;
  std::size_t width = 10;
  std::size_t top_k = 10;
  std::string selection_metric = "hr10";  // hr5, hr10, ndcg5 or ndcg10
  unsigned jobs = 1;
  std::uint64_t seed = 7;
  std::filesystem::path out_dir;  // empty: no artifacts

  void validate() const;
};

struct CellResult {
  double beta = 1.0;
  double alpha = 0.0;
  MetricReport valid;
  MetricReport test;
  DiversityReport diversity;  // on test
  double entropy_gap_mean = 0.0;  // on test

  double metric(const std::string& name, bool on_test) const;
};

struct AbRunResult {
  std::vector<CellResult> cells;  // summary order: beta sweep, then alpha sweep
  double best_beta = 1.0;
  double best_alpha = 0.0;
  const CellResult& cell(double beta, double alpha) const;
};

// `catalog` must carry priors. Selection uses validation metrics; reported
// metrics are on test.
AbRunResult ab_run(const Catalog& catalog, const InteractionSet& train, const InteractionSet& valid,
                   const InteractionSet& test, const AbRunConfig& cfg);

// CSV: beta,alpha,hr5,hr10,ndcg5,ndcg10,fwr,ise,entropy_gap_mean,seed
std::string summary_csv(const AbRunResult& result, std::uint64_t seed);

}  // namespace igd
