#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "igd/decoder.hpp"

namespace igd {

struct MetricReport {
  std::map<int, double> hr;
  std::map<int, double> ndcg;
  std::size_t n_users = 0;
};

// Single relevant item per user; ranks past the end of a list count as misses.
MetricReport hr_ndcg(std::span<const RankedList> lists, std::span<const ItemIndex> truths, std::span<const int> ks);

// How items shorter than the current step contribute.
enum class ShortItemPolicy { hold, exclude };

struct GapStep {
  int t = 0;
  double mean_pred_entropy = 0.0;
  double mean_gt_entropy = 0.0;
  double gap = 0.0;
};

struct EntropyGapCurve {
  std::vector<GapStep> steps;
  double mean_gap() const;
};

// Steps 1..max_step (0: up to the deepest item involved). Predictions use the
// first `top_n` entries of each list.
EntropyGapCurve entropy_gap(std::span<const RankedList> lists, std::span<const ItemIndex> truths,
                            const PrefixTrie& trie, int max_step = 0, std::size_t top_n = 10,
                            ShortItemPolicy policy = ShortItemPolicy::hold);

struct DiversityReport {
  double fwr = 0.0;
  double ise = 0.0;
  std::size_t n_lists = 0;
};

DiversityReport diversity(std::span<const RankedList> lists, const Catalog& catalog, std::size_t top_k = 10);

struct IGBucket {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double mean_logp = 0.0;
};

struct IGLogitReport {
  std::optional<double> mean_logp_zero_ig;
  std::optional<double> mean_logp_nonzero_ig;
  std::optional<double> rank_correlation_nonzero;  // absent when undefined
  std::size_t n_zero_ig = 0;
  std::size_t n_nonzero_ig = 0;
  std::vector<IGBucket> histogram;
};

IGLogitReport ig_logit_report(const Scorer& scorer, const PrefixTrie& trie, const InteractionSet& sample,
                              std::size_t buckets = 10);

// Spearman correlation with average ranks for ties; absent for constant input.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

void write_metric_report(const MetricReport& report, const std::filesystem::path& path);
void write_entropy_gap_csv(const EntropyGapCurve& curve, const std::filesystem::path& path);
void write_ig_logit_report(const IGLogitReport& report, const std::filesystem::path& path);

}  // namespace igd
