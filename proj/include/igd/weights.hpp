#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "igd/catalog.hpp"
#include "igd/trie.hpp"

namespace igd {

enum class WeightKind { binary, linear };
std::string to_string(WeightKind kind);
WeightKind parse_weight_kind(std::string_view name);

// Tuning weights for zero-IG (binary) or low-IG (linear) tokens. `ig_max` is
// only read by the linear scheme and must share the trie's log base.
struct WeightScheme {
  WeightKind kind = WeightKind::binary;
  double beta = 1.0;
  double ig_max = 0.0;

  static WeightScheme binary(double beta) { return {WeightKind::binary, beta, 0.0}; }
  static WeightScheme linear(double beta, double ig_max) { return {WeightKind::linear, beta, ig_max}; }

  void validate() const;
};

// Grid searched for beta when none is given.
inline const std::vector<double> kDefaultBetaGrid{0.08, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 1.0};

// binary: beta for zero-IG tokens, 1 otherwise.
// linear: beta + (1 - beta) * ig / ig_max, clamped to [beta, 1].
double tuning_weight(const IGValue& ig, const WeightScheme& scheme);

struct TokenWeightRecord {
  std::uint32_t position = 0;  // 1-based
  TokenId token = 0;
  IGValue ig;
  double weight = 1.0;
};

struct WeightedSequence {
  std::string item_id;
  std::vector<TokenWeightRecord> records;
  double omega = 0.0;
};

// Walks the item's path, EOS included.
WeightedSequence annotate_sequence(const PrefixTrie& trie, ItemIndex item, const WeightScheme& scheme);

// sum(w * l) / sum(w). The caller picks the aggregation unit (one sequence or a batch).
double weighted_loss(std::span<const double> losses, std::span<const double> weights);

// Largest edge IG; rejects tries whose IG is identically zero.
double global_ig_max(const PrefixTrie& trie);

// One JSONL line per training record:
// {"user_id", "item_id", "tokens", "ig", "weights"}, arrays EOS-inclusive.
void export_weights(const InteractionSet& train, const PrefixTrie& trie, const WeightScheme& scheme,
                    const std::filesystem::path& path);

}  // namespace igd
