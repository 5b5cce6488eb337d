#include "igd/weights.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "igd/error.hpp"

namespace igd {

std::string to_string(WeightKind kind) { return kind == WeightKind::binary ? "binary" : "linear"; }

WeightKind parse_weight_kind(std::string_view name) {
  if (name == "binary") return WeightKind::binary;
  if (name == "linear") return WeightKind::linear;
  throw ValidationError("unknown weight scheme '" + std::string(name) + "'");
}

void WeightScheme::validate() const {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ValidationError("beta must lie in [0, 1], got " + std::to_string(beta));
  if (kind == WeightKind::linear && !(ig_max > 0.0))
    throw ValidationError("linear weighting needs ig_max > 0");
}

double tuning_weight(const IGValue& ig, const WeightScheme& scheme) {
  scheme.validate();
  if (scheme.kind == WeightKind::binary) return ig.is_zero ? scheme.beta : 1.0;
  if (ig.is_zero) return scheme.beta;
  const double w = scheme.beta + (1.0 - scheme.beta) * (ig.value / scheme.ig_max);
  return std::clamp(w, scheme.beta, 1.0);
}

WeightedSequence annotate_sequence(const PrefixTrie& trie, ItemIndex item, const WeightScheme& scheme) {
  scheme.validate();
  if (item >= trie.catalog().size()) throw ValidationError("item index outside the trie's catalog");
  WeightedSequence seq;
  seq.item_id = trie.catalog().item(item).item_id;
  const NodeId leaf = trie.leaf_of(item);
  seq.records.resize(trie.node(leaf).depth);
  for (NodeId at = leaf; at != PrefixTrie::root(); at = trie.node(at).parent) {
    const auto& n = trie.node(at);
    auto& rec = seq.records[n.depth - 1];
    rec.position = n.depth;
    rec.token = n.token;
    rec.ig = n.ig;
    rec.weight = tuning_weight(n.ig, scheme);
  }
  for (const auto& rec : seq.records) seq.omega += rec.weight;
  if (!(seq.omega > 0.0)) throw ValidationError("all token weights of '" + seq.item_id + "' are zero");
  return seq;
}

double weighted_loss(std::span<const double> losses, std::span<const double> weights) {
  if (losses.size() != weights.size())
    throw ValidationError("loss and weight vectors differ in length (" + std::to_string(losses.size()) +
                          " vs " + std::to_string(weights.size()) + ")");
  double num = 0.0;
  double omega = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (weights[i] < 0.0) throw ValidationError("negative token weight");
    num += weights[i] * losses[i];
    omega += weights[i];
  }
  if (!(omega > 0.0)) throw ValidationError("token weights sum to zero");
  return num / omega;
}

double global_ig_max(const PrefixTrie& trie) {
  if (!(trie.max_ig() > 0.0))
    throw ValidationError("trie has no positive-IG edge (single-item catalog); linear weights undefined");
  return trie.max_ig();
}

void export_weights(const InteractionSet& train, const PrefixTrie& trie, const WeightScheme& scheme,
                    const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write weight sidecar " + path.string());
  for (const auto& rec : train.records) {
    const auto seq = annotate_sequence(trie, rec.target, scheme);
    nlohmann::ordered_json line;
    line["user_id"] = rec.user_id;
    line["item_id"] = seq.item_id;
    auto tokens = nlohmann::ordered_json::array();
    auto ig = nlohmann::ordered_json::array();
    auto weights = nlohmann::ordered_json::array();
    for (const auto& r : seq.records) {
      tokens.push_back(r.token);
      ig.push_back(r.ig.value);
      weights.push_back(r.weight);
    }
    line["tokens"] = std::move(tokens);
    line["ig"] = std::move(ig);
    line["weights"] = std::move(weights);
    out << line.dump() << '\n';
  }
  if (!out) throw RuntimeError("write failed for weight sidecar " + path.string());
}

}  // namespace igd
