#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "igd/scorer.hpp"
#include "igd/trie.hpp"
#include "igd/weights.hpp"

namespace igd {

// Softmax normalization used while training. `full` normalizes over the whole
// vocabulary, as an LLM head does: every token that is not a continuation of
// the node shares one tied logit. `constrained` normalizes over the node's
// continuations only, which leaves single-continuation nodes with zero loss.
enum class VocabMode { full, constrained };
std::string to_string(VocabMode mode);
VocabMode parse_vocab_mode(std::string_view name);

// Cross-entropy of one softmax over `child_logits` plus `off_count` copies of
// `off_logit`, and its gradient. `off_grad` is the derivative for a single copy.
struct NodeLoss {
  double loss = 0.0;
  std::vector<double> child_grad;
  double off_grad = 0.0;
};
NodeLoss node_loss(std::span<const double> child_logits, double off_logit, std::size_t off_count,
                   std::size_t target);

// Per-node logit table standing in for a fine-tuned LM. Zero-initialized.
class TabularLM {
 public:
  TabularLM() = default;
  TabularLM(const PrefixTrie& trie, double learning_rate, VocabMode mode = VocabMode::full,
            std::uint64_t seed = 0);

  double learning_rate() const { return learning_rate_; }
  VocabMode vocab_mode() const { return mode_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t catalog_hash() const { return catalog_hash_; }
  std::size_t vocab_size() const { return vocab_size_; }

  // Logit of the edge entering `child`.
  double logit(NodeId child) const { return edge_logits_.at(child - 1); }
  double off_logit(NodeId node) const { return off_logits_.at(node); }
  std::size_t off_count(const PrefixTrie& trie, NodeId node) const;

  NodeLoss loss_at(const PrefixTrie& trie, NodeId node, NodeId target_child) const;
  // Softmax over the node's continuation logits only.
  std::vector<double> continuation_probs(const PrefixTrie& trie, NodeId node) const;

  const std::vector<double>& edge_logits() const { return edge_logits_; }
  const std::vector<double>& off_logits() const { return off_logits_; }
  std::vector<double>& mutable_edge_logits() { return edge_logits_; }
  std::vector<double>& mutable_off_logits() { return off_logits_; }

  void check_trie(const PrefixTrie& trie) const;

  bool operator==(const TabularLM&) const = default;

 private:
  std::vector<double> edge_logits_;  // indexed by child node id - 1
  std::vector<double> off_logits_;   // indexed by node id
  double learning_rate_ = 0.1;
  VocabMode mode_ = VocabMode::full;
  std::uint64_t seed_ = 0;
  std::uint64_t catalog_hash_ = 0;
  std::size_t vocab_size_ = 0;
};

// One supervised token: the model at `node` should emit the edge into `target`.
struct TokenInstance {
  NodeId node = 0;
  NodeId target = 0;
  bool zero_ig = false;
};

// Token instances of every training target, in record order.
std::vector<TokenInstance> token_instances(const PrefixTrie& trie, std::span<const Interaction> records);

// Sparse batch gradient of sum(w_t * l_t) / sum(w_t).
struct BatchGradient {
  std::vector<std::pair<NodeId, double>> edges;  // (child node, d/d logit)
  std::vector<std::pair<NodeId, double>> off;    // (node, d/d one off copy)
  double omega = 0.0;
};
BatchGradient batch_gradient(const TabularLM& model, const PrefixTrie& trie, std::span<const TokenInstance> tokens,
                             std::span<const double> weights);

struct TrainConfig {
  int epochs = 1;
  std::size_t batch_size = 32;
  std::optional<WeightScheme> scheme;  // absent: plain token-mean cross-entropy
  std::uint64_t shuffle_seed = 0;
};

struct LossRecord {
  int epoch = 0;  // 1-based
  int step = 0;   // 1-based, counted across epochs
  double loss_zero_ig = 0.0;
  double loss_nonzero_ig = 0.0;
  double loss_overall = 0.0;
  std::uint64_t zero_ig_tokens = 0;
  std::uint64_t nonzero_ig_tokens = 0;

  bool operator==(const LossRecord&) const = default;
};

// Unweighted per-step batch means, split by IG class, measured before each update.
struct LossTrace {
  std::vector<LossRecord> records;
};

// Mini-batch SGD on token cross-entropy. With a scheme, token t contributes
// its gradient scaled by w_t / Omega, Omega being the batch sum of weights.
LossTrace train(TabularLM& model, const InteractionSet& data, const PrefixTrie& trie, const TrainConfig& cfg);

// Constrained next-token scorer backed by the model's continuation logits.
ScorerPtr as_scorer(TabularLM model);

// CSV: epoch,step,loss_zero_ig,loss_nonzero_ig,loss_overall. Empty cells mark
// steps without tokens of that class.
void loss_split_report(const LossTrace& trace, const std::filesystem::path& path);

void save_model(const TabularLM& model, const PrefixTrie& trie, const std::filesystem::path& path);
TabularLM load_model(const std::filesystem::path& path, const PrefixTrie& trie);

}  // namespace igd
