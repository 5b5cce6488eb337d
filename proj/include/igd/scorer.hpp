#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "igd/catalog.hpp"
#include "igd/trie.hpp"

namespace igd {

// The conditioning context of a request: who is asking and what they consumed.
struct UserContext {
  std::string user_id;
  std::vector<ItemIndex> history;
};

struct TokenProb {
  TokenId token = 0;
  NodeId node = 0;  // child reached by the token
  double prob = 0.0;
};

// p(token | context, prefix) restricted to the trie continuations of the
// prefix. Entries are sorted by token and carry strictly positive mass.
struct NextTokenDistribution {
  std::vector<TokenProb> entries;

  double prob(TokenId token) const;
  double total() const;
};

// Next-token model queried by the decoder. Implementations are immutable and
// safe to call concurrently.
class Scorer {
 public:
  virtual ~Scorer() = default;

  // Distribution at a trie node; rejects leaves.
  NextTokenDistribution distribution(const UserContext& ctx, const PrefixTrie& trie, NodeId node) const;
  // Same, addressed by token prefix.
  NextTokenDistribution score(const UserContext& ctx, const PrefixTrie& trie,
                              std::span<const TokenId> prefix) const;

  // True when the output never depends on the user context.
  virtual bool context_free() const { return false; }

 protected:
  virtual NextTokenDistribution compute(const UserContext& ctx, const PrefixTrie& trie, NodeId node) const = 0;
};

using ScorerPtr = std::shared_ptr<const Scorer>;

// p(child | node) = mass(child) / mass(node); path products telescope to the prior.
ScorerPtr make_trie_prior_scorer();

// Item score s(i | ctx) = lambda * P_base(i) + (1 - lambda) * cooc(last(history), i), with
// cooc the Laplace-smoothed history->target co-occurrence rate over `train`.
// Token probabilities are ratios of subtree sums of s. `base` must be context
// free (defaults to the trie prior); empty histories fall back to it exactly.
ScorerPtr make_personalized_scorer(const PrefixTrie& trie, const InteractionSet& train, double lambda,
                                   ScorerPtr base = nullptr);

// p'(t) proportional to p(t) * exp(gamma * (1 - normalized IG(t))): probability
// mass shifts toward the least decisive continuations of each node. IG is
// max-min normalized over the node's continuations; a degenerate pool leaves
// the base distribution unchanged.
ScorerPtr make_biased_scorer(ScorerPtr base, double gamma);

// Reweighting used by the biased scorer, exposed for direct use.
std::vector<double> apply_low_ig_bias(std::span<const double> probs, std::span<const double> igs, double gamma);

// Per-step distributions recorded from an external model, one JSONL line per
// (user, prefix): {"user_id": str, "prefix": [int], "probs": {token_id: float}}.
// Mass on tokens that are not trie continuations is dropped and the rest renormalized.
ScorerPtr make_replay_scorer(const std::filesystem::path& path);

}  // namespace igd
