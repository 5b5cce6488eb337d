#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "igd/catalog.hpp"

namespace igd {

using NodeId = std::uint32_t;

enum class LogBase { natural, base2 };
std::string to_string(LogBase base);
LogBase parse_log_base(std::string_view name);

// Information gain of one trie edge. `is_zero` is structural: the child keeps
// the parent's whole candidate set.
struct IGValue {
  double value = 0.0;
  bool is_zero = false;
};

struct TrieNode {
  NodeId parent = 0;
  TokenId token = 0;  // label of the edge from the parent; unused on the root
  std::uint32_t depth = 0;
  NodeId first_child = 0;
  std::uint32_t child_count = 0;
  double mass = 0.0;     // sum of priors over the subtree's items
  double entropy = 0.0;  // sum of -p log p over the subtree's items
  IGValue ig;            // of the incoming edge
  std::optional<ItemIndex> terminal_item;
  // Half-open range of the subtree's leaves in depth-first (token-ordered) order.
  std::uint32_t leaf_begin = 0;
  std::uint32_t leaf_end = 0;

  bool is_leaf() const { return child_count == 0; }
};

struct Continuation {
  TokenId token = 0;
  IGValue ig;
  double mass = 0.0;
  NodeId node = 0;
};

// Token prefix trie over a catalog. Nodes are laid out breadth-first so the
// children of a node occupy consecutive ids, sorted by token; the incoming
// edge of node n therefore has the dense index n - 1.
class PrefixTrie {
 public:
  static PrefixTrie build(Catalog catalog, LogBase base = LogBase::natural);

  const Catalog& catalog() const { return catalog_; }
  LogBase log_base() const { return base_; }
  std::uint64_t catalog_hash() const { return catalog_hash_; }

  static constexpr NodeId root() { return 0; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return nodes_.size() - 1; }
  std::size_t leaf_count() const { return leaf_items_.size(); }

  const TrieNode& node(NodeId id) const { return nodes_[id]; }
  const std::vector<TrieNode>& nodes() const { return nodes_; }

  std::optional<NodeId> child(NodeId parent, TokenId token) const;
  NodeId leaf_of(ItemIndex item) const { return item_leaf_.at(item); }
  // Item whose leaf has the given depth-first rank.
  ItemIndex leaf_item(std::uint32_t rank) const { return leaf_items_.at(rank); }
  std::uint32_t leaf_rank(ItemIndex item) const { return nodes_[item_leaf_.at(item)].leaf_begin; }

  // Resolves a prefix; throws ValidationError naming the first 1-based step
  // that leaves the trie.
  NodeId walk(std::span<const TokenId> prefix) const;
  std::vector<TokenId> prefix_of(NodeId node) const;

  double entropy(std::span<const TokenId> prefix) const;
  IGValue information_gain(std::span<const TokenId> prefix, TokenId token) const;
  std::vector<Continuation> valid_continuations(std::span<const TokenId> prefix) const;
  std::vector<Continuation> continuations(NodeId node) const;

  double log(double x) const;
  // Largest edge IG in the trie.
  double max_ig() const { return max_ig_; }

 private:
  Catalog catalog_;
  LogBase base_ = LogBase::natural;
  std::uint64_t catalog_hash_ = 0;
  std::vector<TrieNode> nodes_;
  std::vector<NodeId> item_leaf_;
  std::vector<ItemIndex> leaf_items_;
  double max_ig_ = 0.0;
};

// Snapshot with header {format, version, log_base, catalog_hash}, the embedded
// catalog and every node. Loading rebuilds the trie and rejects any mismatch.
void save_trie(const PrefixTrie& trie, const std::filesystem::path& path);
PrefixTrie load_trie(const std::filesystem::path& path, const Catalog* expected = nullptr);

struct DepthCount {
  std::uint64_t total = 0;
  std::uint64_t zero = 0;
};

struct ZeroIGStats {
  std::uint64_t total_token_instances = 0;
  std::uint64_t zero_ig_instances = 0;
  double percent = 0.0;
  std::map<std::uint32_t, DepthCount> per_depth_histogram;  // keyed by 1-based position
  std::uint64_t items = 0;
  std::uint64_t interactions = 0;
};

// Counts every (prefix, token) instance over the training targets' token
// sequences, EOS included.
ZeroIGStats zero_ig_stats(const PrefixTrie& trie, const InteractionSet& train);

}  // namespace igd
