#include "igd/trie.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "igd/error.hpp"

namespace igd {

namespace {

constexpr int kSnapshotVersion = 1;
constexpr double kPriorTolerance = 1e-9;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex64(const std::string& s) {
  std::size_t used = 0;
  unsigned long long v = std::stoull(s, &used, 16);
  if (used != s.size()) throw ValidationError("malformed catalog_hash '" + s + "'");
  return v;
}

}  // namespace

std::string to_string(LogBase base) { return base == LogBase::natural ? "natural" : "base2"; }

LogBase parse_log_base(std::string_view name) {
  if (name == "natural" || name == "nat" || name == "e") return LogBase::natural;
  if (name == "base2" || name == "2" || name == "bits") return LogBase::base2;
  throw ValidationError("unknown log base '" + std::string(name) + "'");
}

double PrefixTrie::log(double x) const { return base_ == LogBase::natural ? std::log(x) : std::log2(x); }

PrefixTrie PrefixTrie::build(Catalog catalog, LogBase base) {
  if (catalog.empty()) throw ValidationError("cannot build a trie over an empty catalog");
  double total = 0.0;
  for (const auto& item : catalog.items()) {
    if (!(item.prior > 0.0) || item.prior > 1.0)
      throw ValidationError("item '" + item.item_id + "' has prior outside (0, 1]");
    total += item.prior;
  }
  if (std::abs(total - 1.0) > kPriorTolerance)
    throw ValidationError("priors are not normalized (sum = " + std::to_string(total) + ")");

  // Pointer-free staging trie; children kept ordered by token.
  struct Staging {
    std::map<TokenId, std::uint32_t> kids;
    std::optional<ItemIndex> item;
  };
  std::vector<Staging> staging(1);
  for (ItemIndex i = 0; i < catalog.size(); ++i) {
    std::uint32_t at = 0;
    for (TokenId tok : catalog.item(i).tokens) {
      auto it = staging[at].kids.find(tok);
      if (it == staging[at].kids.end()) {
        auto next = static_cast<std::uint32_t>(staging.size());
        staging[at].kids.emplace(tok, next);
        staging.emplace_back();
        at = next;
      } else {
        at = it->second;
      }
    }
    // EOS closes every sequence, so two items reach the same leaf only if identical.
    if (staging[at].item)
      throw ValidationError("items '" + catalog.item(*staging[at].item).item_id + "' and '" +
                            catalog.item(i).item_id + "' have identical token sequences");
    staging[at].item = i;
  }

  PrefixTrie trie;
  trie.base_ = base;
  trie.nodes_.reserve(staging.size());
  trie.item_leaf_.assign(catalog.size(), 0);

  // Breadth-first relabelling gives each node a contiguous block of children.
  std::vector<std::uint32_t> order;  // new id -> staging id
  order.reserve(staging.size());
  order.push_back(0);
  trie.nodes_.emplace_back();
  for (std::size_t head = 0; head < order.size(); ++head) {
    const auto& s = staging[order[head]];
    auto& n = trie.nodes_[head];
    n.first_child = static_cast<NodeId>(order.size());
    n.child_count = static_cast<std::uint32_t>(s.kids.size());
    n.terminal_item = s.item;
    for (const auto& [tok, sid] : s.kids) {
      TrieNode child;
      child.parent = static_cast<NodeId>(head);
      child.token = tok;
      child.depth = trie.nodes_[head].depth + 1;
      order.push_back(sid);
      trie.nodes_.push_back(child);
    }
  }

  // Children always carry larger ids than their parent.
  std::vector<std::uint32_t> leaves(trie.nodes_.size(), 0);
  for (std::size_t k = trie.nodes_.size(); k-- > 0;) {
    auto& n = trie.nodes_[k];
    if (n.is_leaf()) {
      if (!n.terminal_item) throw RuntimeError("trie leaf without item");
      const double p = catalog.item(*n.terminal_item).prior;
      n.mass = p;
      n.entropy = -p * trie.log(p);
      leaves[k] = 1;
      trie.item_leaf_[*n.terminal_item] = static_cast<NodeId>(k);
    } else {
      double mass = 0.0;
      double entropy = 0.0;
      for (NodeId c = n.first_child; c < n.first_child + n.child_count; ++c) {
        mass += trie.nodes_[c].mass;
        entropy += trie.nodes_[c].entropy;
        leaves[k] += leaves[c];
      }
      n.mass = mass;
      n.entropy = entropy;
    }
  }

  trie.leaf_items_.assign(catalog.size(), 0);
  trie.nodes_[0].leaf_begin = 0;
  trie.nodes_[0].leaf_end = leaves[0];
  for (std::size_t k = 0; k < trie.nodes_.size(); ++k) {
    auto& n = trie.nodes_[k];
    std::uint32_t cursor = n.leaf_begin;
    for (NodeId c = n.first_child; c < n.first_child + n.child_count; ++c) {
      auto& child = trie.nodes_[c];
      child.leaf_begin = cursor;
      child.leaf_end = cursor + leaves[c];
      cursor = child.leaf_end;
      if (n.child_count == 1) {
        child.ig = {0.0, true};
      } else {
        child.ig = {std::max(0.0, n.entropy - child.entropy), false};
        trie.max_ig_ = std::max(trie.max_ig_, child.ig.value);
      }
    }
    if (n.is_leaf()) trie.leaf_items_[n.leaf_begin] = *n.terminal_item;
  }

  trie.catalog_hash_ = catalog.hash();
  trie.catalog_ = std::move(catalog);
  return trie;
}

std::optional<NodeId> PrefixTrie::child(NodeId parent, TokenId token) const {
  const auto& n = nodes_.at(parent);
  auto first = nodes_.begin() + n.first_child;
  auto last = first + n.child_count;
  auto it = std::lower_bound(first, last, token,
                             [](const TrieNode& a, TokenId t) { return a.token < t; });
  if (it == last || it->token != token) return std::nullopt;
  return static_cast<NodeId>(it - nodes_.begin());
}

NodeId PrefixTrie::walk(std::span<const TokenId> prefix) const {
  NodeId at = root();
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    auto next = child(at, prefix[i]);
    if (!next)
      throw ValidationError("prefix leaves the trie at step " + std::to_string(i + 1) + " (token " +
                            std::to_string(prefix[i]) + ")");
    at = *next;
  }
  return at;
}

std::vector<TokenId> PrefixTrie::prefix_of(NodeId node) const {
  std::vector<TokenId> out(nodes_.at(node).depth);
  for (NodeId at = node; at != root(); at = nodes_[at].parent) out[nodes_[at].depth - 1] = nodes_[at].token;
  return out;
}

double PrefixTrie::entropy(std::span<const TokenId> prefix) const { return nodes_[walk(prefix)].entropy; }

IGValue PrefixTrie::information_gain(std::span<const TokenId> prefix, TokenId token) const {
  NodeId at = walk(prefix);
  auto next = child(at, token);
  if (!next)
    throw ValidationError("token " + std::to_string(token) + " is not a valid continuation at depth " +
                          std::to_string(prefix.size()));
  return nodes_[*next].ig;
}

std::vector<Continuation> PrefixTrie::continuations(NodeId node) const {
  const auto& n = nodes_.at(node);
  std::vector<Continuation> out;
  out.reserve(n.child_count);
  for (NodeId c = n.first_child; c < n.first_child + n.child_count; ++c)
    out.push_back({nodes_[c].token, nodes_[c].ig, nodes_[c].mass, c});
  return out;
}

std::vector<Continuation> PrefixTrie::valid_continuations(std::span<const TokenId> prefix) const {
  return continuations(walk(prefix));
}

void save_trie(const PrefixTrie& trie, const std::filesystem::path& path) {
  const Catalog& cat = trie.catalog();
  nlohmann::ordered_json doc;
  doc["format"] = "igd-trie";
  doc["version"] = kSnapshotVersion;
  doc["log_base"] = to_string(trie.log_base());
  doc["catalog_hash"] = hex64(trie.catalog_hash());

  nlohmann::ordered_json catalog;
  catalog["tokenizer"] = to_string(cat.tokenizer_spec().mode);
  catalog["vocab_path"] = cat.tokenizer_spec().vocab_path.string();
  catalog["vocab"] = {{"eos", cat.vocab().eos()},
                      {"closed", cat.vocab().closed()},
                      {"surfaces", cat.vocab().surfaces()}};
  auto items = nlohmann::ordered_json::array();
  for (const auto& item : cat.items()) {
    items.push_back({{"item_id", item.item_id},
                     {"title", item.title},
                     {"tokens", item.tokens},
                     {"train_count", item.train_count},
                     {"prior", item.prior}});
  }
  catalog["items"] = std::move(items);
  doc["catalog"] = std::move(catalog);

  std::vector<NodeId> parent;
  std::vector<TokenId> token;
  std::vector<double> mass, entropy, ig;
  std::vector<bool> is_zero;
  std::vector<std::int64_t> terminal;
  for (const auto& n : trie.nodes()) {
    parent.push_back(n.parent);
    token.push_back(n.token);
    mass.push_back(n.mass);
    entropy.push_back(n.entropy);
    ig.push_back(n.ig.value);
    is_zero.push_back(n.ig.is_zero);
    terminal.push_back(n.terminal_item ? static_cast<std::int64_t>(*n.terminal_item) : -1);
  }
  doc["nodes"] = {{"parent", parent}, {"token", token},     {"mass", mass},        {"entropy", entropy},
                  {"ig", ig},         {"is_zero", is_zero}, {"terminal_item", terminal}};

  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << doc.dump() << '\n';
  if (!out) throw RuntimeError("write failed for " + path.string());
}

PrefixTrie load_trie(const std::filesystem::path& path, const Catalog* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": malformed trie snapshot: " + e.what());
  }
  try {
    if (doc.at("format") != "igd-trie") throw ValidationError(path.string() + ": not a trie snapshot");
    if (doc.at("version").get<int>() != kSnapshotVersion)
      throw ValidationError(path.string() + ": unsupported snapshot version");
    const LogBase base = parse_log_base(doc.at("log_base").get<std::string>());
    const std::uint64_t stored_hash = parse_hex64(doc.at("catalog_hash").get<std::string>());

    const auto& c = doc.at("catalog");
    TokenizerSpec spec;
    spec.mode = parse_tokenizer_mode(c.at("tokenizer").get<std::string>());
    spec.vocab_path = c.at("vocab_path").get<std::string>();
    Vocabulary vocab = Vocabulary::restore(c.at("vocab").at("surfaces").get<std::vector<std::string>>(),
                                           c.at("vocab").at("eos").get<TokenId>(),
                                           c.at("vocab").at("closed").get<bool>());
    std::vector<ItemRecord> items;
    for (const auto& j : c.at("items")) {
      ItemRecord rec;
      rec.item_id = j.at("item_id").get<std::string>();
      rec.title = j.at("title").get<std::string>();
      rec.tokens = j.at("tokens").get<TokenSeq>();
      rec.train_count = j.at("train_count").get<std::uint64_t>();
      rec.prior = j.at("prior").get<double>();
      items.push_back(std::move(rec));
    }
    Catalog catalog(std::move(items), std::move(vocab), spec);
    if (catalog.hash() != stored_hash)
      throw ValidationError(path.string() + ": catalog_hash does not match the embedded catalog");
    if (expected && expected->hash() != stored_hash)
      throw ValidationError(path.string() + ": trie was built for a different catalog");

    PrefixTrie trie = PrefixTrie::build(std::move(catalog), base);
    const auto& nodes = doc.at("nodes");
    const auto mass = nodes.at("mass").get<std::vector<double>>();
    const auto entropy = nodes.at("entropy").get<std::vector<double>>();
    const auto ig = nodes.at("ig").get<std::vector<double>>();
    const auto token = nodes.at("token").get<std::vector<TokenId>>();
    if (mass.size() != trie.node_count() || entropy.size() != trie.node_count() ||
        ig.size() != trie.node_count() || token.size() != trie.node_count())
      throw ValidationError(path.string() + ": node table does not match the catalog");
    for (std::size_t k = 0; k < trie.node_count(); ++k) {
      const auto& n = trie.node(static_cast<NodeId>(k));
      if (n.mass != mass[k] || n.entropy != entropy[k] || n.ig.value != ig[k] || n.token != token[k])
        throw ValidationError(path.string() + ": node " + std::to_string(k) + " is inconsistent");
    }
    return trie;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": malformed trie snapshot: " + e.what());
  }
}

ZeroIGStats zero_ig_stats(const PrefixTrie& trie, const InteractionSet& train) {
  ZeroIGStats stats;
  stats.items = trie.catalog().size();
  stats.interactions = train.records.size();
  for (const auto& rec : train.records) {
    if (rec.target >= trie.catalog().size()) throw ValidationError("training target outside the trie");
    for (NodeId at = trie.leaf_of(rec.target); at != PrefixTrie::root(); at = trie.node(at).parent) {
      const auto& n = trie.node(at);
      auto& bucket = stats.per_depth_histogram[n.depth];
      ++bucket.total;
      ++stats.total_token_instances;
      if (n.ig.is_zero) {
        ++bucket.zero;
        ++stats.zero_ig_instances;
      }
    }
  }
  stats.percent = stats.total_token_instances == 0
                      ? 0.0
                      : 100.0 * static_cast<double>(stats.zero_ig_instances) /
                            static_cast<double>(stats.total_token_instances);
  return stats;
}

}  // namespace igd
