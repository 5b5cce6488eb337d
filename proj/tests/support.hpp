#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <map>

#include "igd/catalog.hpp"
#include "igd/decoder.hpp"
#include "igd/scorer.hpp"
#include "igd/trie.hpp"

namespace igd::testing {

// Whitespace-tokenized catalog with explicit priors (uniform when empty).
inline Catalog make_catalog(const std::vector<std::string>& titles, std::vector<double> priors = {}) {
  std::vector<std::pair<std::string, std::string>> rows;
  for (std::size_t i = 0; i < titles.size(); ++i) rows.emplace_back("i" + std::to_string(i), titles[i]);
  Catalog cat = Catalog::from_titles(rows);
  if (!priors.empty()) {
    std::vector<std::uint64_t> counts(priors.size(), 0);
    cat.assign_priors(priors, counts);
  }
  return cat;
}

// The running example: {"Super Mario", "Super Man", "Zelda"} with uniform priors.
inline Catalog toy_catalog() { return make_catalog({"Super Mario", "Super Man", "Zelda"}); }

// Random catalog over a small alphabet: distinct titles of 1..max_len words
// and priors drawn uniformly then normalized.
inline Catalog random_catalog(std::mt19937_64& rng, std::size_t max_items = 50, int alphabet = 5,
                              int max_len = 4) {
  std::uniform_int_distribution<std::size_t> n_dist(1, max_items);
  std::uniform_int_distribution<int> len_dist(1, max_len);
  std::uniform_int_distribution<int> sym_dist(0, alphabet - 1);
  const std::size_t target = n_dist(rng);
  std::set<std::string> titles;
  for (int attempts = 0; titles.size() < target && attempts < 10000; ++attempts) {
    std::string title;
    const int len = len_dist(rng);
    for (int k = 0; k < len; ++k) {
      if (k) title += ' ';
      title += static_cast<char>('a' + sym_dist(rng));
    }
    titles.insert(title);
  }
  std::vector<std::string> list(titles.begin(), titles.end());
  std::shuffle(list.begin(), list.end(), rng);
  std::uniform_real_distribution<double> w(0.01, 1.0);
  std::vector<double> priors(list.size());
  for (auto& p : priors) p = w(rng);
  const double z = std::accumulate(priors.begin(), priors.end(), 0.0);
  for (auto& p : priors) p /= z;
  return make_catalog(list, priors);
}

// Brute-force candidate set: items whose token sequence starts with `prefix`.
inline std::vector<ItemIndex> candidate_set(const Catalog& cat, const std::vector<TokenId>& prefix) {
  std::vector<ItemIndex> out;
  for (ItemIndex i = 0; i < cat.size(); ++i) {
    const auto& toks = cat.item(i).tokens;
    if (toks.size() >= prefix.size() && std::equal(prefix.begin(), prefix.end(), toks.begin())) out.push_back(i);
  }
  return out;
}

inline double brute_entropy(const Catalog& cat, const std::vector<ItemIndex>& set) {
  double h = 0.0;
  for (ItemIndex i : set) h -= cat.item(i).prior * std::log(cat.item(i).prior);
  return h;
}

inline InteractionSet targets_only(std::vector<ItemIndex> targets, Split split = Split::train) {
  InteractionSet set;
  set.split = split;
  for (std::size_t k = 0; k < targets.size(); ++k)
    set.records.push_back({"u" + std::to_string(k), {}, targets[k]});
  return set;
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("igd-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// Exhaustive oracle: scores every item by walking BFS layers, with the IGD
// pool being the whole next layer. Exact when no pruning happens.
inline RankedList enumerate_all(const Scorer& scorer, const PrefixTrie& trie, const UserContext& ctx, std::size_t top_k,
                                 DecodeMode mode, double alpha) {
  std::map<NodeId, double> layer{{PrefixTrie::root(), 0.0}};
  std::vector<RankedEntry> all;
  while (!layer.empty()) {
    struct Cand {
      NodeId node;
      double base, logp, ig;
    };
    std::vector<Cand> pool;
    for (auto [node, score] : layer)
      for (const auto& e : scorer.distribution(ctx, trie, node).entries)
        pool.push_back({e.node, score, std::log(e.prob), trie.node(e.node).ig.value});
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& c : pool) {
      lo = std::min(lo, c.ig);
      hi = std::max(hi, c.ig);
    }
    std::map<NodeId, double> next;
    for (const auto& c : pool) {
      double w = 1.0;
      if (mode == DecodeMode::igd && hi > lo) w = 1.0 - alpha * (c.ig - lo) / (hi - lo);
      const double s = c.base + w * c.logp;
      const auto& n = trie.node(c.node);
      if (n.is_leaf())
        all.push_back({trie.catalog().item(*n.terminal_item).item_id, *n.terminal_item, s});
      else
        next[c.node] = s;
    }
    layer.swap(next);
  }
  std::sort(all.begin(), all.end(), [](const RankedEntry& a, const RankedEntry& b) {
    return a.score != b.score ? a.score > b.score : a.item_id < b.item_id;
  });
  if (all.size() > top_k) all.resize(top_k);
  return RankedList{all};
}

}  // namespace igd::testing
