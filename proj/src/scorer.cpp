#include "igd/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include <json.hpp>

#include "igd/error.hpp"

namespace igd {

double NextTokenDistribution::prob(TokenId token) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), token,
                             [](const TokenProb& e, TokenId t) { return e.token < t; });
  return it != entries.end() && it->token == token ? it->prob : 0.0;
}

double NextTokenDistribution::total() const {
  double s = 0.0;
  for (const auto& e : entries) s += e.prob;
  return s;
}

NextTokenDistribution Scorer::distribution(const UserContext& ctx, const PrefixTrie& trie, NodeId node) const {
  if (node >= trie.node_count()) throw ValidationError("node " + std::to_string(node) + " is not in the trie");
  if (trie.node(node).is_leaf())
    throw ValidationError("cannot score a leaf: the prefix already ends with EOS");
  return compute(ctx, trie, node);
}

NextTokenDistribution Scorer::score(const UserContext& ctx, const PrefixTrie& trie,
                                    std::span<const TokenId> prefix) const {
  return distribution(ctx, trie, trie.walk(prefix));
}

namespace {

class TriePriorScorer final : public Scorer {
 public:
  bool context_free() const override { return true; }

 protected:
  NextTokenDistribution compute(const UserContext&, const PrefixTrie& trie, NodeId node) const override {
    const auto& n = trie.node(node);
    NextTokenDistribution d;
    d.entries.reserve(n.child_count);
    for (NodeId c = n.first_child; c < n.first_child + n.child_count; ++c)
      d.entries.push_back({trie.node(c).token, c, trie.node(c).mass / n.mass});
    return d;
  }
};

class PersonalizedScorer final : public Scorer {
 public:
  PersonalizedScorer(const PrefixTrie& trie, const InteractionSet& train, double lambda, ScorerPtr base)
      : lambda_(lambda), catalog_hash_(trie.catalog_hash()), n_items_(trie.catalog().size()) {
    const bool custom_base = base != nullptr;
    base_ = custom_base ? std::move(base) : make_trie_prior_scorer();
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("lambda must lie in [0, 1]");
    if (!base_->context_free()) throw ValidationError("personalized scorer needs a context-free base");

    // Prefix probabilities of the base model: the subtree mass it assigns.
    prefix_prob_.assign(trie.node_count(), 0.0);
    for (NodeId id = 0; id < trie.node_count(); ++id) prefix_prob_[id] = trie.node(id).mass;
    if (custom_base) {
      prefix_prob_[PrefixTrie::root()] = 1.0;
      const UserContext nobody;
      for (NodeId id = 0; id < trie.node_count(); ++id) {
        if (trie.node(id).is_leaf()) continue;
        const auto& n = trie.node(id);
        for (NodeId c = n.first_child; c < n.first_child + n.child_count; ++c) prefix_prob_[c] = 0.0;
        for (const auto& e : base_->distribution(nobody, trie, id).entries)
          prefix_prob_[e.node] = prefix_prob_[id] * e.prob;
      }
    }

    std::unordered_map<ItemIndex, std::map<std::uint32_t, std::uint64_t>> counts;
    for (const auto& rec : train.records) {
      if (rec.target >= n_items_) throw ValidationError("training target outside the trie");
      for (ItemIndex h : rec.history) {
        if (h >= n_items_) throw ValidationError("history item outside the trie");
        ++counts[h][trie.leaf_rank(rec.target)];
      }
    }
    for (auto& [item, row_counts] : counts) {
      Row row;
      std::uint64_t running = 0;
      row.cumulative.push_back(0);
      for (const auto& [rank, count] : row_counts) {
        row.ranks.push_back(rank);
        running += count;
        row.cumulative.push_back(running);
      }
      row.total = running;
      rows_.emplace(item, std::move(row));
    }
  }

 protected:
  NextTokenDistribution compute(const UserContext& ctx, const PrefixTrie& trie, NodeId node) const override {
    if (trie.catalog_hash() != catalog_hash_) throw ValidationError("personalized scorer built for another trie");
    if (ctx.history.empty() || lambda_ == 1.0) return base_->distribution(ctx, trie, node);
    const ItemIndex last = ctx.history.back();
    if (last >= n_items_) throw ValidationError("history item outside the trie");

    const Row* row = nullptr;
    if (auto it = rows_.find(last); it != rows_.end()) row = &it->second;
    const double denom = static_cast<double>(row ? row->total : 0) + static_cast<double>(n_items_);

    const auto& n = trie.node(node);
    NextTokenDistribution d;
    d.entries.reserve(n.child_count);
    double z = 0.0;
    for (NodeId c = n.first_child; c < n.first_child + n.child_count; ++c) {
      const auto& child = trie.node(c);
      const double pairs = row ? static_cast<double>(row->count_in(child.leaf_begin, child.leaf_end)) : 0.0;
      const double cooc = (pairs + static_cast<double>(child.leaf_end - child.leaf_begin)) / denom;
      const double s = lambda_ * prefix_prob_[c] + (1.0 - lambda_) * cooc;
      if (s > 0.0) {
        d.entries.push_back({child.token, c, s});
        z += s;
      }
    }
    for (auto& e : d.entries) e.prob /= z;
    return d;
  }

 private:
  struct Row {
    std::vector<std::uint32_t> ranks;       // leaf ranks of co-occurring targets, ascending
    std::vector<std::uint64_t> cumulative;  // prefix sums of their counts
    std::uint64_t total = 0;

    std::uint64_t count_in(std::uint32_t begin, std::uint32_t end) const {
      auto lo = std::lower_bound(ranks.begin(), ranks.end(), begin) - ranks.begin();
      auto hi = std::lower_bound(ranks.begin(), ranks.end(), end) - ranks.begin();
      return cumulative[hi] - cumulative[lo];
    }
  };

  double lambda_;
  ScorerPtr base_;
  std::uint64_t catalog_hash_;
  std::size_t n_items_;
  std::vector<double> prefix_prob_;
  std::unordered_map<ItemIndex, Row> rows_;
};

class BiasedScorer final : public Scorer {
 public:
  BiasedScorer(ScorerPtr base, double gamma) : base_(std::move(base)), gamma_(gamma) {
    if (!base_) throw ValidationError("biased scorer needs a base scorer");
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ValidationError("gamma must be finite and >= 0");
  }

  bool context_free() const override { return base_->context_free(); }

 protected:
  NextTokenDistribution compute(const UserContext& ctx, const PrefixTrie& trie, NodeId node) const override {
    NextTokenDistribution d = base_->distribution(ctx, trie, node);
    if (gamma_ == 0.0 || d.entries.size() < 2) return d;
    std::vector<double> probs, igs;
    for (const auto& e : d.entries) {
      probs.push_back(e.prob);
      igs.push_back(trie.node(e.node).ig.value);
    }
    auto biased = apply_low_ig_bias(probs, igs, gamma_);
    for (std::size_t i = 0; i < biased.size(); ++i) d.entries[i].prob = biased[i];
    return d;
  }

 private:
  ScorerPtr base_;
  double gamma_;
};

class ReplayScorer final : public Scorer {
 public:
  explicit ReplayScorer(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open replay file " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const std::string where = path.string() + ":" + std::to_string(line_no);
      try {
        auto j = nlohmann::json::parse(line);
        Key key{j.at("user_id").get<std::string>(), j.at("prefix").get<std::vector<TokenId>>()};
        std::vector<std::pair<TokenId, double>> probs;
        for (const auto& [tok, p] : j.at("probs").items()) {
          std::size_t used = 0;
          const unsigned long id = std::stoul(tok, &used);
          if (used != tok.size()) throw ValidationError(where + ": malformed token id '" + tok + "'");
          const double v = p.get<double>();
          if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError(where + ": probabilities must be >= 0");
          probs.emplace_back(static_cast<TokenId>(id), v);
        }
        if (!entries_.emplace(std::move(key), std::move(probs)).second)
          throw ValidationError(where + ": duplicate (user_id, prefix) entry");
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError(where + ": malformed replay entry: " + e.what());
      } catch (const std::logic_error& e) {
        throw ValidationError(where + ": malformed replay entry: " + e.what());
      }
    }
  }

 protected:
  NextTokenDistribution compute(const UserContext& ctx, const PrefixTrie& trie, NodeId node) const override {
    Key key{ctx.user_id, trie.prefix_of(node)};
    auto it = entries_.find(key);
    if (it == entries_.end())
      throw ValidationError("replay has no distribution for user '" + ctx.user_id + "' at step " +
                            std::to_string(key.second.size() + 1));
    NextTokenDistribution d;
    double z = 0.0;
    for (const auto& [tok, p] : it->second) {
      auto child = trie.child(node, tok);
      if (!child || p <= 0.0) continue;
      d.entries.push_back({tok, *child, p});
      z += p;
    }
    if (!(z > 0.0))
      throw ValidationError("replay distribution for user '" + ctx.user_id + "' at step " +
                            std::to_string(key.second.size() + 1) + " has no mass on valid continuations");
    for (auto& e : d.entries) e.prob /= z;
    std::sort(d.entries.begin(), d.entries.end(),
              [](const TokenProb& a, const TokenProb& b) { return a.token < b.token; });
    return d;
  }

 private:
  using Key = std::pair<std::string, std::vector<TokenId>>;
  std::map<Key, std::vector<std::pair<TokenId, double>>> entries_;
};

}  // namespace

std::vector<double> apply_low_ig_bias(std::span<const double> probs, std::span<const double> igs, double gamma) {
  if (probs.size() != igs.size()) throw ValidationError("probability and IG vectors differ in length");
  std::vector<double> out(probs.begin(), probs.end());
  if (out.empty() || gamma == 0.0) return out;
  const auto [lo, hi] = std::minmax_element(igs.begin(), igs.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return out;
  // exp(gamma * (1 - x)) and exp(-gamma * x) agree after normalization.
  double z = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] *= std::exp(-gamma * ((igs[i] - *lo) / range));
    z += out[i];
  }
  for (auto& p : out) p /= z;
  return out;
}

ScorerPtr make_trie_prior_scorer() { return std::make_shared<TriePriorScorer>(); }

ScorerPtr make_personalized_scorer(const PrefixTrie& trie, const InteractionSet& train, double lambda,
                                   ScorerPtr base) {
  return std::make_shared<PersonalizedScorer>(trie, train, lambda, std::move(base));
}

ScorerPtr make_biased_scorer(ScorerPtr base, double gamma) {
  return std::make_shared<BiasedScorer>(std::move(base), gamma);
}

ScorerPtr make_replay_scorer(const std::filesystem::path& path) { return std::make_shared<ReplayScorer>(path); }

}  // namespace igd
