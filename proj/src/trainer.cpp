#include "igd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "igd/error.hpp"
#include "igd/numfmt.hpp"

namespace igd {

std::string to_string(VocabMode mode) { return mode == VocabMode::full ? "full" : "constrained"; }

VocabMode parse_vocab_mode(std::string_view name) {
  if (name == "full") return VocabMode::full;
  if (name == "constrained") return VocabMode::constrained;
  throw ValidationError("unknown vocab mode '" + std::string(name) + "'");
}

NodeLoss node_loss(std::span<const double> child_logits, double off_logit, std::size_t off_count,
                   std::size_t target) {
  if (target >= child_logits.size()) throw ValidationError("target outside the node's continuations");
  double top = *std::max_element(child_logits.begin(), child_logits.end());
  if (off_count > 0) top = std::max(top, off_logit);
  double z = 0.0;
  for (double l : child_logits) z += std::exp(l - top);
  const double off_exp = off_count > 0 ? std::exp(off_logit - top) : 0.0;
  z += static_cast<double>(off_count) * off_exp;

  NodeLoss out;
  out.loss = std::log(z) - (child_logits[target] - top);
  out.child_grad.resize(child_logits.size());
  for (std::size_t k = 0; k < child_logits.size(); ++k)
    out.child_grad[k] = std::exp(child_logits[k] - top) / z - (k == target ? 1.0 : 0.0);
  out.off_grad = off_exp / z;
  return out;
}

TabularLM::TabularLM(const PrefixTrie& trie, double learning_rate, VocabMode mode, std::uint64_t seed)
    : edge_logits_(trie.edge_count(), 0.0), off_logits_(trie.node_count(), 0.0), learning_rate_(learning_rate),
      mode_(mode), seed_(seed), catalog_hash_(trie.catalog_hash()), vocab_size_(trie.catalog().vocab().size()) {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ValidationError("learning rate must be positive");
}

void TabularLM::check_trie(const PrefixTrie& trie) const {
  if (trie.catalog_hash() != catalog_hash_ || trie.edge_count() != edge_logits_.size())
    throw ValidationError("model was built for a different trie");
}

std::size_t TabularLM::off_count(const PrefixTrie& trie, NodeId node) const {
  if (mode_ == VocabMode::constrained) return 0;
  return vocab_size_ - trie.node(node).child_count;
}

NodeLoss TabularLM::loss_at(const PrefixTrie& trie, NodeId node, NodeId target_child) const {
  const auto& n = trie.node(node);
  if (target_child < n.first_child || target_child >= n.first_child + n.child_count)
    throw ValidationError("target is not a continuation of the node");
  std::span<const double> logits(edge_logits_.data() + (n.first_child - 1), n.child_count);
  return node_loss(logits, off_logits_[node], off_count(trie, node), target_child - n.first_child);
}

std::vector<double> TabularLM::continuation_probs(const PrefixTrie& trie, NodeId node) const {
  const auto& n = trie.node(node);
  std::vector<double> out(n.child_count);
  if (n.child_count == 0) return out;
  const double* logits = edge_logits_.data() + (n.first_child - 1);
  const double top = *std::max_element(logits, logits + n.child_count);
  double z = 0.0;
  for (std::uint32_t k = 0; k < n.child_count; ++k) z += (out[k] = std::exp(logits[k] - top));
  for (auto& p : out) p /= z;
  return out;
}

std::vector<TokenInstance> token_instances(const PrefixTrie& trie, std::span<const Interaction> records) {
  std::vector<TokenInstance> out;
  std::vector<NodeId> path;
  for (const auto& rec : records) {
    if (rec.target >= trie.catalog().size()) throw ValidationError("training target outside the trie");
    path.clear();
    for (NodeId at = trie.leaf_of(rec.target); at != PrefixTrie::root(); at = trie.node(at).parent)
      path.push_back(at);
    for (auto it = path.rbegin(); it != path.rend(); ++it)
      out.push_back({trie.node(*it).parent, *it, trie.node(*it).ig.is_zero});
  }
  return out;
}

namespace {

// Dense gradient buffers with a list of touched nodes for cheap resets.
struct Workspace {
  std::vector<double> edge_grad;
  std::vector<double> off_grad;
  std::vector<char> touched;
  std::vector<NodeId> touched_nodes;

  explicit Workspace(const PrefixTrie& trie)
      : edge_grad(trie.edge_count(), 0.0), off_grad(trie.node_count(), 0.0), touched(trie.node_count(), 0) {}

  void reset(const PrefixTrie& trie) {
    for (NodeId node : touched_nodes) {
      const auto& n = trie.node(node);
      for (NodeId c = n.first_child; c < n.first_child + n.child_count; ++c) edge_grad[c - 1] = 0.0;
      off_grad[node] = 0.0;
      touched[node] = 0;
    }
    touched_nodes.clear();
  }
};

// Accumulates sum(w_t * grad_t) into `ws`; returns Omega and each token's loss.
double accumulate(const TabularLM& model, const PrefixTrie& trie, std::span<const TokenInstance> tokens,
                  std::span<const double> weights, Workspace& ws, std::vector<double>* losses) {
  if (tokens.size() != weights.size()) throw ValidationError("token and weight counts differ");
  double omega = 0.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& tok = tokens[i];
    const double w = weights[i];
    if (w < 0.0) throw ValidationError("negative token weight");
    const NodeLoss nl = model.loss_at(trie, tok.node, tok.target);
    if (losses) losses->push_back(nl.loss);
    omega += w;
    const auto& n = trie.node(tok.node);
    if (!ws.touched[tok.node]) {
      ws.touched[tok.node] = 1;
      ws.touched_nodes.push_back(tok.node);
    }
    for (std::uint32_t k = 0; k < n.child_count; ++k) ws.edge_grad[n.first_child - 1 + k] += w * nl.child_grad[k];
    ws.off_grad[tok.node] += w * nl.off_grad;
  }
  return omega;
}

}  // namespace

BatchGradient batch_gradient(const TabularLM& model, const PrefixTrie& trie, std::span<const TokenInstance> tokens,
                             std::span<const double> weights) {
  model.check_trie(trie);
  Workspace ws(trie);
  BatchGradient out;
  out.omega = accumulate(model, trie, tokens, weights, ws, nullptr);
  if (!(out.omega > 0.0)) throw ValidationError("token weights sum to zero");
  auto nodes = ws.touched_nodes;
  std::sort(nodes.begin(), nodes.end());
  for (NodeId node : nodes) {
    const auto& n = trie.node(node);
    for (NodeId c = n.first_child; c < n.first_child + n.child_count; ++c)
      out.edges.emplace_back(c, ws.edge_grad[c - 1] / out.omega);
    if (model.off_count(trie, node) > 0) out.off.emplace_back(node, ws.off_grad[node] / out.omega);
  }
  return out;
}

LossTrace train(TabularLM& model, const InteractionSet& data, const PrefixTrie& trie, const TrainConfig& cfg) {
  model.check_trie(trie);
  if (data.records.empty()) throw ValidationError("training set is empty");
  if (cfg.epochs < 1) throw ValidationError("epochs must be >= 1");
  if (cfg.batch_size < 1) throw ValidationError("batch size must be >= 1");
  if (cfg.scheme) cfg.scheme->validate();

  std::vector<std::size_t> order(data.records.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.shuffle_seed);
  Workspace ws(trie);
  LossTrace trace;
  std::vector<Interaction> batch;
  std::vector<double> weights, losses;
  auto& edge_logits = model.mutable_edge_logits();
  auto& off_logits = model.mutable_off_logits();
  const double lr = model.learning_rate();
  int step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      batch.clear();
      for (std::size_t k = start; k < std::min(order.size(), start + cfg.batch_size); ++k)
        batch.push_back(data.records[order[k]]);
      const auto tokens = token_instances(trie, batch);
      weights.clear();
      for (const auto& tok : tokens)
        weights.push_back(cfg.scheme ? tuning_weight(trie.node(tok.target).ig, *cfg.scheme) : 1.0);
      losses.clear();
      const double omega = accumulate(model, trie, tokens, weights, ws, &losses);
      if (!(omega > 0.0)) throw ValidationError("token weights of a batch sum to zero");

      LossRecord rec;
      rec.epoch = epoch;
      rec.step = ++step;
      double zero_sum = 0.0, nonzero_sum = 0.0;
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i].zero_ig) {
          zero_sum += losses[i];
          ++rec.zero_ig_tokens;
        } else {
          nonzero_sum += losses[i];
          ++rec.nonzero_ig_tokens;
        }
      }
      if (rec.zero_ig_tokens) rec.loss_zero_ig = zero_sum / static_cast<double>(rec.zero_ig_tokens);
      if (rec.nonzero_ig_tokens) rec.loss_nonzero_ig = nonzero_sum / static_cast<double>(rec.nonzero_ig_tokens);
      rec.loss_overall = (zero_sum + nonzero_sum) / static_cast<double>(tokens.size());
      trace.records.push_back(rec);

      for (NodeId node : ws.touched_nodes) {
        const auto& n = trie.node(node);
        for (NodeId c = n.first_child; c < n.first_child + n.child_count; ++c)
          edge_logits[c - 1] -= lr * (ws.edge_grad[c - 1] / omega);
        off_logits[node] -= lr * (ws.off_grad[node] / omega);
      }
      ws.reset(trie);
    }
  }
  return trace;
}

namespace {

class TabularScorer final : public Scorer {
 public:
  explicit TabularScorer(TabularLM model) : model_(std::move(model)) {}
  bool context_free() const override { return true; }

 protected:
  NextTokenDistribution compute(const UserContext&, const PrefixTrie& trie, NodeId node) const override {
    model_.check_trie(trie);
    const auto probs = model_.continuation_probs(trie, node);
    const auto& n = trie.node(node);
    NextTokenDistribution d;
    d.entries.reserve(n.child_count);
    for (std::uint32_t k = 0; k < n.child_count; ++k)
      if (probs[k] > 0.0) d.entries.push_back({trie.node(n.first_child + k).token, n.first_child + k, probs[k]});
    return d;
  }

 private:
  TabularLM model_;
};

}  // namespace

ScorerPtr as_scorer(TabularLM model) { return std::make_shared<TabularScorer>(std::move(model)); }

void loss_split_report(const LossTrace& trace, const std::filesystem::path& path) {
  if (trace.records.empty()) throw ValidationError("loss trace is empty");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << "epoch,step,loss_zero_ig,loss_nonzero_ig,loss_overall\n";
  for (const auto& r : trace.records) {
    out << r.epoch << ',' << r.step << ',';
    if (r.zero_ig_tokens) out << detail::shortest(r.loss_zero_ig);
    out << ',';
    if (r.nonzero_ig_tokens) out << detail::shortest(r.loss_nonzero_ig);
    out << ',' << detail::shortest(r.loss_overall) << '\n';
  }
  if (!out) throw RuntimeError("write failed for " + path.string());
}

void save_model(const TabularLM& model, const PrefixTrie& trie, const std::filesystem::path& path) {
  model.check_trie(trie);
  nlohmann::ordered_json doc;
  doc["format"] = "igd-tabular";
  doc["version"] = 1;
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(model.catalog_hash()));
  doc["catalog_hash"] = hash;
  doc["vocab_mode"] = to_string(model.vocab_mode());
  doc["vocab_size"] = model.vocab_size();
  doc["learning_rate"] = model.learning_rate();
  doc["seed"] = model.seed();
  std::vector<NodeId> node;
  std::vector<TokenId> token;
  for (NodeId c = 1; c < trie.node_count(); ++c) {
    node.push_back(trie.node(c).parent);
    token.push_back(trie.node(c).token);
  }
  doc["edges"] = {{"node", node}, {"token", token}, {"logit", model.edge_logits()}};
  doc["off_logit"] = model.off_logits();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << doc.dump() << '\n';
  if (!out) throw RuntimeError("write failed for " + path.string());
}

TabularLM load_model(const std::filesystem::path& path, const PrefixTrie& trie) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    auto doc = nlohmann::json::parse(in);
    if (doc.at("format") != "igd-tabular" || doc.at("version") != 1)
      throw ValidationError(path.string() + ": not a tabular model snapshot");
    if (std::stoull(doc.at("catalog_hash").get<std::string>(), nullptr, 16) != trie.catalog_hash())
      throw ValidationError(path.string() + ": model was trained on a different catalog");
    TabularLM model(trie, doc.at("learning_rate").get<double>(),
                    parse_vocab_mode(doc.at("vocab_mode").get<std::string>()), doc.at("seed").get<std::uint64_t>());
    const auto nodes = doc.at("edges").at("node").get<std::vector<NodeId>>();
    const auto tokens = doc.at("edges").at("token").get<std::vector<TokenId>>();
    const auto logits = doc.at("edges").at("logit").get<std::vector<double>>();
    const auto off = doc.at("off_logit").get<std::vector<double>>();
    if (nodes.size() != trie.edge_count() || tokens.size() != nodes.size() || logits.size() != nodes.size() ||
        off.size() != trie.node_count() || doc.at("vocab_size").get<std::size_t>() != model.vocab_size())
      throw ValidationError(path.string() + ": model shape does not match the trie");
    auto& edge_logits = model.mutable_edge_logits();
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      auto child = trie.child(nodes[k], tokens[k]);
      if (!child) throw ValidationError(path.string() + ": edge (" + std::to_string(nodes[k]) + ", " +
                                        std::to_string(tokens[k]) + ") is not in the trie");
      edge_logits[*child - 1] = logits[k];
    }
    model.mutable_off_logits() = off;
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": malformed model snapshot: " + e.what());
  } catch (const std::logic_error& e) {
    throw ValidationError(path.string() + ": malformed model snapshot: " + e.what());
  }
}

}  // namespace igd
