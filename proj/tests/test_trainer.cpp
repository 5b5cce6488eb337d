#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "igd/error.hpp"
#include "igd/trainer.hpp"
#include "support.hpp"

using namespace igd;
using namespace igd::testing;

namespace {

// Cross-entropy of an explicit full softmax: logits of every class, target index.
double full_softmax_ce(const std::vector<double>& logits, std::size_t target) {
  double z = 0.0;
  for (double l : logits) z += std::exp(l);
  return std::log(z) - logits[target];
}

// Samples `n` targets from the catalog priors.
InteractionSet sample_targets(const Catalog& cat, std::size_t n, std::uint64_t seed) {
  std::vector<double> w;
  for (const auto& it : cat.items()) w.push_back(it.prior);
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  std::mt19937_64 rng(seed);
  std::vector<ItemIndex> targets(n);
  for (auto& t : targets) t = pick(rng);
  return targets_only(targets);
}

// Catalog with franchise filler words: many single-continuation edges.
Catalog filler_catalog() {
  return make_catalog({"The Legend of Zelda Ocarina", "The Legend of Zelda Majora", "The Legend of Zelda Breath",
                       "Super Mario Bros Deluxe", "Super Mario Galaxy", "Super Mario Odyssey", "Metroid Prime",
                       "Metroid Dread", "Kirby Star Allies", "Kirby Planet Robobot"});
}

InteractionSet uniform_targets(std::size_t items, std::size_t repeats) {
  std::vector<ItemIndex> t;
  for (std::size_t r = 0; r < repeats; ++r)
    for (ItemIndex i = 0; i < items; ++i) t.push_back(i);
  return targets_only(t);
}

}  // namespace

TEST_CASE("node loss gradient matches finite differences") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_int_distribution<int> kdist(1, 6);
  std::uniform_int_distribution<int> odist(0, 5);
  const double h = 1e-5;
  for (int trial = 0; trial < 300; ++trial) {
    const int k = kdist(rng);
    const std::size_t off = static_cast<std::size_t>(odist(rng));
    std::vector<double> child(k);
    for (auto& c : child) c = u(rng);
    const double off_logit = u(rng);
    const std::size_t target = static_cast<std::size_t>(trial) % k;
    const NodeLoss nl = node_loss(child, off_logit, off, target);

    // Independent full-softmax oracle with off copies as distinct classes.
    auto expand = [&](const std::vector<double>& c, double o) {
      std::vector<double> all(c);
      all.insert(all.end(), off, o);
      return all;
    };
    CHECK(nl.loss == doctest::Approx(full_softmax_ce(expand(child, off_logit), target)).epsilon(1e-12));
    CHECK(nl.loss >= 0.0);
    for (int j = 0; j < k; ++j) {
      auto plus = child, minus = child;
      plus[j] += h;
      minus[j] -= h;
      const double fd = (full_softmax_ce(expand(plus, off_logit), target) -
                         full_softmax_ce(expand(minus, off_logit), target)) / (2 * h);
      CHECK(std::abs(nl.child_grad[j] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
    if (off > 0) {
      // Perturb one off copy only.
      auto all = expand(child, off_logit);
      auto plus = all, minus = all;
      plus[k] += h;
      minus[k] -= h;
      const double fd = (full_softmax_ce(plus, target) - full_softmax_ce(minus, target)) / (2 * h);
      CHECK(std::abs(nl.off_grad - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
  CHECK_THROWS_AS(node_loss(std::vector<double>{0.0}, 0.0, 0, 1), ValidationError);
}

TEST_CASE("one SGD step on a two-way node") {
  auto trie = PrefixTrie::build(make_catalog({"a", "b"}));
  TabularLM model(trie, 1.0, VocabMode::constrained);
  const NodeId a = *trie.child(PrefixTrie::root(), *trie.catalog().vocab().find("a"));
  const NodeId b = *trie.child(PrefixTrie::root(), *trie.catalog().vocab().find("b"));
  const std::vector<TokenInstance> one{{PrefixTrie::root(), a, false}};
  auto g = batch_gradient(model, trie, one, std::vector<double>{1.0});
  CHECK(g.omega == 1.0);
  CHECK(g.off.empty());
  std::map<NodeId, double> grad(g.edges.begin(), g.edges.end());
  CHECK(grad.at(a) == -0.5);
  CHECK(grad.at(b) == 0.5);
  for (auto [node, d] : g.edges) model.mutable_edge_logits()[node - 1] -= model.learning_rate() * d;
  CHECK(model.logit(a) == 0.5);
  CHECK(model.logit(b) == -0.5);
}

TEST_CASE("weighted gradient equals per-token gradients scaled by w over omega") {
  auto trie = PrefixTrie::build(filler_catalog());
  TabularLM model(trie, 0.5);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n01;
  for (auto& l : model.mutable_edge_logits()) l = n01(rng);
  for (auto& l : model.mutable_off_logits()) l = n01(rng);

  auto data = uniform_targets(trie.catalog().size(), 1);
  const auto tokens = token_instances(trie, data.records);
  const auto scheme = WeightScheme::binary(0.2);
  std::vector<double> w;
  for (const auto& t : tokens) w.push_back(tuning_weight(trie.node(t.target).ig, scheme));
  const double omega = std::accumulate(w.begin(), w.end(), 0.0);

  std::map<NodeId, double> expected_edges, expected_off;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto single = batch_gradient(model, trie, std::span(&tokens[i], 1), std::vector<double>{1.0});
    for (auto [n, d] : single.edges) expected_edges[n] += d * w[i] / omega;
    for (auto [n, d] : single.off) expected_off[n] += d * w[i] / omega;
  }
  auto g = batch_gradient(model, trie, tokens, w);
  CHECK(g.omega == doctest::Approx(omega).epsilon(1e-14));
  REQUIRE(g.edges.size() == expected_edges.size());
  for (auto [n, d] : g.edges) CHECK(d == doctest::Approx(expected_edges.at(n)).epsilon(1e-12));
  REQUIRE(g.off.size() == expected_off.size());
  for (auto [n, d] : g.off) CHECK(d == doctest::Approx(expected_off.at(n)).epsilon(1e-12));

  std::vector<double> zeros(tokens.size(), 0.0);
  CHECK_THROWS_AS(batch_gradient(model, trie, tokens, zeros), ValidationError);
}

TEST_CASE("token instances carry the zero-IG flag") {
  auto trie = PrefixTrie::build(toy_catalog());
  auto toks = token_instances(trie, targets_only({0, 2}).records);
  REQUIRE(toks.size() == 5);
  CHECK(toks[0].node == PrefixTrie::root());
  CHECK_FALSE(toks[0].zero_ig);  // Super
  CHECK_FALSE(toks[1].zero_ig);  // Mario
  CHECK(toks[2].zero_ig);        // EOS
  CHECK_FALSE(toks[3].zero_ig);  // Zelda
  CHECK(toks[4].zero_ig);        // EOS
}

TEST_CASE("training is deterministic and beta=1 matches the plain objective") {
  auto trie = PrefixTrie::build(filler_catalog());
  auto data = sample_targets(trie.catalog(), 200, 5);
  TrainConfig plain{2, 16, std::nullopt, 99};
  TrainConfig ones = plain;
  ones.scheme = WeightScheme::binary(1.0);
  TrainConfig linear_ones = plain;
  linear_ones.scheme = WeightScheme::linear(1.0, global_ig_max(trie));

  TabularLM m1(trie, 0.3), m2(trie, 0.3), m3(trie, 0.3), m4(trie, 0.3);
  auto t1 = train(m1, data, trie, plain);
  auto t2 = train(m2, data, trie, plain);
  auto t3 = train(m3, data, trie, ones);
  auto t4 = train(m4, data, trie, linear_ones);
  CHECK(t1.records == t2.records);
  CHECK(m1 == m2);
  CHECK(t1.records == t3.records);
  CHECK(m1 == m3);
  CHECK(t1.records == t4.records);
  CHECK(m1 == m4);
  CHECK(t1.records.size() == 2 * ((200 + 15) / 16));

  TabularLM m5(trie, 0.3);
  TrainConfig other = plain;
  other.shuffle_seed = 100;
  auto t5 = train(m5, data, trie, other);
  CHECK_FALSE(t1.records == t5.records);

  for (const auto& r : t1.records) {
    CHECK(r.loss_overall >= 0.0);
    CHECK(r.loss_zero_ig >= 0.0);
    CHECK(r.loss_nonzero_ig >= 0.0);
  }
}

TEST_CASE("training rejects bad inputs") {
  auto trie = PrefixTrie::build(toy_catalog());
  TabularLM model(trie, 0.1);
  CHECK_THROWS_AS(train(model, InteractionSet{}, trie, TrainConfig{}), ValidationError);
  auto data = targets_only({0});
  CHECK_THROWS_AS(train(model, data, trie, TrainConfig{0, 1}), ValidationError);
  CHECK_THROWS_AS(train(model, data, trie, TrainConfig{1, 0}), ValidationError);
  CHECK_THROWS_AS(train(model, targets_only({7}), trie, TrainConfig{}), ValidationError);
  CHECK_THROWS_AS(TabularLM(trie, 0.0), ValidationError);
  auto other = PrefixTrie::build(make_catalog({"x", "y"}));
  CHECK_THROWS_AS(train(model, data, other, TrainConfig{}), ValidationError);
}

TEST_CASE("untrained scorer is uniform") {
  auto trie = PrefixTrie::build(filler_catalog());
  auto scorer = as_scorer(TabularLM(trie, 0.1));
  CHECK(scorer->context_free());
  const UserContext ctx;
  for (NodeId id = 0; id < trie.node_count(); ++id) {
    if (trie.node(id).is_leaf()) {
      CHECK_THROWS_AS(scorer->distribution(ctx, trie, id), ValidationError);
      continue;
    }
    auto d = scorer->distribution(ctx, trie, id);
    REQUIRE(d.entries.size() == trie.node(id).child_count);
    for (const auto& e : d.entries) CHECK(e.prob == doctest::Approx(1.0 / trie.node(id).child_count));
  }
}

TEST_CASE("training converges to child-mass ratios") {
  std::vector<std::string> titles{"a x", "a y", "a z w", "b", "b x", "c x y", "c x z", "c y", "d", "e f g"};
  std::vector<double> priors{0.2, 0.05, 0.1, 0.08, 0.12, 0.03, 0.07, 0.15, 0.15, 0.05};
  auto trie = PrefixTrie::build(make_catalog(titles, priors));
  auto data = sample_targets(trie.catalog(), 4000, 17);
  // The maximum-likelihood target is the empirical child-count ratio.
  auto empirical = PrefixTrie::build(trie.catalog());
  {
    std::vector<double> counts(titles.size(), 0.0);
    for (const auto& r : data.records) counts[r.target] += 1.0;
    for (auto& c : counts) c /= static_cast<double>(data.records.size());
    Catalog cat = trie.catalog();
    cat.assign_priors(counts, std::vector<std::uint64_t>(counts.size(), 0));
    empirical = PrefixTrie::build(cat);
  }

  for (VocabMode mode : {VocabMode::full, VocabMode::constrained}) {
    TabularLM model(trie, 1.0, mode);
    train(model, data, trie, TrainConfig{200, 64, std::nullopt, 3});
    auto scorer = as_scorer(model);
    double worst_true = 0.0, worst_emp = 0.0;
    for (NodeId id = 0; id < trie.node_count(); ++id) {
      const auto& n = trie.node(id);
      if (n.is_leaf()) continue;
      auto d = scorer->distribution({}, trie, id);
      double kl_true = 0.0, kl_emp = 0.0;
      for (NodeId c = n.first_child; c < n.first_child + n.child_count; ++c) {
        const double p = trie.node(c).mass / n.mass;
        const double q = empirical.node(c).mass / empirical.node(id).mass;
        const double m = d.prob(trie.node(c).token);
        kl_true += p * std::log(p / m);
        kl_emp += q * std::log(q / m);
      }
      worst_true = std::max(worst_true, kl_true);
      worst_emp = std::max(worst_emp, kl_emp);
    }
    CHECK(worst_true < 0.01);
    CHECK(worst_emp < 5e-3);
  }
}

TEST_CASE("loss split report") {
  TempDir dir;
  LossTrace trace;
  trace.records.push_back({1, 1, 0.5, 1.25, 0.875, 2, 2});
  loss_split_report(trace, dir / "one.csv");
  CHECK(read_file(dir / "one.csv") == "epoch,step,loss_zero_ig,loss_nonzero_ig,loss_overall\n1,1,0.5,1.25,0.875\n");

  trace.records.push_back({1, 2, 0.0, 0.75, 0.75, 0, 3});
  loss_split_report(trace, dir / "two.csv");
  std::istringstream lines(read_file(dir / "two.csv"));
  std::string line;
  std::getline(lines, line);
  std::getline(lines, line);
  std::getline(lines, line);
  CHECK(line == "1,2,,0.75,0.75");

  CHECK_THROWS_AS(loss_split_report(LossTrace{}, dir / "empty.csv"), ValidationError);
  CHECK_THROWS_AS(loss_split_report(trace, dir / "no" / "dir.csv"), RuntimeError);
}

TEST_CASE("zero-IG tokens are fitted faster, and IGD slows them down") {
  auto trie = PrefixTrie::build(filler_catalog());
  auto data = sample_targets(trie.catalog(), 400, 11);
  const TrainConfig standard{1, 16, std::nullopt, 1};
  TrainConfig igd = standard;
  igd.scheme = WeightScheme::binary(0.2);

  TabularLM m_std(trie, 0.5), m_igd(trie, 0.5);
  auto t_std = train(m_std, data, trie, standard);
  auto t_igd = train(m_igd, data, trie, igd);
  REQUIRE(t_std.records.size() == 25);

  // Both classes start from log V; the zero-IG curve drops below from step 2 on.
  CHECK(t_std.records[0].loss_zero_ig == doctest::Approx(t_std.records[0].loss_nonzero_ig));
  std::size_t below = 0, slower = 0;
  for (std::size_t s = 1; s < t_std.records.size(); ++s) {
    const auto& a = t_std.records[s];
    const auto& b = t_igd.records[s];
    if (a.loss_zero_ig < a.loss_nonzero_ig) ++below;
    if (b.loss_zero_ig > a.loss_zero_ig) ++slower;
  }
  CHECK(below == t_std.records.size() - 1);
  CHECK(slower == t_std.records.size() - 1);
}

TEST_CASE("model snapshot round trip") {
  TempDir dir;
  auto trie = PrefixTrie::build(filler_catalog());
  TabularLM model(trie, 0.4, VocabMode::full, 12);
  train(model, sample_targets(trie.catalog(), 50, 2), trie, TrainConfig{1, 8, std::nullopt, 0});
  save_model(model, trie, dir / "m.json");
  auto back = load_model(dir / "m.json", trie);
  CHECK(back == model);

  auto other = PrefixTrie::build(toy_catalog());
  CHECK_THROWS_AS(load_model(dir / "m.json", other), ValidationError);
  write_file(dir / "bad.json", "{\"format\": \"igd-tabular\"}");
  CHECK_THROWS_AS(load_model(dir / "bad.json", trie), ValidationError);
}
