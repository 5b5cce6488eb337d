#include <doctest.h>

#include <map>

#include "igd/error.hpp"
#include "igd/simgen.hpp"
#include "igd/trie.hpp"
#include "support.hpp"

using namespace igd;
using namespace igd::testing;

namespace {

// Brute force: a token is zero-IG when extending the prefix keeps the candidate set.
bool brute_zero(const Catalog& cat, const TokenSeq& tokens, std::size_t pos) {
  std::vector<TokenId> before(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(pos));
  std::vector<TokenId> after(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(pos + 1));
  return candidate_set(cat, before) == candidate_set(cat, after);
}

double zero_fraction(const GeneratedCatalog& g) {
  auto cat = estimate_priors(g.catalog, targets_only({0}));
  auto trie = PrefixTrie::build(cat);
  std::vector<ItemIndex> all(cat.size());
  std::iota(all.begin(), all.end(), 0);
  auto stats = zero_ig_stats(trie, targets_only(all));
  return static_cast<double>(stats.zero_ig_instances) / static_cast<double>(stats.total_token_instances);
}

}  // namespace

TEST_CASE("small catalog with two franchises") {
  CatalogGenConfig cfg;
  cfg.n_items = 4;
  cfg.n_franchises = 2;
  cfg.shared_prefix_len = {1, 1};
  cfg.body_len = {1, 2};
  cfg.filler_rate = 0.0;
  cfg.vocab_size = 5;
  cfg.seed = 3;
  auto g = gen_catalog(cfg);
  const auto& cat = g.catalog;
  REQUIRE(cat.size() == 4);
  CHECK(g.filler_positions.empty());
  CHECK(g.cluster_of == std::vector<std::size_t>{0, 0, 1, 1});
  CHECK(cat.item(0).tokens.front() == cat.item(1).tokens.front());
  CHECK(cat.item(2).tokens.front() == cat.item(3).tokens.front());
  CHECK(cat.item(0).tokens.front() != cat.item(2).tokens.front());

  // The trie's zero-IG count equals a brute-force recount over candidate sets.
  auto trie = PrefixTrie::build(cat);
  auto stats = zero_ig_stats(trie, targets_only({0, 1, 2, 3}));
  std::uint64_t zero = 0, total = 0;
  for (const auto& item : cat.items())
    for (std::size_t pos = 0; pos < item.tokens.size(); ++pos) {
      ++total;
      zero += brute_zero(cat, item.tokens, pos);
    }
  CHECK(stats.total_token_instances == total);
  CHECK(stats.zero_ig_instances == zero);
}

TEST_CASE("generation is deterministic") {
  CatalogGenConfig cfg;
  cfg.filler_rate = 0.3;
  cfg.article_rate = 0.4;
  cfg.seed = 11;
  TempDir dir;
  save_catalog(gen_catalog(cfg).catalog, dir / "a.jsonl");
  save_catalog(gen_catalog(cfg).catalog, dir / "b.jsonl");
  CHECK(read_file(dir / "a.jsonl") == read_file(dir / "b.jsonl"));
  cfg.seed = 12;
  save_catalog(gen_catalog(cfg).catalog, dir / "c.jsonl");
  CHECK(read_file(dir / "a.jsonl") != read_file(dir / "c.jsonl"));
}

TEST_CASE("titles are distinct and fillers are zero-IG") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CatalogGenConfig cfg;
    cfg.n_items = 150;
    cfg.n_franchises = 12;
    cfg.shared_prefix_len = {1, 3};
    cfg.body_len = {1, 3};
    cfg.filler_rate = 0.5;
    cfg.vocab_size = 6;
    cfg.article_rate = 0.5;
    cfg.seed = seed;
    auto g = gen_catalog(cfg);
    std::set<std::string> titles;
    for (const auto& item : g.catalog.items()) titles.insert(item.title);
    CHECK(titles.size() == cfg.n_items);
    CHECK_FALSE(g.filler_positions.empty());

    auto trie = PrefixTrie::build(g.catalog);
    for (auto [item, pos] : g.filler_positions) {
      std::vector<TokenId> prefix(g.catalog.item(item).tokens.begin(),
                                  g.catalog.item(item).tokens.begin() + static_cast<std::ptrdiff_t>(pos));
      auto ig = trie.information_gain(prefix, g.catalog.item(item).tokens[pos]);
      CHECK(ig.is_zero);
      CHECK(brute_zero(g.catalog, g.catalog.item(item).tokens, pos));
    }
  }
}

TEST_CASE("fillers raise the zero-IG share") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CatalogGenConfig cfg;
    cfg.n_items = 120;
    cfg.n_franchises = 15;
    cfg.shared_prefix_len = {1, 2};
    cfg.body_len = {2, 3};
    cfg.vocab_size = 8;
    cfg.seed = seed;
    cfg.filler_rate = 0.0;
    const double none = zero_fraction(gen_catalog(cfg));
    cfg.filler_rate = 1.0;
    auto full = gen_catalog(cfg);
    CHECK_FALSE(full.filler_positions.empty());
    CHECK(zero_fraction(full) > none);
  }
}

TEST_CASE("infeasible catalogs are rejected") {
  CatalogGenConfig cfg;
  cfg.n_items = 30;
  cfg.n_franchises = 1;
  cfg.body_len = {1, 2};
  cfg.vocab_size = 5;
  CHECK_THROWS_AS(gen_catalog(cfg), ValidationError);
  cfg.vocab_size = 6;
  CHECK_NOTHROW(gen_catalog(cfg));
  cfg.n_franchises = 40;
  CHECK_THROWS_AS(gen_catalog(cfg), ValidationError);
  cfg.n_franchises = 2;
  cfg.filler_rate = 1.5;
  CHECK_THROWS_AS(gen_catalog(cfg), ValidationError);
}

TEST_CASE("fig1 preset carries the token taxonomy") {
  auto g = fig1_catalog(100, 2);
  auto cat = estimate_priors(g.catalog, targets_only({0}));
  auto trie = PrefixTrie::build(cat);
  const auto& vocab = cat.vocab();
  const TokenId the = *vocab.find("The");
  const TokenId legend = *vocab.find("Legend");
  const TokenId of = *vocab.find("of");
  const TokenId zelda = *vocab.find("Zelda");
  const TokenId super = *vocab.find("Super");
  const TokenId mario = *vocab.find("Mario");

  // "The" is shared by many items; "Super" splits further; "of" and "Zelda" are forced.
  const NodeId n_the = trie.walk(std::vector<TokenId>{the});
  CHECK(trie.node(n_the).child_count > 3);
  CHECK_FALSE(trie.information_gain({}, the).is_zero);
  CHECK(trie.information_gain(std::vector<TokenId>{the, legend}, of).is_zero);
  CHECK(trie.information_gain(std::vector<TokenId>{the, legend, of}, zelda).is_zero);
  CHECK_FALSE(trie.information_gain(std::vector<TokenId>{super}, mario).is_zero);
  CHECK(trie.information_gain(std::vector<TokenId>{the, legend}, of).value == 0.0);

  for (auto [item, pos] : g.filler_positions) {
    const auto& toks = cat.item(item).tokens;
    std::vector<TokenId> prefix(toks.begin(), toks.begin() + static_cast<std::ptrdiff_t>(pos));
    CHECK(trie.information_gain(prefix, toks[pos]).is_zero);
  }
  CHECK(g.cluster_of.size() == cat.size());
}

TEST_CASE("interaction splits") {
  auto g = gen_catalog(CatalogGenConfig{});
  InteractionGenConfig cfg;
  cfg.n_users = 10;
  cfg.history_len = {10, 10};
  cfg.seed = 4;
  auto data = gen_interactions(cfg, g.catalog, g.cluster_of);
  CHECK(data.train.records.size() == 80);
  CHECK(data.valid.records.size() == 10);
  CHECK(data.test.records.size() == 10);
  CHECK(data.train.split == Split::train);
  CHECK(data.test.split == Split::test);
  for (const auto& r : data.test.records) {
    CHECK(r.target < g.catalog.size());
    CHECK_FALSE(r.history.empty());
    CHECK(r.history.size() <= cfg.max_history);
  }

  auto again = gen_interactions(cfg, g.catalog, g.cluster_of);
  TempDir dir;
  save_interactions(data.train, g.catalog, dir / "a.tsv");
  save_interactions(again.train, g.catalog, dir / "b.tsv");
  CHECK(read_file(dir / "a.tsv") == read_file(dir / "b.tsv"));
  auto back = load_interactions(dir / "a.tsv", Split::train, g.catalog);
  CHECK(back.records.size() == 80);
}

TEST_CASE("unskewed popularity is uniform") {
  CatalogGenConfig ccfg;
  ccfg.n_items = 20;
  ccfg.n_franchises = 4;
  auto g = gen_catalog(ccfg);
  InteractionGenConfig cfg;
  cfg.n_users = 2000;
  cfg.history_len = {10, 10};
  cfg.zipf_s = 0.0;
  cfg.cluster_affinity = 0.0;
  auto data = gen_interactions(cfg, g.catalog, g.cluster_of);
  std::vector<double> counts(20, 0.0);
  double n = 0.0;
  for (const auto* set : {&data.train, &data.valid, &data.test})
    for (const auto& r : set->records) {
      counts[r.target] += 1.0;
      n += 1.0;
    }
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - n / 20.0) * (c - n / 20.0) / (n / 20.0);
  MESSAGE("chi-square over 20 items with " << n << " draws: " << chi2);
  // 19 degrees of freedom; 43.8 is the 0.999 quantile.
  CHECK(chi2 < 43.8);

  cfg.zipf_s = 1.2;
  auto skewed = gen_interactions(cfg, g.catalog, g.cluster_of);
  std::vector<double> sk(20, 0.0);
  for (const auto& r : skewed.train.records) sk[r.target] += 1.0;
  CHECK(*std::max_element(sk.begin(), sk.end()) > 3.0 * *std::min_element(sk.begin(), sk.end()));
}

TEST_CASE("cluster affinity keeps users inside a franchise") {
  auto g = gen_catalog(CatalogGenConfig{});
  InteractionGenConfig cfg;
  cfg.n_users = 300;
  cfg.cluster_affinity = 1.0;
  auto data = gen_interactions(cfg, g.catalog, g.cluster_of);
  for (const auto& r : data.train.records) CHECK(g.cluster_of[r.history.back()] == g.cluster_of[r.target]);
}

TEST_CASE("benchmark is reproducible") {
  auto a = make_benchmark(7);
  auto b = make_benchmark(7);
  CHECK(a.catalog.catalog.hash() == b.catalog.catalog.hash());
  CHECK(a.data.train.records.size() == b.data.train.records.size());
  CHECK(a.data.train.records.size() == 8 * a.data.test.records.size());
}
