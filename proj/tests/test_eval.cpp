#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "igd/error.hpp"
#include "igd/eval.hpp"
#include "support.hpp"

using namespace igd;
using namespace igd::testing;

namespace {

RankedList list_of(const Catalog& cat, std::vector<ItemIndex> items, std::vector<double> scores = {}) {
  RankedList l;
  for (std::size_t i = 0; i < items.size(); ++i)
    l.entries.push_back({cat.item(items[i]).item_id, items[i], scores.empty() ? -static_cast<double>(i) : scores[i]});
  return l;
}

const std::vector<int> kKs{5, 10};

}  // namespace

TEST_CASE("hit ratio and NDCG") {
  auto cat = make_catalog({"a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l"});
  std::vector<RankedList> lists{list_of(cat, {3, 1, 2})};
  auto first = hr_ndcg(lists, std::vector<ItemIndex>{3}, kKs);
  CHECK(first.hr[5] == 1.0);
  CHECK(first.ndcg[5] == 1.0);

  auto third = hr_ndcg(lists, std::vector<ItemIndex>{2}, kKs);
  CHECK(third.hr[5] == 1.0);
  CHECK(third.ndcg[5] == 0.5);

  std::vector<RankedList> long_list{list_of(cat, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9})};
  auto miss = hr_ndcg(long_list, std::vector<ItemIndex>{11}, kKs);
  CHECK(miss.hr[10] == 0.0);
  CHECK(miss.ndcg[10] == 0.0);

  auto seventh = hr_ndcg(long_list, std::vector<ItemIndex>{6}, kKs);
  CHECK(seventh.hr[5] == 0.0);
  CHECK(seventh.hr[10] == 1.0);
  CHECK(seventh.ndcg[10] == doctest::Approx(1.0 / 3.0));
  CHECK(seventh.n_users == 1);

  CHECK_THROWS_AS(hr_ndcg(lists, std::vector<ItemIndex>{}, kKs), ValidationError);
  CHECK_THROWS_AS(hr_ndcg(lists, std::vector<ItemIndex>{1}, std::vector<int>{0}), ValidationError);
}

TEST_CASE("metric bounds hold on random rankings") {
  std::mt19937_64 rng(6);
  auto cat = make_catalog({"a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l", "m", "n", "o"});
  const std::vector<int> ks{1, 3, 5, 10, 20};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<RankedList> lists;
    std::vector<ItemIndex> truths;
    for (int u = 0; u < 20; ++u) {
      std::vector<ItemIndex> items(cat.size());
      std::iota(items.begin(), items.end(), 0);
      std::shuffle(items.begin(), items.end(), rng);
      items.resize(rng() % 12);
      lists.push_back(list_of(cat, items));
      truths.push_back(rng() % cat.size());
    }
    auto r = hr_ndcg(lists, truths, ks);
    double prev_hr = 0.0, prev_ndcg = 0.0;
    for (int k : ks) {
      CHECK(r.ndcg[k] <= r.hr[k]);
      CHECK(r.hr[k] <= 1.0);
      CHECK(r.hr[k] >= prev_hr);
      CHECK(r.ndcg[k] >= prev_ndcg);
      prev_hr = r.hr[k];
      prev_ndcg = r.ndcg[k];
    }
    auto again = hr_ndcg(lists, truths, ks);
    CHECK(again.hr == r.hr);
    CHECK(again.ndcg == r.ndcg);
  }
}

TEST_CASE("entropy gap") {
  auto trie = PrefixTrie::build(toy_catalog());
  const auto& cat = trie.catalog();
  const double l3 = std::log(3.0);

  // Ideal top-1 predictions: zero gap at every step.
  std::vector<RankedList> ideal{list_of(cat, {0}), list_of(cat, {2})};
  auto zero = entropy_gap(ideal, std::vector<ItemIndex>{0, 2}, trie);
  REQUIRE(zero.steps.size() == 3);
  for (const auto& s : zero.steps) CHECK(s.gap == 0.0);

  // Predicting Mario for a Zelda user: prefix "Super" holds more entropy.
  std::vector<RankedList> wrong{list_of(cat, {0})};
  auto curve = entropy_gap(wrong, std::vector<ItemIndex>{2}, trie);
  REQUIRE(curve.steps.size() == 3);
  CHECK(curve.steps[0].mean_pred_entropy == doctest::Approx(2.0 * l3 / 3.0));
  CHECK(curve.steps[0].mean_gt_entropy == doctest::Approx(l3 / 3.0));
  CHECK(curve.steps[0].gap == doctest::Approx(l3 / 3.0));
  // Zelda has ended by step 3 and holds its leaf entropy.
  CHECK(curve.steps[2].mean_gt_entropy == doctest::Approx(l3 / 3.0));
  CHECK(curve.steps[2].gap == doctest::Approx(0.0).epsilon(1e-15));

  auto excl = entropy_gap(wrong, std::vector<ItemIndex>{2}, trie, 0, 10, ShortItemPolicy::exclude);
  CHECK(excl.steps.size() == 2);

  // Only the first top_n entries count.
  std::vector<RankedList> two{list_of(cat, {2, 0})};
  auto top1 = entropy_gap(two, std::vector<ItemIndex>{2}, trie, 0, 1);
  for (const auto& s : top1.steps) CHECK(s.gap == 0.0);
  auto top2 = entropy_gap(two, std::vector<ItemIndex>{2}, trie, 0, 2);
  CHECK(top2.steps[0].mean_pred_entropy == doctest::Approx(l3 / 2.0));

  CHECK_THROWS_AS(entropy_gap(wrong, std::vector<ItemIndex>{7}, trie), ValidationError);

  TempDir dir;
  write_entropy_gap_csv(curve, dir / "gap.csv");
  CHECK(read_file(dir / "gap.csv").rfind("t,mean_pred_entropy,mean_gt_entropy,gap\n1,", 0) == 0);
}

TEST_CASE("diversity") {
  auto cat = make_catalog({"x a", "x b", "x c", "x d", "x e", "x f", "x g", "x h", "x i", "x j", "y a", "z a"});
  std::vector<RankedList> same{list_of(cat, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, std::vector<double>(10, -1.5))};
  auto d = diversity(same, cat);
  CHECK(d.fwr == 1.0);
  CHECK(d.ise == doctest::Approx(std::log(10.0)).epsilon(1e-14));

  std::vector<RankedList> mixed{list_of(cat, {0, 10, 11}, {0.0, std::log(0.5), std::log(0.25)})};
  auto m = diversity(mixed, cat);
  CHECK(m.fwr == doctest::Approx(1.0 / 3.0));
  const double p[3] = {4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0};
  CHECK(m.ise == doctest::Approx(-(p[0] * std::log(p[0]) + p[1] * std::log(p[1]) + p[2] * std::log(p[2]))));

  std::vector<RankedList> empty{RankedList{}};
  CHECK_THROWS_AS(diversity(empty, cat), ValidationError);

  std::mt19937_64 rng(1);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ItemIndex> items(cat.size());
    std::iota(items.begin(), items.end(), 0);
    std::shuffle(items.begin(), items.end(), rng);
    items.resize(1 + rng() % 10);
    std::vector<double> scores;
    for (std::size_t i = 0; i < items.size(); ++i) scores.push_back(-std::abs(5.0 * n01(rng)));
    std::vector<RankedList> one{list_of(cat, items, scores)};
    auto r = diversity(one, cat);
    CHECK(r.fwr >= 1.0 / static_cast<double>(items.size()) - 1e-15);
    CHECK(r.fwr <= 1.0);
    CHECK(r.ise >= 0.0);
    CHECK(r.ise <= std::log(10.0) + 1e-12);
  }
}

TEST_CASE("spearman correlation") {
  CHECK(*spearman(std::vector<double>{1, 2, 3}, std::vector<double>{10, 20, 30}) == doctest::Approx(1.0));
  CHECK(*spearman(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}) == doctest::Approx(-1.0));
  CHECK_FALSE(spearman(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}).has_value());
  CHECK_FALSE(spearman(std::vector<double>{1}, std::vector<double>{1}).has_value());
  // Ties get average ranks: x ranks {1.5, 1.5, 3}, y ranks {1, 2, 3}.
  const double expected = 1.5 / std::sqrt(1.5 * 2.0);
  CHECK(*spearman(std::vector<double>{5, 5, 9}, std::vector<double>{1, 2, 3}) == doctest::Approx(expected));
}

TEST_CASE("IG versus log-probability report") {
  auto trie = PrefixTrie::build(make_catalog({"a x", "a y", "a z w", "b", "c d e", "c d f"}));
  InteractionSet sample;
  for (ItemIndex i = 0; i < trie.catalog().size(); ++i) sample.records.push_back({"u", {}, i});

  auto biased = ig_logit_report(*make_biased_scorer(make_trie_prior_scorer(), 2.0), trie, sample);
  REQUIRE(biased.mean_logp_zero_ig);
  REQUIRE(biased.mean_logp_nonzero_ig);
  CHECK(*biased.mean_logp_zero_ig > *biased.mean_logp_nonzero_ig);
  std::size_t total = 0;
  for (const auto& b : biased.histogram) total += b.count;
  CHECK(total == biased.n_zero_ig + biased.n_nonzero_ig);
  CHECK(biased.histogram.size() == 10);
  if (biased.rank_correlation_nonzero) {
    CHECK(*biased.rank_correlation_nonzero >= -1.0);
    CHECK(*biased.rank_correlation_nonzero <= 1.0);
  }

  // Disjoint one-token titles with uniform priors: every first-step IG is equal.
  auto flat = PrefixTrie::build(make_catalog({"p", "q", "r", "s"}));
  InteractionSet flat_sample;
  for (ItemIndex i = 0; i < 4; ++i) flat_sample.records.push_back({"u", {}, i});
  auto degenerate = ig_logit_report(*make_trie_prior_scorer(), flat, flat_sample);
  CHECK_FALSE(degenerate.rank_correlation_nonzero.has_value());

  TempDir dir;
  write_ig_logit_report(degenerate, dir / "r.json");
  auto j = nlohmann::json::parse(read_file(dir / "r.json"));
  CHECK(j["rank_correlation_nonzero"].is_null());

  CHECK_THROWS_AS(ig_logit_report(*make_trie_prior_scorer(), trie, InteractionSet{}), ValidationError);
}

TEST_CASE("IG and log-probability tend to anti-correlate under the prior") {
  std::mt19937_64 rng(99);
  double sum = 0.0;
  int n = 0;
  for (int trial = 0; trial < 200; ++trial) {
    auto trie = PrefixTrie::build(random_catalog(rng));
    InteractionSet sample;
    for (ItemIndex i = 0; i < trie.catalog().size(); ++i) sample.records.push_back({"u", {}, i});
    auto r = ig_logit_report(*make_trie_prior_scorer(), trie, sample);
    if (r.rank_correlation_nonzero) {
      sum += *r.rank_correlation_nonzero;
      ++n;
    }
  }
  REQUIRE(n > 0);
  MESSAGE("mean Spearman(IG, log p) over " << n << " catalogs: " << sum / n);
}

TEST_CASE("metric report JSON") {
  TempDir dir;
  MetricReport r;
  r.hr = {{5, 0.5}, {10, 0.75}};
  r.ndcg = {{5, 0.25}, {10, 0.375}};
  r.n_users = 4;
  write_metric_report(r, dir / "m.json");
  auto j = nlohmann::json::parse(read_file(dir / "m.json"));
  CHECK(j["hr"]["5"] == 0.5);
  CHECK(j["ndcg"]["10"] == 0.375);
  CHECK(j["n_users"] == 4);
}
