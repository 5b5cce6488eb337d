#include "igd/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "igd/error.hpp"

namespace igd {

namespace {

constexpr std::uint64_t kFillerStream = 0x9e3779b97f4a7c15ULL;
const char* const kFillers[] = {"of", "the", "and", "de", "la"};

int draw(std::mt19937_64& rng, IntRange r) { return std::uniform_int_distribution<int>(r.min, r.max)(rng); }

bool chance(std::mt19937_64& rng, double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

void check_range(IntRange r, int lowest, const char* name) {
  if (r.min < lowest || r.max < r.min)
    throw ValidationError(std::string(name) + " range must satisfy " + std::to_string(lowest) + " <= min <= max");
}

// Number of distinct body tuples of length `len`, saturating.
double capacity(std::size_t pool, int len) { return std::pow(static_cast<double>(pool), len); }

}  // namespace

void CatalogGenConfig::validate() const {
  if (n_items < 1) throw ValidationError("n_items must be >= 1");
  if (n_franchises < 1 || n_franchises > n_items) throw ValidationError("need 1 <= n_franchises <= n_items");
  check_range(shared_prefix_len, 1, "shared_prefix_len");
  check_range(body_len, 1, "body_len");
  if (!(filler_rate >= 0.0 && filler_rate <= 1.0)) throw ValidationError("filler_rate must lie in [0, 1]");
  if (!(article_rate >= 0.0 && article_rate <= 1.0)) throw ValidationError("article_rate must lie in [0, 1]");
  if (vocab_size < 1) throw ValidationError("vocab_size must be >= 1");
}

GeneratedCatalog gen_catalog(const CatalogGenConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::mt19937_64 filler_rng(cfg.seed ^ kFillerStream);
  std::uniform_int_distribution<std::size_t> word(0, cfg.vocab_size - 1);
  auto w = [](std::size_t k) { return "w" + std::to_string(k); };

  GeneratedCatalog out;
  std::vector<std::pair<std::string, std::string>> rows;
  std::size_t next_item = 0;
  for (std::size_t f = 0; f < cfg.n_franchises; ++f) {
    // Balanced contiguous blocks.
    const std::size_t size = cfg.n_items / cfg.n_franchises + (f < cfg.n_items % cfg.n_franchises ? 1 : 0);

    std::vector<std::string> head;
    if (chance(rng, cfg.article_rate)) head.push_back("The");
    head.push_back("F" + std::to_string(f));
    const int prefix_len = draw(rng, cfg.shared_prefix_len);
    for (int k = 1; k < prefix_len; ++k) head.push_back(w(word(rng)));

    int body = draw(rng, cfg.body_len);
    while (capacity(cfg.vocab_size, body) < static_cast<double>(size) && body < cfg.body_len.max) ++body;
    if (capacity(cfg.vocab_size, body) < static_cast<double>(size))
      throw ValidationError("cannot make " + std::to_string(size) + " distinct titles in franchise " +
                            std::to_string(f) + " from " + std::to_string(cfg.vocab_size) + " words and at most " +
                            std::to_string(cfg.body_len.max) + " body slots");

    std::set<std::vector<std::size_t>> bodies;
    std::vector<std::vector<std::size_t>> ordered;
    if (capacity(cfg.vocab_size, body) <= 2.0 * static_cast<double>(size)) {
      // Dense: enumerate every tuple and keep a random subset.
      std::vector<std::vector<std::size_t>> all{{}};
      for (int s = 0; s < body; ++s) {
        std::vector<std::vector<std::size_t>> grown;
        for (const auto& t : all)
          for (std::size_t k = 0; k < cfg.vocab_size; ++k) {
            grown.push_back(t);
            grown.back().push_back(k);
          }
        all.swap(grown);
      }
      std::shuffle(all.begin(), all.end(), rng);
      all.resize(size);
      ordered = std::move(all);
    } else {
      while (ordered.size() < size) {
        std::vector<std::size_t> t(body);
        for (auto& k : t) k = word(rng);
        if (bodies.insert(t).second) ordered.push_back(std::move(t));
      }
    }

    // Slots are head words then body words; gaps between them may take a filler.
    const std::size_t slots = head.size() + static_cast<std::size_t>(body);
    // Gaps before the franchise head sit under shared nodes.
    const std::size_t first_gap = head.front() == "The" ? 2 : 1;
    std::vector<std::optional<std::string>> gap_filler(slots);
    for (std::size_t g = first_gap; g < slots; ++g)
      if (chance(filler_rng, cfg.filler_rate)) gap_filler[g] = kFillers[filler_rng() % std::size(kFillers)];

    for (const auto& t : ordered) {
      std::vector<std::string> words(head);
      for (std::size_t k : t) words.push_back(w(k));
      std::string title;
      std::size_t pos = 0;
      for (std::size_t s = 0; s < slots; ++s) {
        if (gap_filler[s]) {
          title += ' ' + *gap_filler[s];
          out.filler_positions.emplace_back(next_item, pos++);
        }
        if (s) title += ' ';
        title += words[s];
        ++pos;
      }
      rows.emplace_back("item" + std::to_string(next_item), title);
      out.cluster_of.push_back(f);
      ++next_item;
    }
  }
  out.catalog = Catalog::from_titles(rows);
  return out;
}

GeneratedCatalog fig1_catalog(std::size_t bulk_items, std::uint64_t seed) {
  const std::vector<std::string> anchors{
      "The Legend of Zelda Ocarina of Time",
      "The Legend of Zelda Breath of the Wild",
      "The Legend of Zelda Tears of the Kingdom",
      "The Legend of Zelda Link's Awakening",
      "The Last of Us",
      "The Witcher 3",
      "The Sims 4",
      "Super Mario Odyssey",
      "Super Mario Galaxy",
      "Super Mario Kart",
      "Super Metroid",
      "Super Smash Bros",
  };
  GeneratedCatalog out;
  std::vector<std::pair<std::string, std::string>> rows;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    rows.emplace_back("fig" + std::to_string(i), anchors[i]);
    if (i < 4) {
      // "of" after "The Legend", then "Zelda".
      out.filler_positions.emplace_back(i, 2);
      out.filler_positions.emplace_back(i, 3);
    }
    std::size_t cluster = 2;
    if (anchors[i].rfind("The Legend", 0) == 0) cluster = 0;
    if (anchors[i].rfind("Super Mario", 0) == 0) cluster = 1;
    out.cluster_of.push_back(cluster);
  }
  if (bulk_items > 0) {
    CatalogGenConfig cfg;
    cfg.n_items = bulk_items;
    cfg.n_franchises = std::max<std::size_t>(1, bulk_items / 10);
    cfg.shared_prefix_len = {1, 3};
    cfg.body_len = {1, 3};
    cfg.filler_rate = 0.5;
    cfg.vocab_size = 40;
    cfg.article_rate = 0.3;
    cfg.seed = seed;
    auto bulk = gen_catalog(cfg);
    const std::size_t offset = anchors.size();
    for (const auto& item : bulk.catalog.items()) rows.emplace_back(item.item_id, item.title);
    for (auto c : bulk.cluster_of) out.cluster_of.push_back(c + 3);
    for (auto [item, pos] : bulk.filler_positions) out.filler_positions.emplace_back(item + offset, pos);
  }
  out.catalog = Catalog::from_titles(rows);
  return out;
}

void InteractionGenConfig::validate() const {
  if (n_users < 1) throw ValidationError("n_users must be >= 1");
  check_range(history_len, 1, "history_len");
  if (!(zipf_s >= 0.0) || !std::isfinite(zipf_s)) throw ValidationError("zipf_s must be finite and >= 0");
  if (!(cluster_affinity >= 0.0 && cluster_affinity <= 1.0))
    throw ValidationError("cluster_affinity must lie in [0, 1]");
  if (max_history < 1) throw ValidationError("max_history must be >= 1");
}

GeneratedInteractions gen_interactions(const InteractionGenConfig& cfg, const Catalog& catalog,
                                       std::span<const std::size_t> clusters) {
  cfg.validate();
  if (catalog.empty()) throw ValidationError("catalog is empty");
  const std::size_t n = catalog.size();
  if (!clusters.empty() && clusters.size() != n) throw ValidationError("cluster list does not match the catalog");

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> rank(n);
  std::iota(rank.begin(), rank.end(), 0);
  std::shuffle(rank.begin(), rank.end(), rng);
  std::vector<double> pop(n);
  for (std::size_t i = 0; i < n; ++i) pop[i] = 1.0 / std::pow(static_cast<double>(rank[i] + 1), cfg.zipf_s);

  std::map<std::size_t, std::vector<ItemIndex>> members;
  std::vector<std::size_t> cluster(n);
  for (ItemIndex i = 0; i < n; ++i) {
    cluster[i] = clusters.empty() ? catalog.item(i).tokens.front() : clusters[i];
    members[cluster[i]].push_back(i);
  }
  std::map<std::size_t, std::discrete_distribution<std::size_t>> within;
  for (const auto& [c, items] : members) {
    std::vector<double> w;
    for (ItemIndex i : items) w.push_back(pop[i]);
    within.emplace(c, std::discrete_distribution<std::size_t>(w.begin(), w.end()));
  }
  std::discrete_distribution<std::size_t> global(pop.begin(), pop.end());

  GeneratedInteractions out;
  out.train.split = Split::train;
  out.valid.split = Split::valid;
  out.test.split = Split::test;
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    const std::string user = "user" + std::to_string(u);
    const int records = draw(rng, cfg.history_len);
    std::vector<ItemIndex> seq{global(rng)};
    for (int j = 0; j < records; ++j) {
      const ItemIndex prev = seq.back();
      ItemIndex next;
      if (chance(rng, cfg.cluster_affinity)) {
        const std::size_t c = cluster[prev];
        next = members[c][within.at(c)(rng)];
      } else {
        next = global(rng);
      }
      const std::size_t from = seq.size() > cfg.max_history ? seq.size() - cfg.max_history : 0;
      Interaction rec{user, std::vector<ItemIndex>(seq.begin() + static_cast<std::ptrdiff_t>(from), seq.end()), next};
      const int slot = j % 10;
      (slot < 8 ? out.train : slot == 8 ? out.valid : out.test).records.push_back(std::move(rec));
      seq.push_back(next);
    }
  }
  return out;
}

CatalogGenConfig benchmark_catalog_config(std::uint64_t seed) {
  CatalogGenConfig cfg;
  cfg.n_items = 1500;
  cfg.n_franchises = 120;
  cfg.shared_prefix_len = {1, 3};
  cfg.body_len = {1, 3};
  cfg.filler_rate = 0.4;
  cfg.vocab_size = 40;
  cfg.article_rate = 0.3;
  cfg.seed = seed;
  return cfg;
}

InteractionGenConfig benchmark_interaction_config(std::uint64_t seed) {
  InteractionGenConfig cfg;
  cfg.n_users = 800;
  cfg.history_len = {10, 10};
  cfg.zipf_s = 1.0;
  cfg.cluster_affinity = 0.7;
  cfg.max_history = 20;
  cfg.seed = seed + 1;
  return cfg;
}

Benchmark make_benchmark(std::uint64_t seed) {
  Benchmark b;
  b.catalog = gen_catalog(benchmark_catalog_config(seed));
  b.data = gen_interactions(benchmark_interaction_config(seed), b.catalog.catalog, b.catalog.cluster_of);
  b.catalog.catalog = estimate_priors(std::move(b.catalog.catalog), b.data.train);
  return b;
}

}  // namespace igd
