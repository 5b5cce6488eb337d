#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "igd/catalog.hpp"

namespace igd {

struct IntRange {
  int min = 1;
  int max = 1;
};

struct CatalogGenConfig {
  std::size_t n_items = 200;
  std::size_t n_franchises = 20;
  IntRange shared_prefix_len{1, 2};  // franchise head plus shared words
  IntRange body_len{1, 3};           // item-specific words
  double filler_rate = 0.0;          // chance an interior gap of a franchise gets a filler word
  std::size_t vocab_size = 50;       // body word pool
  double article_rate = 0.0;         // chance a franchise title opens with "The"
  std::uint64_t seed = 0;

  void validate() const;
};

struct GeneratedCatalog {
  Catalog catalog;
  std::vector<std::size_t> cluster_of;  // franchise per item
  // (item, 0-based token position) of every forced filler token.
  std::vector<std::pair<ItemIndex, std::size_t>> filler_positions;
};

GeneratedCatalog gen_catalog(const CatalogGenConfig& cfg);

// Hand-written anchor titles ("The Legend of Zelda ...", "Super Mario ...",
// other "The ..." items) followed by `bulk_items` generated ones.
GeneratedCatalog fig1_catalog(std::size_t bulk_items = 200, std::uint64_t seed = 0);

struct InteractionGenConfig {
  std::size_t n_users = 100;
  IntRange history_len{10, 10};  // records per user
  double zipf_s = 1.0;
  double cluster_affinity = 0.5;
  std::size_t max_history = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GeneratedInteractions {
  InteractionSet train;
  InteractionSet valid;
  InteractionSet test;
};

// Record j of a user goes to train for j % 10 in 0..7, valid for 8, test for 9.
// Clusters default to each item's first token.
GeneratedInteractions gen_interactions(const InteractionGenConfig& cfg, const Catalog& catalog,
                                       std::span<const std::size_t> clusters = {});

// Seeded benchmark used by the A/B experiments.
struct Benchmark {
  GeneratedCatalog catalog;  // priors estimated from train
  GeneratedInteractions data;
};
CatalogGenConfig benchmark_catalog_config(std::uint64_t seed = 7);
InteractionGenConfig benchmark_interaction_config(std::uint64_t seed = 7);
Benchmark make_benchmark(std::uint64_t seed = 7);

}  // namespace igd
