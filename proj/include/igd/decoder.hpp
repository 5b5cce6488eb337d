#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "igd/scorer.hpp"
#include "igd/trie.hpp"

namespace igd {

enum class DecodeMode { standard, igd };
std::string to_string(DecodeMode mode);
DecodeMode parse_decode_mode(std::string_view name);

struct BeamConfig {
  std::size_t width = 10;
  std::size_t top_k = 10;
  double alpha = 0.0;
  DecodeMode mode = DecodeMode::standard;

  // Throws on invalid settings; returns warnings for legal but odd ones.
  std::vector<std::string> validate() const;
};

struct StepReweight {
  double ig_norm = 0.0;
  double w_d = 1.0;
};

// w_d = 1 - alpha * ig_norm, ig_norm max-min scaled over the whole pool.
std::vector<StepReweight> step_reweights(std::span<const double> igs, double alpha);

struct RankedEntry {
  std::string item_id;
  ItemIndex item = 0;
  double score = 0.0;

  bool operator==(const RankedEntry&) const = default;
};

// Best first; equal scores ordered by item_id ascending.
struct RankedList {
  std::vector<RankedEntry> entries;

  bool operator==(const RankedList&) const = default;
};

RankedList beam_search(const Scorer& scorer, const PrefixTrie& trie, const UserContext& ctx, const BeamConfig& cfg);

// One list per record, in input order. `threads` = 0 picks the hardware count.
std::vector<RankedList> decode_batch(const Scorer& scorer, const PrefixTrie& trie, const InteractionSet& records,
                                     const BeamConfig& cfg, unsigned threads = 0);

// JSONL: {"user_id", "items", "scores"} per record.
void save_ranked_lists(const std::vector<RankedList>& lists, const InteractionSet& records,
                       const std::filesystem::path& path);

struct DecodedRecord {
  std::string user_id;
  RankedList list;
};
std::vector<DecodedRecord> load_ranked_lists(const std::filesystem::path& path, const Catalog& catalog);

}  // namespace igd
