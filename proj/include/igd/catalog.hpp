#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace igd {

using TokenId = std::uint32_t;
using ItemIndex = std::size_t;

// Token ids of one item title, always terminated by exactly one EOS.
using TokenSeq = std::vector<TokenId>;

enum class TokenizerMode { whitespace, character, external };

struct TokenizerSpec {
  TokenizerMode mode = TokenizerMode::whitespace;
  // Only used in external mode: one token surface per line, line index = id.
  std::filesystem::path vocab_path;
};

std::string to_string(TokenizerMode mode);
TokenizerMode parse_tokenizer_mode(std::string_view name);

// Token table. An open vocabulary grows on demand and reserves id 0 for EOS;
// a closed one is read from a vocab file and places EOS after the last line.
class Vocabulary {
 public:
  static constexpr std::string_view kEosSurface = "</s>";

  static Vocabulary open();
  static Vocabulary from_file(const std::filesystem::path& path);
  static Vocabulary from_surfaces(std::vector<std::string> surfaces);
  // Rebuilds a vocabulary exactly as serialized (surfaces include EOS).
  static Vocabulary restore(std::vector<std::string> surfaces, TokenId eos, bool closed);

  TokenId eos() const { return eos_; }
  bool closed() const { return closed_; }
  std::size_t size() const { return surfaces_.size(); }
  std::size_t longest_surface() const { return longest_; }

  std::optional<TokenId> find(std::string_view surface) const;
  // Returns the id for `surface`, adding it when the vocabulary is open.
  TokenId intern(std::string_view surface);
  const std::string& surface(TokenId id) const;

  const std::vector<std::string>& surfaces() const { return surfaces_; }

 private:
  std::vector<std::string> surfaces_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId eos_ = 0;
  bool closed_ = false;
  std::size_t longest_ = 0;
};

// Unicode NFC followed by trimming of surrounding whitespace. No case folding.
std::string normalize_title(std::string_view text);

// Deterministic tokenization; EOS appended. Open vocabularies intern unseen
// tokens, closed ones reject fragments they cannot cover.
TokenSeq tokenize(std::string_view title, const TokenizerSpec& spec, Vocabulary& vocab);

struct ItemRecord {
  std::string item_id;
  std::string title;
  TokenSeq tokens;
  std::uint64_t train_count = 0;
  double prior = 0.0;
};

enum class CatalogFormat { jsonl, tsv };
CatalogFormat parse_catalog_format(std::string_view name);

class Catalog {
 public:
  Catalog() = default;
  Catalog(std::vector<ItemRecord> items, Vocabulary vocab, TokenizerSpec spec);

  // Tokenizes (id, title) pairs in order and assigns uniform placeholder priors.
  static Catalog from_titles(std::span<const std::pair<std::string, std::string>> titles,
                             const TokenizerSpec& spec = {});

  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const std::vector<ItemRecord>& items() const { return items_; }
  const ItemRecord& item(ItemIndex i) const { return items_.at(i); }
  const Vocabulary& vocab() const { return vocab_; }
  const TokenizerSpec& tokenizer_spec() const { return spec_; }

  std::optional<ItemIndex> find(std::string_view item_id) const;
  ItemIndex index_of(std::string_view item_id) const;  // throws ValidationError

  // Replaces priors and counts; both spans must match the item count.
  void assign_priors(std::span<const double> priors, std::span<const std::uint64_t> counts);

  // FNV-1a over ids, token sequences and prior bit patterns.
  std::uint64_t hash() const;

 private:
  std::vector<ItemRecord> items_;
  Vocabulary vocab_ = Vocabulary::open();
  TokenizerSpec spec_;
  std::unordered_map<std::string, ItemIndex> by_id_;
};

Catalog load_catalog(const std::filesystem::path& path, CatalogFormat format,
                     const TokenizerSpec& spec = {});
void save_catalog(const Catalog& catalog, const std::filesystem::path& path,
                  CatalogFormat format = CatalogFormat::jsonl);

enum class Split { train, valid, test };
std::string to_string(Split split);
Split parse_split(std::string_view name);

struct Interaction {
  std::string user_id;
  std::vector<ItemIndex> history;
  ItemIndex target = 0;
};

struct InteractionSet {
  std::vector<Interaction> records;
  Split split = Split::train;
};

InteractionSet load_interactions(const std::filesystem::path& path, Split split,
                                 const Catalog& catalog);
void save_interactions(const InteractionSet& set, const Catalog& catalog,
                       const std::filesystem::path& path);

struct Smoothing {
  enum class Kind { laplace, floor } kind = Kind::laplace;
  double epsilon = 1e-6;  // floor only
};

// Priors from training-target counts. Laplace: (count + 1) / (N + |I|).
// Floor: max(count / N, epsilon) renormalized.
Catalog estimate_priors(Catalog catalog, const InteractionSet& train,
                        Smoothing smoothing = {});

}  // namespace igd
