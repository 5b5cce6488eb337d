#include "igd/catalog.hpp"

#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "igd/error.hpp"

namespace igd {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// Byte length of the UTF-8 sequence starting with `lead`; malformed leads count as 1.
std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;
}

class Fnv1a {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
  }
  template <typename T>
  void value(T v) { bytes(&v, sizeof v); }
  void text(std::string_view s) {
    value<std::uint64_t>(s.size());
    bytes(s.data(), s.size());
  }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return in;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

std::string to_string(TokenizerMode mode) {
  switch (mode) {
    case TokenizerMode::whitespace: return "whitespace";
    case TokenizerMode::character: return "character";
    case TokenizerMode::external: return "external";
  }
  return "?";
}

TokenizerMode parse_tokenizer_mode(std::string_view name) {
  if (name == "whitespace") return TokenizerMode::whitespace;
  if (name == "character") return TokenizerMode::character;
  if (name == "external") return TokenizerMode::external;
  throw ValidationError("unknown tokenizer mode '" + std::string(name) + "'");
}

Vocabulary Vocabulary::open() {
  Vocabulary v;
  v.surfaces_.emplace_back(kEosSurface);
  v.eos_ = 0;
  return v;
}

Vocabulary Vocabulary::from_surfaces(std::vector<std::string> surfaces) {
  Vocabulary v;
  v.closed_ = true;
  for (auto& s : surfaces) {
    if (s.empty()) throw ValidationError("vocabulary contains an empty token surface");
    auto id = static_cast<TokenId>(v.surfaces_.size());
    if (!v.index_.emplace(s, id).second)
      throw ValidationError("duplicate vocabulary entry '" + s + "'");
    v.longest_ = std::max(v.longest_, s.size());
    v.surfaces_.push_back(std::move(s));
  }
  v.eos_ = static_cast<TokenId>(v.surfaces_.size());
  v.surfaces_.emplace_back(kEosSurface);
  return v;
}

Vocabulary Vocabulary::restore(std::vector<std::string> surfaces, TokenId eos, bool closed) {
  if (eos >= surfaces.size()) throw ValidationError("vocabulary EOS id out of range");
  Vocabulary v;
  v.closed_ = closed;
  v.eos_ = eos;
  for (TokenId id = 0; id < surfaces.size(); ++id) {
    if (id == eos) continue;
    if (!v.index_.emplace(surfaces[id], id).second)
      throw ValidationError("duplicate vocabulary entry '" + surfaces[id] + "'");
    v.longest_ = std::max(v.longest_, surfaces[id].size());
  }
  v.surfaces_ = std::move(surfaces);
  return v;
}

Vocabulary Vocabulary::from_file(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<std::string> surfaces;
  std::string line;
  while (std::getline(in, line)) {
    strip_cr(line);
    surfaces.push_back(line);
  }
  return from_surfaces(std::move(surfaces));
}

std::optional<TokenId> Vocabulary::find(std::string_view surface) const {
  auto it = index_.find(std::string(surface));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::intern(std::string_view surface) {
  if (auto id = find(surface)) return *id;
  if (closed_) throw ValidationError("token '" + std::string(surface) + "' not in vocabulary");
  auto id = static_cast<TokenId>(surfaces_.size());
  surfaces_.emplace_back(surface);
  index_.emplace(std::string(surface), id);
  longest_ = std::max(longest_, surface.size());
  return id;
}

const std::string& Vocabulary::surface(TokenId id) const {
  if (id >= surfaces_.size()) throw ValidationError("token id " + std::to_string(id) + " out of range");
  return surfaces_[id];
}

std::string normalize_title(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw RuntimeError("ICU NFC normalizer unavailable");
  icu::UnicodeString source = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<std::int32_t>(text.size())));
  icu::UnicodeString normalized = nfc->normalize(source, status);
  if (U_FAILURE(status)) throw ValidationError("cannot normalize title '" + std::string(text) + "'");
  std::string out;
  normalized.toUTF8String(out);
  return std::string(trim(out));
}

TokenSeq tokenize(std::string_view title, const TokenizerSpec& spec, Vocabulary& vocab) {
  const std::string text = normalize_title(title);
  if (text.empty()) throw ValidationError("empty title");
  TokenSeq seq;
  switch (spec.mode) {
    case TokenizerMode::whitespace: {
      std::size_t i = 0;
      while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        std::size_t j = i;
        while (j < text.size() && !is_space(text[j])) ++j;
        if (j > i) seq.push_back(vocab.intern(std::string_view(text).substr(i, j - i)));
        i = j;
      }
      break;
    }
    case TokenizerMode::character: {
      for (std::size_t i = 0; i < text.size();) {
        std::size_t n = std::min(utf8_length(static_cast<unsigned char>(text[i])), text.size() - i);
        seq.push_back(vocab.intern(std::string_view(text).substr(i, n)));
        i += n;
      }
      break;
    }
    case TokenizerMode::external: {
      // Greedy longest match over the closed vocabulary.
      std::string_view rest(text);
      while (!rest.empty()) {
        std::size_t len = std::min(vocab.longest_surface(), rest.size());
        std::optional<TokenId> hit;
        for (; len > 0; --len) {
          if ((hit = vocab.find(rest.substr(0, len)))) break;
        }
        if (!hit) {
          std::size_t n = std::min(utf8_length(static_cast<unsigned char>(rest[0])), rest.size());
          throw ValidationError("no vocabulary entry covers fragment '" + std::string(rest.substr(0, n)) +
                                "' at byte " + std::to_string(text.size() - rest.size()) + " of '" +
                                text + "'");
        }
        seq.push_back(*hit);
        rest.remove_prefix(len);
      }
      break;
    }
  }
  seq.push_back(vocab.eos());
  return seq;
}

CatalogFormat parse_catalog_format(std::string_view name) {
  if (name == "jsonl") return CatalogFormat::jsonl;
  if (name == "tsv") return CatalogFormat::tsv;
  throw ValidationError("unknown catalog format '" + std::string(name) + "'");
}

Catalog::Catalog(std::vector<ItemRecord> items, Vocabulary vocab, TokenizerSpec spec)
    : items_(std::move(items)), vocab_(std::move(vocab)), spec_(std::move(spec)) {
  by_id_.reserve(items_.size());
  for (ItemIndex i = 0; i < items_.size(); ++i) {
    const auto& item = items_[i];
    if (!by_id_.emplace(item.item_id, i).second)
      throw ValidationError("duplicate item_id '" + item.item_id + "'");
    if (item.tokens.empty() || item.tokens.back() != vocab_.eos())
      throw ValidationError("token sequence of '" + item.item_id + "' is not EOS-terminated");
    for (std::size_t t = 0; t < item.tokens.size(); ++t) {
      if (item.tokens[t] >= vocab_.size())
        throw ValidationError("item '" + item.item_id + "' uses unknown token id");
      if (item.tokens[t] == vocab_.eos() && t + 1 != item.tokens.size())
        throw ValidationError("item '" + item.item_id + "' contains EOS before its end");
    }
  }
}

Catalog Catalog::from_titles(std::span<const std::pair<std::string, std::string>> titles,
                             const TokenizerSpec& spec) {
  Vocabulary vocab = spec.mode == TokenizerMode::external ? Vocabulary::from_file(spec.vocab_path)
                                                          : Vocabulary::open();
  std::vector<ItemRecord> items;
  items.reserve(titles.size());
  std::unordered_set<std::string> seen;
  for (const auto& [id, raw_title] : titles) {
    if (!seen.insert(id).second) throw ValidationError("duplicate item_id '" + id + "'");
    std::string title = normalize_title(raw_title);
    if (title.empty()) throw ValidationError("empty title for item '" + id + "'");
    ItemRecord rec;
    rec.item_id = id;
    rec.tokens = tokenize(title, spec, vocab);
    rec.title = std::move(title);
    items.push_back(std::move(rec));
  }
  const double uniform = items.empty() ? 0.0 : 1.0 / static_cast<double>(items.size());
  for (auto& item : items) item.prior = uniform;
  return Catalog(std::move(items), std::move(vocab), spec);
}

std::optional<ItemIndex> Catalog::find(std::string_view item_id) const {
  auto it = by_id_.find(std::string(item_id));
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

ItemIndex Catalog::index_of(std::string_view item_id) const {
  if (auto i = find(item_id)) return *i;
  throw ValidationError("unknown item_id '" + std::string(item_id) + "'");
}

void Catalog::assign_priors(std::span<const double> priors, std::span<const std::uint64_t> counts) {
  if (priors.size() != items_.size() || counts.size() != items_.size())
    throw ValidationError("prior vector does not match catalog size");
  for (ItemIndex i = 0; i < items_.size(); ++i) {
    items_[i].prior = priors[i];
    items_[i].train_count = counts[i];
  }
}

std::uint64_t Catalog::hash() const {
  Fnv1a h;
  h.value<std::uint64_t>(items_.size());
  for (const auto& item : items_) {
    h.text(item.item_id);
    h.value<std::uint64_t>(item.tokens.size());
    for (TokenId t : item.tokens) h.value(t);
    h.value(std::bit_cast<std::uint64_t>(item.prior));
  }
  return h.digest();
}

Catalog load_catalog(const std::filesystem::path& path, CatalogFormat format,
                     const TokenizerSpec& spec) {
  auto in = open_input(path);
  std::vector<std::pair<std::string, std::string>> titles;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (format == CatalogFormat::jsonl) {
      nlohmann::json obj;
      try {
        obj = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(where + ": malformed JSON: " + e.what());
      }
      if (!obj.is_object() || !obj.contains("item_id") || !obj.contains("title") ||
          !obj["item_id"].is_string() || !obj["title"].is_string())
        throw ValidationError(where + ": expected {\"item_id\": str, \"title\": str}");
      titles.emplace_back(obj["item_id"].get<std::string>(), obj["title"].get<std::string>());
    } else {
      auto fields = split_tabs(line);
      if (fields.size() != 2) throw ValidationError(where + ": expected item_id<TAB>title");
      titles.emplace_back(std::string(fields[0]), std::string(fields[1]));
    }
  }
  return Catalog::from_titles(titles, spec);
}

void save_catalog(const Catalog& catalog, const std::filesystem::path& path, CatalogFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  for (const auto& item : catalog.items()) {
    if (format == CatalogFormat::jsonl) {
      nlohmann::ordered_json obj;
      obj["item_id"] = item.item_id;
      obj["title"] = item.title;
      out << obj.dump() << '\n';
    } else {
      out << item.item_id << '\t' << item.title << '\n';
    }
  }
  if (!out) throw RuntimeError("write failed for " + path.string());
}

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "valid") return Split::valid;
  if (name == "test") return Split::test;
  throw ValidationError("unknown split '" + std::string(name) + "'");
}

InteractionSet load_interactions(const std::filesystem::path& path, Split split,
                                 const Catalog& catalog) {
  auto in = open_input(path);
  InteractionSet set;
  set.split = split;
  std::string line;
  std::size_t row = 0;
  auto resolve = [&](std::string_view id, std::size_t line_no) {
    if (auto i = catalog.find(id)) return *i;
    throw ValidationError(path.string() + ": row " + std::to_string(line_no) +
                          ": unknown item_id '" + std::string(id) + "'");
  };
  while (std::getline(in, line)) {
    ++row;
    strip_cr(line);
    if (line.empty() || line.front() == '#') continue;
    auto fields = split_tabs(line);
    if (fields.size() != 3)
      throw ValidationError(path.string() + ": row " + std::to_string(row) +
                            ": expected user_id<TAB>history<TAB>target");
    Interaction rec;
    rec.user_id = std::string(fields[0]);
    std::string_view hist = fields[1];
    while (!hist.empty()) {
      auto comma = hist.find(',');
      auto id = trim(hist.substr(0, comma));
      if (!id.empty()) rec.history.push_back(resolve(id, row));
      if (comma == std::string_view::npos) break;
      hist.remove_prefix(comma + 1);
    }
    rec.target = resolve(trim(fields[2]), row);
    set.records.push_back(std::move(rec));
  }
  return set;
}

void save_interactions(const InteractionSet& set, const Catalog& catalog,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  for (const auto& rec : set.records) {
    out << rec.user_id << '\t';
    for (std::size_t i = 0; i < rec.history.size(); ++i) {
      if (i) out << ',';
      out << catalog.item(rec.history[i]).item_id;
    }
    out << '\t' << catalog.item(rec.target).item_id << '\n';
  }
  if (!out) throw RuntimeError("write failed for " + path.string());
}

Catalog estimate_priors(Catalog catalog, const InteractionSet& train, Smoothing smoothing) {
  if (train.split != Split::train) throw ValidationError("priors must be estimated from the train split");
  if (catalog.empty()) throw ValidationError("cannot estimate priors for an empty catalog");
  const std::size_t n = catalog.size();
  std::vector<std::uint64_t> counts(n, 0);
  for (const auto& rec : train.records) {
    if (rec.target >= n) throw ValidationError("training target outside catalog");
    ++counts[rec.target];
  }
  const double total = static_cast<double>(train.records.size());
  std::vector<double> priors(n);
  if (smoothing.kind == Smoothing::Kind::laplace) {
    const double denom = total + static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) priors[i] = (static_cast<double>(counts[i]) + 1.0) / denom;
  } else {
    if (train.records.empty())
      throw ValidationError("floor smoothing needs at least one training record");
    if (!(smoothing.epsilon > 0.0)) throw ValidationError("floor smoothing needs epsilon > 0");
    for (std::size_t i = 0; i < n; ++i)
      priors[i] = std::max(static_cast<double>(counts[i]) / total, smoothing.epsilon);
    const double z = std::accumulate(priors.begin(), priors.end(), 0.0);
    for (auto& p : priors) p /= z;
  }
  catalog.assign_priors(priors, counts);
  return catalog;
}

}  // namespace igd
