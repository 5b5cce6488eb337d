#include "igd/decoder.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "igd/error.hpp"

namespace igd {

std::string to_string(DecodeMode mode) { return mode == DecodeMode::standard ? "standard" : "igd"; }

DecodeMode parse_decode_mode(std::string_view name) {
  if (name == "standard") return DecodeMode::standard;
  if (name == "igd") return DecodeMode::igd;
  throw ValidationError("unknown decode mode '" + std::string(name) + "' (expected standard or igd)");
}

std::vector<std::string> BeamConfig::validate() const {
  if (width < 1) throw ValidationError("beam width must be >= 1");
  if (top_k < 1) throw ValidationError("top_k must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
  std::vector<std::string> warnings;
  if (top_k > width)
    warnings.push_back("top_k " + std::to_string(top_k) + " exceeds beam width " + std::to_string(width));
  if (mode == DecodeMode::standard && alpha != 0.0) warnings.push_back("alpha is ignored in standard mode");
  return warnings;
}

std::vector<StepReweight> step_reweights(std::span<const double> igs, double alpha) {
  std::vector<StepReweight> out(igs.size());
  if (igs.empty()) return out;
  const auto [lo, hi] = std::minmax_element(igs.begin(), igs.end());
  const double range = *hi - *lo;
  for (std::size_t i = 0; i < igs.size(); ++i) {
    out[i].ig_norm = range > 0.0 ? (igs[i] - *lo) / range : 0.0;
    out[i].w_d = 1.0 - alpha * out[i].ig_norm;
  }
  return out;
}

namespace {

struct Hyp {
  NodeId node;
  double score;
};

struct Candidate {
  NodeId node;
  double base;  // parent score
  double logp;
  double ig;
};

}  // namespace

RankedList beam_search(const Scorer& scorer, const PrefixTrie& trie, const UserContext& ctx, const BeamConfig& cfg) {
  cfg.validate();
  if (trie.catalog().empty()) throw ValidationError("catalog is empty");
  const bool igd = cfg.mode == DecodeMode::igd;
  const auto& catalog = trie.catalog();

  auto better_finished = [&](const RankedEntry& a, const RankedEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.item_id < b.item_id;
  };

  std::vector<Hyp> live{{PrefixTrie::root(), 0.0}};
  std::vector<RankedEntry> finished;
  std::vector<Candidate> pool;
  std::vector<double> igs;
  std::vector<Hyp> next;

  while (!live.empty()) {
    pool.clear();
    for (const auto& h : live)
      for (const auto& e : scorer.distribution(ctx, trie, h.node).entries)
        if (e.prob > 0.0) pool.push_back({e.node, h.score, std::log(e.prob), trie.node(e.node).ig.value});

    std::vector<StepReweight> rw;
    if (igd) {
      igs.clear();
      for (const auto& c : pool) igs.push_back(c.ig);
      rw = step_reweights(igs, cfg.alpha);
    }

    next.clear();
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const auto& c = pool[i];
      const double score = c.base + (igd ? rw[i].w_d * c.logp : c.logp);
      const auto& n = trie.node(c.node);
      if (n.is_leaf()) {
        const ItemIndex item = *n.terminal_item;
        finished.push_back({catalog.item(item).item_id, item, score});
      } else {
        next.push_back({c.node, score});
      }
    }

    std::sort(finished.begin(), finished.end(), better_finished);
    if (finished.size() > cfg.top_k) finished.resize(cfg.top_k);

    // Same depth: node id order is lexicographic prefix order.
    std::sort(next.begin(), next.end(), [](const Hyp& a, const Hyp& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.node < b.node;
    });
    if (next.size() > cfg.width) next.resize(cfg.width);
    live.swap(next);

    // Step contributions are <= 0, so live scores never rise.
    if (finished.size() == cfg.top_k && !live.empty() && finished.back().score > live.front().score) break;
  }
  return RankedList{std::move(finished)};
}

std::vector<RankedList> decode_batch(const Scorer& scorer, const PrefixTrie& trie, const InteractionSet& records,
                                     const BeamConfig& cfg, unsigned threads) {
  cfg.validate();
  const std::size_t n = records.records.size();
  std::vector<RankedList> out(n);
  if (n == 0) return out;
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));

  enum class Kind { none, validation, runtime, other };
  struct Failure {
    Kind kind = Kind::none;
    std::string message;
  };
  std::vector<Failure> failures(n);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      const auto& rec = records.records[i];
      try {
        out[i] = beam_search(scorer, trie, UserContext{rec.user_id, rec.history}, cfg);
      } catch (const ValidationError& e) {
        failures[i] = {Kind::validation, e.what()};
      } catch (const RuntimeError& e) {
        failures[i] = {Kind::runtime, e.what()};
      } catch (const std::exception& e) {
        failures[i] = {Kind::other, e.what()};
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = failures[i];
    if (f.kind == Kind::none) continue;
    const std::string msg = "record " + std::to_string(i) + " (user '" + records.records[i].user_id + "'): " + f.message;
    if (f.kind == Kind::validation) throw ValidationError(msg);
    throw RuntimeError(msg);
  }
  return out;
}

void save_ranked_lists(const std::vector<RankedList>& lists, const InteractionSet& records,
                       const std::filesystem::path& path) {
  if (lists.size() != records.records.size()) throw ValidationError("ranked lists and records are not aligned");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  for (std::size_t i = 0; i < lists.size(); ++i) {
    nlohmann::ordered_json j;
    j["user_id"] = records.records[i].user_id;
    j["items"] = nlohmann::json::array();
    j["scores"] = nlohmann::json::array();
    for (const auto& e : lists[i].entries) {
      j["items"].push_back(e.item_id);
      j["scores"].push_back(e.score);
    }
    out << j.dump() << '\n';
  }
  if (!out) throw RuntimeError("write failed for " + path.string());
}

std::vector<DecodedRecord> load_ranked_lists(const std::filesystem::path& path, const Catalog& catalog) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::vector<DecodedRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    try {
      auto j = nlohmann::json::parse(line);
      DecodedRecord rec;
      rec.user_id = j.at("user_id").get<std::string>();
      const auto items = j.at("items").get<std::vector<std::string>>();
      const auto scores = j.at("scores").get<std::vector<double>>();
      if (items.size() != scores.size()) throw ValidationError(where + ": items and scores differ in length");
      for (std::size_t k = 0; k < items.size(); ++k) {
        auto idx = catalog.find(items[k]);
        if (!idx) throw ValidationError(where + ": unknown item_id '" + items[k] + "'");
        rec.list.entries.push_back({items[k], *idx, scores[k]});
      }
      out.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(where + ": malformed decode record: " + e.what());
    }
  }
  return out;
}

}  // namespace igd
