#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "igd/catalog.hpp"
#include "igd/decoder.hpp"
#include "igd/error.hpp"
#include "igd/numfmt.hpp"
#include "igd/eval.hpp"
#include "igd/pipeline.hpp"
#include "igd/scorer.hpp"
#include "igd/simgen.hpp"
#include "igd/trainer.hpp"
#include "igd/trie.hpp"
#include "igd/weights.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Reads {"option": value, "subcommand": {"option": value}} into CLI11 config items.
// Sections of subcommands that were not invoked are skipped.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* root) : root_(root) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}\n"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json doc;
    try {
      input >> doc;
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError("config file is not valid JSON: " + std::string(e.what()));
    }
    if (!doc.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<CLI::ConfigItem> items;
    flatten(doc, {}, items);
    std::erase_if(items, [this](const CLI::ConfigItem& item) { return !active(item.parents); });
    return items;
  }

 private:
  const CLI::App* root_;

  bool active(const std::vector<std::string>& parents) const {
    const CLI::App* at = root_;
    for (const auto& name : parents) {
      const CLI::App* sub = at->get_subcommand_no_throw(name);
      if (sub == nullptr) return true;
      if (sub->count() == 0) return false;
      at = sub;
    }
    return true;
  }

  static std::string scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw CLI::ConversionError("config values must be scalars or arrays of scalars");
  }

  static void flatten(const nlohmann::json& obj, const std::vector<std::string>& parents,
                      std::vector<CLI::ConfigItem>& out) {
    for (const auto& [key, value] : obj.items()) {
      if (value.is_object()) {
        auto path = parents;
        path.push_back(key);
        flatten(value, path, out);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      out.push_back(std::move(item));
    }
  }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw igd::RuntimeError("cannot write " + path.string());
  out << text;
  if (!out) throw igd::RuntimeError("write failed for " + path.string());
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

std::vector<igd::ItemIndex> targets(const igd::InteractionSet& set) {
  std::vector<igd::ItemIndex> out;
  out.reserve(set.records.size());
  for (const auto& r : set.records) out.push_back(r.target);
  return out;
}

const std::vector<std::string> kLogBases{"nat", "natural", "2", "base2"};

struct CatalogOptions {
  std::string path;
  std::string format = "jsonl";
  std::string tokenizer = "whitespace";
  std::string vocab;

  void add(CLI::App* app) {
    app->add_option("--catalog", path, "Item catalog file")->required()->check(CLI::ExistingFile);
    app->add_option("--format", format, "Catalog format")->check(CLI::IsMember({"jsonl", "tsv"}));
    app->add_option("--tokenizer", tokenizer, "Tokenizer mode")
        ->check(CLI::IsMember({"whitespace", "character", "external"}));
    app->add_option("--vocab", vocab, "Vocabulary file for the external tokenizer")->check(CLI::ExistingFile);
  }

  igd::Catalog load() const {
    igd::TokenizerSpec spec;
    spec.mode = igd::parse_tokenizer_mode(tokenizer);
    if (!vocab.empty()) spec.vocab_path = vocab;
    if (spec.mode == igd::TokenizerMode::external && vocab.empty())
      throw igd::ValidationError("--vocab is required with the external tokenizer");
    return igd::load_catalog(path, igd::parse_catalog_format(format), spec);
  }
};

struct SmoothingOptions {
  std::string kind = "laplace";
  double epsilon = 1e-6;

  void add(CLI::App* app) {
    app->add_option("--smoothing", kind, "Prior smoothing")->check(CLI::IsMember({"laplace", "floor"}));
    app->add_option("--epsilon", epsilon, "Probability floor for floor smoothing")->check(CLI::PositiveNumber);
  }

  igd::Smoothing get() const {
    igd::Smoothing s;
    s.kind = kind == "floor" ? igd::Smoothing::Kind::floor : igd::Smoothing::Kind::laplace;
    s.epsilon = epsilon;
    return s;
  }
};

// build-trie
struct BuildTrieCmd {
  CatalogOptions catalog;
  SmoothingOptions smoothing;
  std::string train;
  std::string log_base = "nat";
  std::string out;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("build-trie", "Build an IG-annotated trie snapshot from a catalog");
    catalog.add(app);
    smoothing.add(app);
    app->add_option("--train", train, "Training interactions used to estimate item priors")
        ->check(CLI::ExistingFile);
    app->add_option("--log-base", log_base, "Logarithm base for entropy")->check(CLI::IsMember(kLogBases));
    app->add_option("--out", out, "Trie snapshot path")->required();
    app->callback([this] { run(); });
  }

  void run() const {
    igd::Catalog cat = catalog.load();
    if (!train.empty()) cat = igd::estimate_priors(cat, igd::load_interactions(train, igd::Split::train, cat),
                                                   smoothing.get());
    ensure_parent(out);
    igd::save_trie(igd::PrefixTrie::build(std::move(cat), igd::parse_log_base(log_base)), out);
  }
};

// stats
struct StatsCmd {
  std::string trie;
  std::string train;
  std::string out;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("stats", "Zero-IG token statistics over training targets");
    app->add_option("--trie", trie, "Trie snapshot")->required()->check(CLI::ExistingFile);
    app->add_option("--train", train, "Training interactions")->required()->check(CLI::ExistingFile);
    app->add_option("--out", out, "Also write the JSON to this file");
    app->callback([this] { run(); });
  }

  void run() const {
    const auto t = igd::load_trie(trie);
    const auto s = igd::zero_ig_stats(t, igd::load_interactions(train, igd::Split::train, t.catalog()));
    ordered_json j;
    j["total_token_instances"] = s.total_token_instances;
    j["zero_ig_instances"] = s.zero_ig_instances;
    j["percent"] = s.percent;
    j["per_depth_histogram"] = ordered_json::array();
    for (const auto& [pos, c] : s.per_depth_histogram)
      j["per_depth_histogram"].push_back({{"position", pos}, {"total", c.total}, {"zero", c.zero}});
    j["items"] = s.items;
    j["interactions"] = s.interactions;
    j["table1"] = {{"items", s.items},
                   {"interactions", s.interactions},
                   {"tokens", s.total_token_instances},
                   {"zero_ig_tokens", s.zero_ig_instances},
                   {"zero_ig_percent", s.percent}};
    const std::string text = j.dump(2) + "\n";
    std::cout << text;
    if (!out.empty()) write_text(out, text);
  }
};

// weights export
struct WeightsCmd {
  std::string trie;
  std::string train;
  std::string scheme = "binary";
  double beta = 1.0;
  std::string log_base;
  std::string out;

  void add(CLI::App& root) {
    auto* group = root.add_subcommand("weights", "Token weight utilities");
    group->require_subcommand(1);
    auto* app = group->add_subcommand("export", "Write per-token IG and tuning weights as JSONL");
    app->add_option("--trie", trie, "Trie snapshot")->required()->check(CLI::ExistingFile);
    app->add_option("--train", train, "Training interactions")->required()->check(CLI::ExistingFile);
    app->add_option("--scheme", scheme, "Weighting scheme")->check(CLI::IsMember({"binary", "linear"}));
    app->add_option("--beta", beta, "Weight floor for low-IG tokens")->check(CLI::Range(0.0, 1.0));
    app->add_option("--log-base", log_base, "Recompute IG in this base")->check(CLI::IsMember(kLogBases));
    app->add_option("--out", out, "Output JSONL")->required();
    app->callback([this] { run(); });
  }

  void run() const {
    auto t = igd::load_trie(trie);
    if (!log_base.empty() && igd::parse_log_base(log_base) != t.log_base())
      t = igd::PrefixTrie::build(t.catalog(), igd::parse_log_base(log_base));
    const auto data = igd::load_interactions(train, igd::Split::train, t.catalog());
    const auto s = scheme == "linear" ? igd::WeightScheme::linear(beta, igd::global_ig_max(t))
                                      : igd::WeightScheme::binary(beta);
    ensure_parent(out);
    igd::export_weights(data, t, s, out);
  }
};

// train
struct TrainCmd {
  std::string trie;
  std::string train;
  std::string scheme = "none";
  double beta = 1.0;
  double lr = 5.0;
  int epochs = 1;
  std::size_t batch_size = 16;
  std::string vocab_mode = "full";
  std::uint64_t seed = 7;
  std::string out;
  std::string loss_csv;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("train", "Train the tabular next-token model");
    app->add_option("--trie", trie, "Trie snapshot")->required()->check(CLI::ExistingFile);
    app->add_option("--train", train, "Training interactions")->required()->check(CLI::ExistingFile);
    app->add_option("--scheme", scheme, "Token weighting")->check(CLI::IsMember({"none", "binary", "linear"}));
    app->add_option("--beta", beta, "Weight floor for low-IG tokens")->check(CLI::Range(0.0, 1.0));
    app->add_option("--lr", lr, "Learning rate")->check(CLI::PositiveNumber);
    app->add_option("--epochs", epochs, "Epochs")->check(CLI::PositiveNumber);
    app->add_option("--batch-size", batch_size, "Mini-batch size in records")->check(CLI::PositiveNumber);
    app->add_option("--vocab-mode", vocab_mode, "Softmax support")->check(CLI::IsMember({"full", "constrained"}));
    app->add_option("--seed", seed, "Shuffle seed");
    app->add_option("--out", out, "Model file")->required();
    app->add_option("--loss-csv", loss_csv, "Per-step loss split by IG class");
    app->callback([this] { run(); });
  }

  void run() const {
    const auto t = igd::load_trie(trie);
    const auto data = igd::load_interactions(train, igd::Split::train, t.catalog());
    igd::TabularLM model(t, lr, igd::parse_vocab_mode(vocab_mode), seed);
    igd::TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.shuffle_seed = seed;
    if (scheme == "binary") cfg.scheme = igd::WeightScheme::binary(beta);
    if (scheme == "linear") cfg.scheme = igd::WeightScheme::linear(beta, igd::global_ig_max(t));
    const auto trace = igd::train(model, data, t, cfg);
    ensure_parent(out);
    igd::save_model(model, t, out);
    if (!loss_csv.empty()) {
      ensure_parent(loss_csv);
      igd::loss_split_report(trace, loss_csv);
    }
  }
};

// decode
struct DecodeCmd {
  std::string trie;
  std::string test;
  std::string split = "test";
  std::string scorer = "prior";
  std::string mode = "igd";
  double alpha = 0.0;
  std::size_t width = 10;
  std::size_t top_k = 10;
  unsigned jobs = 1;
  std::string out;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("decode", "Constrained beam search over the trie");
    app->add_option("--trie", trie, "Trie snapshot")->required()->check(CLI::ExistingFile);
    app->add_option("--test", test, "Interactions to decode")->required()->check(CLI::ExistingFile);
    app->add_option("--split", split, "Split label of the input")->check(CLI::IsMember({"train", "valid", "test"}));
    app->add_option("--scorer", scorer, "Scorer spec, e.g. biased(gamma=2,base=prior)");
    app->add_option("--mode", mode, "Beam scoring")->check(CLI::IsMember({"standard", "igd"}));
    app->add_option("--alpha", alpha, "IG penalty strength")->check(CLI::Range(0.0, 1.0));
    app->add_option("--width", width, "Beam width")->check(CLI::PositiveNumber);
    app->add_option("--topk", top_k, "Items returned per record")->check(CLI::PositiveNumber);
    app->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
    app->add_option("--out", out, "Ranked lists JSONL")->required();
    app->callback([this] { run(); });
  }

  void run() const {
    const auto t = igd::load_trie(trie);
    const auto records = igd::load_interactions(test, igd::parse_split(split), t.catalog());
    const igd::BeamConfig beam{width, top_k, alpha, igd::parse_decode_mode(mode)};
    for (const auto& w : beam.validate()) std::cerr << "warning: " << w << "\n";
    const auto s = igd::make_scorer(scorer, t);
    const auto lists = igd::decode_batch(*s, t, records, beam, jobs);
    ensure_parent(out);
    igd::save_ranked_lists(lists, records, out);
  }
};

// Loads decoded lists and pairs them with ground truth by position.
struct Decoded {
  std::vector<igd::RankedList> lists;
  std::vector<igd::ItemIndex> truths;
};

Decoded load_decoded(const fs::path& decoded, const fs::path& truth, const igd::Catalog& catalog) {
  const auto recs = igd::load_ranked_lists(decoded, catalog);
  const auto set = igd::load_interactions(truth, igd::Split::test, catalog);
  if (recs.size() != set.records.size())
    throw igd::ValidationError("decoded file has " + std::to_string(recs.size()) + " records but ground truth has " +
                               std::to_string(set.records.size()));
  Decoded d;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (recs[i].user_id != set.records[i].user_id)
      throw igd::ValidationError("record " + std::to_string(i) + ": decoded user '" + recs[i].user_id +
                                 "' does not match ground-truth user '" + set.records[i].user_id + "'");
    d.lists.push_back(recs[i].list);
  }
  d.truths = targets(set);
  return d;
}

// eval
struct EvalCmd {
  std::string trie;
  std::string decoded;
  std::string test;
  std::vector<int> ks{5, 10};
  std::string out;
  std::string gap_csv;
  std::string diversity_out;
  std::string policy = "hold";

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("eval", "HR/NDCG, entropy gap and diversity of decoded lists");
    app->add_option("--trie", trie, "Trie snapshot")->required()->check(CLI::ExistingFile);
    app->add_option("--decoded", decoded, "Ranked lists JSONL")->required()->check(CLI::ExistingFile);
    app->add_option("--test", test, "Ground-truth interactions")->required()->check(CLI::ExistingFile);
    app->add_option("--ks", ks, "Cutoffs")->delimiter(',')->check(CLI::PositiveNumber);
    app->add_option("--out", out, "Metric report JSON")->required();
    app->add_option("--gap-csv", gap_csv, "Entropy gap curve CSV");
    app->add_option("--diversity-out", diversity_out, "FWR and ISE JSON");
    app->add_option("--gap-policy", policy, "Items shorter than the step")->check(CLI::IsMember({"hold", "exclude"}));
    app->callback([this] { run(); });
  }

  void run() const {
    const auto t = igd::load_trie(trie);
    const auto d = load_decoded(decoded, test, t.catalog());
    ensure_parent(out);
    igd::write_metric_report(igd::hr_ndcg(d.lists, d.truths, ks), out);
    if (!gap_csv.empty()) {
      const auto p = policy == "exclude" ? igd::ShortItemPolicy::exclude : igd::ShortItemPolicy::hold;
      ensure_parent(gap_csv);
      igd::write_entropy_gap_csv(igd::entropy_gap(d.lists, d.truths, t, 0, 10, p), gap_csv);
    }
    if (!diversity_out.empty()) {
      const auto div = igd::diversity(d.lists, t.catalog(), 10);
      ordered_json j{{"fwr", div.fwr}, {"ise", div.ise}, {"n_lists", div.n_lists}};
      write_text(diversity_out, j.dump(2) + "\n");
    }
  }
};

// report
struct ReportCmd {
  std::string trie;
  std::string scorer = "prior";
  std::string sample;
  std::size_t buckets = 10;
  std::string out;
  std::string histogram_csv;

  std::string gap_trie;
  std::string decoded;
  std::string test;
  int max_step = 0;
  std::size_t top_n = 10;
  std::string policy = "hold";
  std::string gap_out;

  void add(CLI::App& root) {
    auto* group = root.add_subcommand("report", "Plot-ready reports");
    group->require_subcommand(1);

    auto* ig = group->add_subcommand("ig-logit", "Log-probability of tokens against their IG");
    ig->add_option("--trie", trie, "Trie snapshot")->required()->check(CLI::ExistingFile);
    ig->add_option("--scorer", scorer, "Scorer spec");
    ig->add_option("--sample", sample, "Interactions whose targets are scored")->required()->check(CLI::ExistingFile);
    ig->add_option("--buckets", buckets, "Equal-width IG buckets")->check(CLI::PositiveNumber);
    ig->add_option("--out", out, "Report JSON")->required();
    ig->add_option("--histogram-csv", histogram_csv, "Histogram as CSV");
    ig->callback([this] { run_ig(); });

    auto* gap = group->add_subcommand("entropy-gap", "Per-step entropy of predictions against ground truth");
    gap->add_option("--trie", gap_trie, "Trie snapshot")->required()->check(CLI::ExistingFile);
    gap->add_option("--decoded", decoded, "Ranked lists JSONL")->required()->check(CLI::ExistingFile);
    gap->add_option("--test", test, "Ground-truth interactions")->required()->check(CLI::ExistingFile);
    gap->add_option("--max-step", max_step, "Last step (0: deepest item)")->check(CLI::NonNegativeNumber);
    gap->add_option("--top-n", top_n, "Predictions per list")->check(CLI::PositiveNumber);
    gap->add_option("--policy", policy, "Items shorter than the step")->check(CLI::IsMember({"hold", "exclude"}));
    gap->add_option("--out", gap_out, "Curve CSV")->required();
    gap->callback([this] { run_gap(); });
  }

  void run_ig() const {
    const auto t = igd::load_trie(trie);
    const auto data = igd::load_interactions(sample, igd::Split::test, t.catalog());
    const auto s = igd::make_scorer(scorer, t);
    const auto report = igd::ig_logit_report(*s, t, data, buckets);
    ensure_parent(out);
    igd::write_ig_logit_report(report, out);
    if (!histogram_csv.empty()) {
      std::string text = "lo,hi,count,mean_logp\n";
      for (const auto& b : report.histogram)
        text += igd::detail::shortest(b.lo) + "," + igd::detail::shortest(b.hi) + "," + std::to_string(b.count) +
                "," + (b.count ? igd::detail::shortest(b.mean_logp) : std::string()) + "\n";
      write_text(histogram_csv, text);
    }
  }

  void run_gap() const {
    const auto t = igd::load_trie(gap_trie);
    const auto d = load_decoded(decoded, test, t.catalog());
    const auto p = policy == "exclude" ? igd::ShortItemPolicy::exclude : igd::ShortItemPolicy::hold;
    ensure_parent(gap_out);
    igd::write_entropy_gap_csv(igd::entropy_gap(d.lists, d.truths, t, max_step, top_n, p), gap_out);
  }
};

// simulate
struct SimulateCmd {
  std::string preset = "benchmark";
  std::uint64_t seed = 7;
  std::string out_dir;

  igd::CatalogGenConfig cat;
  igd::InteractionGenConfig inter;
  std::vector<int> prefix_len{1, 2};
  std::vector<int> body_len{1, 3};
  std::vector<int> history_len{10, 10};
  std::size_t bulk = 200;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("simulate", "Generate a synthetic catalog and interaction splits");
    app->add_option("--preset", preset, "benchmark, fig1 or custom")
        ->check(CLI::IsMember({"benchmark", "fig1", "custom"}));
    app->add_option("--seed", seed, "Generator seed");
    app->add_option("--out-dir", out_dir, "Output directory")->required();
    app->add_option("--items", cat.n_items, "custom: item count")->check(CLI::PositiveNumber);
    app->add_option("--franchises", cat.n_franchises, "custom: franchise count")->check(CLI::PositiveNumber);
    app->add_option("--prefix-len", prefix_len, "custom: shared prefix length MIN,MAX")->delimiter(',')->expected(2);
    app->add_option("--body-len", body_len, "custom: body length MIN,MAX")->delimiter(',')->expected(2);
    app->add_option("--filler-rate", cat.filler_rate, "custom: filler chance per gap")->check(CLI::Range(0.0, 1.0));
    app->add_option("--vocab-size", cat.vocab_size, "custom: body word pool")->check(CLI::PositiveNumber);
    app->add_option("--article-rate", cat.article_rate, "custom: chance of a leading article")
        ->check(CLI::Range(0.0, 1.0));
    app->add_option("--bulk", bulk, "fig1: generated items after the anchors");
    app->add_option("--users", inter.n_users, "custom: user count")->check(CLI::PositiveNumber);
    app->add_option("--history-len", history_len, "custom: records per user MIN,MAX")->delimiter(',')->expected(2);
    app->add_option("--zipf", inter.zipf_s, "custom: popularity exponent")->check(CLI::NonNegativeNumber);
    app->add_option("--affinity", inter.cluster_affinity, "custom: chance to stay in a franchise")
        ->check(CLI::Range(0.0, 1.0));
    app->callback([this] { run(); });
  }

  void run() {
    igd::GeneratedCatalog g;
    igd::InteractionGenConfig icfg = inter;
    if (preset == "benchmark") {
      g = igd::gen_catalog(igd::benchmark_catalog_config(seed));
      icfg = igd::benchmark_interaction_config(seed);
    } else if (preset == "fig1") {
      g = igd::fig1_catalog(bulk, seed);
      icfg = igd::InteractionGenConfig{};
      icfg.seed = seed + 1;
    } else {
      cat.shared_prefix_len = {prefix_len[0], prefix_len[1]};
      cat.body_len = {body_len[0], body_len[1]};
      cat.seed = seed;
      g = igd::gen_catalog(cat);
      icfg.history_len = {history_len[0], history_len[1]};
      icfg.seed = seed + 1;
    }
    const auto data = igd::gen_interactions(icfg, g.catalog, g.cluster_of);
    const fs::path dir = out_dir;
    fs::create_directories(dir);
    igd::save_catalog(g.catalog, dir / "catalog.jsonl");
    igd::save_interactions(data.train, g.catalog, dir / "train.tsv");
    igd::save_interactions(data.valid, g.catalog, dir / "valid.tsv");
    igd::save_interactions(data.test, g.catalog, dir / "test.tsv");
    std::string fillers = "item_id\tposition\n";
    for (auto [item, pos] : g.filler_positions)
      fillers += g.catalog.item(item).item_id + "\t" + std::to_string(pos + 1) + "\n";
    write_text(dir / "fillers.tsv", fillers);
    std::string clusters = "item_id\tcluster\n";
    for (igd::ItemIndex i = 0; i < g.catalog.size(); ++i)
      clusters += g.catalog.item(i).item_id + "\t" + std::to_string(g.cluster_of[i]) + "\n";
    write_text(dir / "clusters.tsv", clusters);
  }
};

// ab-run
struct AbRunCmd {
  CatalogOptions catalog;
  SmoothingOptions smoothing;
  std::string train, valid, test;
  igd::AbRunConfig cfg;
  std::string weight_kind = "binary";
  std::string vocab_mode = "full";
  std::string out_dir;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("ab-run", "Beta sweep then alpha sweep with a summary table");
    catalog.add(app);
    smoothing.add(app);
    app->add_option("--train", train, "Training interactions")->required()->check(CLI::ExistingFile);
    app->add_option("--valid", valid, "Validation interactions")->required()->check(CLI::ExistingFile);
    app->add_option("--test", test, "Test interactions")->required()->check(CLI::ExistingFile);
    app->add_option("--betas", cfg.beta_grid, "Beta grid")->delimiter(',');
    app->add_option("--alphas", cfg.alpha_grid, "Alpha grid")->delimiter(',');
    app->add_option("--scheme", weight_kind, "Weighting scheme")->check(CLI::IsMember({"binary", "linear"}));
    app->add_option("--lr", cfg.learning_rate, "Learning rate")->check(CLI::PositiveNumber);
    app->add_option("--epochs", cfg.epochs, "Epochs")->check(CLI::PositiveNumber);
    app->add_option("--batch-size", cfg.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
    app->add_option("--vocab-mode", vocab_mode, "Softmax support")->check(CLI::IsMember({"full", "constrained"}));
    app->add_option("--lambda", cfg.lambda, "Weight of the model in the personalized mix")
        ->check(CLI::Range(0.0, 1.0));
    app->add_option("--gamma", cfg.gamma, "Low-IG bias strength")->check(CLI::NonNegativeNumber);
    app->add_option("--width", cfg.width, "Beam width")->check(CLI::PositiveNumber);
    app->add_option("--topk", cfg.top_k, "Items returned per record")->check(CLI::PositiveNumber);
    app->add_option("--select", cfg.selection_metric, "Validation metric for selection")
        ->check(CLI::IsMember({"hr5", "hr10", "ndcg5", "ndcg10"}));
    app->add_option("--jobs", cfg.jobs, "Parallel cells")->check(CLI::PositiveNumber);
    app->add_option("--seed", cfg.seed, "Seed for initialization and shuffling");
    app->add_option("--out-dir", out_dir, "Output directory")->required();
    app->callback([this] { run(); });
  }

  void run() {
    igd::Catalog cat = catalog.load();
    const auto tr = igd::load_interactions(train, igd::Split::train, cat);
    cat = igd::estimate_priors(cat, tr, smoothing.get());
    const auto va = igd::load_interactions(valid, igd::Split::valid, cat);
    const auto te = igd::load_interactions(test, igd::Split::test, cat);
    cfg.weight_kind = igd::parse_weight_kind(weight_kind);
    cfg.vocab_mode = igd::parse_vocab_mode(vocab_mode);
    cfg.out_dir = out_dir;
    const auto result = igd::ab_run(cat, tr, va, te, cfg);
    std::cout << igd::summary_csv(result, cfg.seed);
  }
};

void print_error(std::string_view kind, int code, std::string_view message) {
  std::cerr << nlohmann::json{{"error", kind}, {"exit_code", code}, {"message", message}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Information-gain aware tries, tuning weights and decoding for generative recommendation", "igd"};
  app.config_formatter(std::make_shared<JsonConfig>(&app));
  app.set_config("--config", "", "JSON config file; command-line flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);

  BuildTrieCmd build_trie;
  StatsCmd stats;
  WeightsCmd weights;
  TrainCmd train;
  DecodeCmd decode;
  EvalCmd eval;
  ReportCmd report;
  SimulateCmd simulate;
  AbRunCmd ab_run;
  build_trie.add(app);
  stats.add(app);
  weights.add(app);
  train.add(app);
  decode.add(app);
  eval.add(app);
  report.add(app);
  simulate.add(app);
  ab_run.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    if (rc == 0) return 0;
    print_error("usage", 2, e.what());
    return 2;
  } catch (const igd::ValidationError& e) {
    print_error("validation", 3, e.what());
    return 3;
  } catch (const std::exception& e) {
    print_error("runtime", 4, e.what());
    return 4;
  }
  return 0;
}
