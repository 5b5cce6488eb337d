#include "igd/pipeline.hpp"

#include <atomic>
#include <cctype>
#include <fstream>
#include <functional>
#include <thread>

#include <json.hpp>

#include "igd/error.hpp"
#include "igd/numfmt.hpp"

namespace igd {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

double parse_real(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw ValidationError(what + " expects a number, got '" + text + "'");
  return v;
}

}  // namespace

ScorerSpec parse_scorer_spec(std::string_view text) {
  const std::string s = trim(text);
  ScorerSpec spec;
  std::size_t i = 0;
  while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_' || s[i] == '-')) ++i;
  spec.kind = s.substr(0, i);
  if (spec.kind.empty()) throw ValidationError("scorer spec '" + s + "' has no kind");
  if (i == s.size()) return spec;
  if (s[i] != '(' || s.back() != ')') throw ValidationError("malformed scorer spec '" + s + "'");

  const std::string body = s.substr(i + 1, s.size() - i - 2);
  std::size_t start = 0;
  int depth = 0;
  for (std::size_t k = 0; k <= body.size(); ++k) {
    const char c = k < body.size() ? body[k] : ',';
    if (c == '(') ++depth;
    if (c == ')' && --depth < 0) throw ValidationError("unbalanced parentheses in scorer spec '" + s + "'");
    if (c != ',' || depth != 0) continue;
    const std::string arg = trim(std::string_view(body).substr(start, k - start));
    start = k + 1;
    if (arg.empty()) {
      if (k == body.size() && spec.args.empty()) break;
      throw ValidationError("empty argument in scorer spec '" + s + "'");
    }
    const auto eq = arg.find('=');
    if (eq == std::string::npos) throw ValidationError("argument '" + arg + "' needs key=value");
    const std::string key = trim(std::string_view(arg).substr(0, eq));
    if (!spec.args.emplace(key, trim(std::string_view(arg).substr(eq + 1))).second)
      throw ValidationError("duplicate argument '" + key + "' in scorer spec");
  }
  if (depth != 0) throw ValidationError("unbalanced parentheses in scorer spec '" + s + "'");
  return spec;
}

ScorerPtr make_scorer(std::string_view text, const PrefixTrie& trie) {
  const ScorerSpec spec = parse_scorer_spec(text);
  auto args = spec.args;
  auto take = [&](const std::string& key) -> std::optional<std::string> {
    auto it = args.find(key);
    if (it == args.end()) return std::nullopt;
    std::string v = it->second;
    args.erase(it);
    return v;
  };
  auto need = [&](const std::string& key) {
    auto v = take(key);
    if (!v) throw ValidationError(spec.kind + " scorer needs '" + key + "'");
    return *v;
  };

  ScorerPtr out;
  if (spec.kind == "prior" || spec.kind == "trie_prior") {
    out = make_trie_prior_scorer();
  } else if (spec.kind == "personalized") {
    const double lambda = parse_real(take("lambda").value_or("0.5"), "lambda");
    const auto train = load_interactions(need("train"), Split::train, trie.catalog());
    ScorerPtr base;
    if (auto b = take("base")) base = make_scorer(*b, trie);
    out = make_personalized_scorer(trie, train, lambda, std::move(base));
  } else if (spec.kind == "biased") {
    const double gamma = parse_real(take("gamma").value_or("2"), "gamma");
    out = make_biased_scorer(make_scorer(take("base").value_or("prior"), trie), gamma);
  } else if (spec.kind == "replay") {
    out = make_replay_scorer(need("path"));
  } else if (spec.kind == "tabular") {
    out = as_scorer(load_model(need("model"), trie));
  } else {
    throw ValidationError("unknown scorer kind '" + spec.kind + "'");
  }
  if (!args.empty()) throw ValidationError(spec.kind + " scorer does not take '" + args.begin()->first + "'");
  return out;
}

void AbRunConfig::validate() const {
  if (beta_grid.empty() || alpha_grid.empty()) throw ValidationError("sweep grids must not be empty");
  for (double b : beta_grid)
    if (!(b >= 0.0 && b <= 1.0)) throw ValidationError("beta grid values must lie in [0, 1]");
  for (double a : alpha_grid)
    if (!(a >= 0.0 && a <= 1.0)) throw ValidationError("alpha grid values must lie in [0, 1]");
  if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
  if (epochs < 1 || batch_size < 1) throw ValidationError("epochs and batch size must be >= 1");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("lambda must lie in [0, 1]");
  if (!(gamma >= 0.0)) throw ValidationError("gamma must be >= 0");
  if (jobs < 1) throw ValidationError("jobs must be >= 1");
  if (selection_metric != "hr5" && selection_metric != "hr10" && selection_metric != "ndcg5" &&
      selection_metric != "ndcg10")
    throw ValidationError("selection metric must be hr5, hr10, ndcg5 or ndcg10");
  BeamConfig{width, top_k, 0.0, DecodeMode::igd}.validate();
}

double CellResult::metric(const std::string& name, bool on_test) const {
  const MetricReport& r = on_test ? test : valid;
  if (name == "hr5") return r.hr.at(5);
  if (name == "hr10") return r.hr.at(10);
  if (name == "ndcg5") return r.ndcg.at(5);
  if (name == "ndcg10") return r.ndcg.at(10);
  throw ValidationError("unknown metric '" + name + "'");
}

const CellResult& AbRunResult::cell(double beta, double alpha) const {
  for (const auto& c : cells)
    if (c.beta == beta && c.alpha == alpha) return c;
  throw ValidationError("no cell for beta=" + detail::shortest(beta) + ", alpha=" + detail::shortest(alpha));
}

namespace {

const std::vector<int> kCutoffs{5, 10};

// Runs task(i) for i in [0, n) on up to `jobs` threads; rethrows the first
// failure by index, prefixed with its stage name.
void run_parallel(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& task,
                  const std::function<std::string(std::size_t)>& stage) {
  struct Failure {
    int kind = 0;  // 1 validation, 2 other
    std::string message;
  };
  std::vector<Failure> failures(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        task(i);
      } catch (const ValidationError& e) {
        failures[i] = {1, e.what()};
      } catch (const std::exception& e) {
        failures[i] = {2, e.what()};
      }
    }
  };
  const unsigned threads = static_cast<unsigned>(std::min<std::size_t>(jobs, n));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (failures[i].kind == 0) continue;
    const std::string msg = "stage " + stage(i) + ": " + failures[i].message;
    if (failures[i].kind == 1) throw ValidationError(msg);
    throw RuntimeError(msg);
  }
}

std::string cell_name(double beta, double alpha) {
  return "beta=" + detail::shortest(beta) + "_alpha=" + detail::shortest(alpha);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << text;
  if (!out) throw RuntimeError("write failed for " + path.string());
}

std::vector<ItemIndex> targets(const InteractionSet& set) {
  std::vector<ItemIndex> out;
  for (const auto& r : set.records) out.push_back(r.target);
  return out;
}

}  // namespace

AbRunResult ab_run(const Catalog& catalog, const InteractionSet& train, const InteractionSet& valid,
                   const InteractionSet& test, const AbRunConfig& cfg) {
  cfg.validate();
  if (train.records.empty()) throw ValidationError("training split is empty");
  if (valid.records.empty() || test.records.empty()) throw ValidationError("validation and test splits are required");

  const auto& out_dir = cfg.out_dir;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir / "models");
    std::filesystem::create_directories(out_dir / "cells");
    std::filesystem::remove(out_dir / "summary.csv");
    std::filesystem::remove(out_dir / "selection.json");
    write_text(out_dir / "INCOMPLETE", "ab-run did not finish\n");
  }

  const PrefixTrie trie = PrefixTrie::build(catalog);
  std::vector<double> betas = cfg.beta_grid;
  if (std::find(betas.begin(), betas.end(), 1.0) == betas.end()) betas.push_back(1.0);

  // Stage 1: one tuned model per beta.
  const double ig_max = cfg.weight_kind == WeightKind::linear ? global_ig_max(trie) : 1.0;
  std::vector<ScorerPtr> scorers(betas.size());
  run_parallel(
      betas.size(), cfg.jobs,
      [&](std::size_t i) {
        TabularLM model(trie, cfg.learning_rate, cfg.vocab_mode, cfg.seed);
        TrainConfig tc;
        tc.epochs = cfg.epochs;
        tc.batch_size = cfg.batch_size;
        tc.shuffle_seed = cfg.seed;
        tc.scheme = cfg.weight_kind == WeightKind::binary ? WeightScheme::binary(betas[i])
                                                          : WeightScheme::linear(betas[i], ig_max);
        const LossTrace trace = igd::train(model, train, trie, tc);
        if (!out_dir.empty()) {
          const std::string name = "beta=" + detail::shortest(betas[i]);
          save_model(model, trie, out_dir / "models" / (name + ".json"));
          loss_split_report(trace, out_dir / "models" / (name + "_loss.csv"));
        }
        auto personalized = make_personalized_scorer(trie, train, cfg.lambda, as_scorer(std::move(model)));
        scorers[i] = make_biased_scorer(std::move(personalized), cfg.gamma);
      },
      [&](std::size_t i) { return "train(beta=" + detail::shortest(betas[i]) + ")"; });

  auto scorer_for = [&](double beta) {
    return scorers[static_cast<std::size_t>(std::find(betas.begin(), betas.end(), beta) - betas.begin())];
  };
  const auto valid_truth = targets(valid);
  const auto test_truth = targets(test);

  auto evaluate = [&](std::vector<std::pair<double, double>> grid) {
    std::vector<CellResult> cells(grid.size());
    run_parallel(
        grid.size(), cfg.jobs,
        [&](std::size_t i) {
          auto [beta, alpha] = grid[i];
          const BeamConfig beam{cfg.width, cfg.top_k, alpha, DecodeMode::igd};
          const auto& scorer = *scorer_for(beta);
          const auto valid_lists = decode_batch(scorer, trie, valid, beam, 1);
          const auto test_lists = decode_batch(scorer, trie, test, beam, 1);
          CellResult& c = cells[i];
          c.beta = beta;
          c.alpha = alpha;
          c.valid = hr_ndcg(valid_lists, valid_truth, kCutoffs);
          c.test = hr_ndcg(test_lists, test_truth, kCutoffs);
          c.diversity = diversity(test_lists, catalog, 10);
          const auto gap = entropy_gap(test_lists, test_truth, trie);
          c.entropy_gap_mean = gap.mean_gap();
          if (!out_dir.empty()) {
            const auto dir = out_dir / "cells" / cell_name(beta, alpha);
            std::filesystem::create_directories(dir);
            save_ranked_lists(test_lists, test, dir / "decode_test.jsonl");
            save_ranked_lists(valid_lists, valid, dir / "decode_valid.jsonl");
            write_metric_report(c.test, dir / "metrics_test.json");
            write_metric_report(c.valid, dir / "metrics_valid.json");
            write_entropy_gap_csv(gap, dir / "entropy_gap.csv");
          }
        },
        [&](std::size_t i) { return "decode/eval(" + cell_name(grid[i].first, grid[i].second) + ")"; });
    return cells;
  };

  auto pick = [&](const std::vector<CellResult>& cells) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < cells.size(); ++i)
      if (cells[i].metric(cfg.selection_metric, false) > cells[best].metric(cfg.selection_metric, false)) best = i;
    return best;
  };

  // Stage 2: beta sweep at alpha = 0; ties keep the earlier grid entry.
  std::vector<std::pair<double, double>> beta_grid;
  for (double b : cfg.beta_grid) beta_grid.emplace_back(b, 0.0);
  AbRunResult result;
  result.cells = evaluate(beta_grid);
  result.best_beta = result.cells[pick(result.cells)].beta;

  // Stage 3: alpha sweep at the chosen beta.
  std::vector<std::pair<double, double>> alpha_grid;
  for (double a : cfg.alpha_grid)
    if (a != 0.0) alpha_grid.emplace_back(result.best_beta, a);
  auto alpha_cells = evaluate(alpha_grid);
  std::vector<CellResult> sweep;
  for (double a : cfg.alpha_grid) {
    if (a == 0.0) {
      sweep.push_back(result.cell(result.best_beta, 0.0));
    } else {
      for (const auto& c : alpha_cells)
        if (c.alpha == a) sweep.push_back(c);
    }
  }
  result.best_alpha = sweep[pick(sweep)].alpha;
  for (auto& c : alpha_cells) result.cells.push_back(std::move(c));

  bool has_baseline = false;
  for (const auto& c : result.cells) has_baseline |= c.beta == 1.0 && c.alpha == 0.0;
  if (!has_baseline) result.cells.push_back(evaluate({{1.0, 0.0}}).front());

  if (!out_dir.empty()) {
    write_text(out_dir / "summary.csv", summary_csv(result, cfg.seed));
    nlohmann::ordered_json sel;
    sel["selection_metric"] = cfg.selection_metric;
    sel["best_beta"] = result.best_beta;
    sel["best_alpha"] = result.best_alpha;
    sel["beta_grid"] = cfg.beta_grid;
    sel["alpha_grid"] = cfg.alpha_grid;
    sel["seed"] = cfg.seed;
    write_text(out_dir / "selection.json", sel.dump(2) + "\n");
    std::filesystem::remove(out_dir / "INCOMPLETE");
  }
  return result;
}

std::string summary_csv(const AbRunResult& result, std::uint64_t seed) {
  std::string out = "beta,alpha,hr5,hr10,ndcg5,ndcg10,fwr,ise,entropy_gap_mean,seed\n";
  for (const auto& c : result.cells) {
    for (double v : {c.beta, c.alpha, c.test.hr.at(5), c.test.hr.at(10), c.test.ndcg.at(5), c.test.ndcg.at(10),
                     c.diversity.fwr, c.diversity.ise, c.entropy_gap_mean})
      out += detail::shortest(v) + ',';
    out += std::to_string(seed) + '\n';
  }
  return out;
}

}  // namespace igd
