#include "igd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "igd/error.hpp"
#include "igd/numfmt.hpp"

namespace igd {

MetricReport hr_ndcg(std::span<const RankedList> lists, std::span<const ItemIndex> truths, std::span<const int> ks) {
  if (lists.size() != truths.size()) throw ValidationError("ranked lists and ground truths are not aligned");
  if (ks.empty()) throw ValidationError("no cutoffs given");
  for (int k : ks)
    if (k < 1) throw ValidationError("cutoff K must be >= 1");
  MetricReport r;
  r.n_users = lists.size();
  for (int k : ks) r.hr[k] = r.ndcg[k] = 0.0;
  if (lists.empty()) return r;
  for (std::size_t u = 0; u < lists.size(); ++u) {
    const auto& e = lists[u].entries;
    std::size_t rank = 0;
    for (std::size_t i = 0; i < e.size(); ++i)
      if (e[i].item == truths[u]) {
        rank = i + 1;
        break;
      }
    if (rank == 0) continue;
    for (int k : ks)
      if (rank <= static_cast<std::size_t>(k)) {
        r.hr[k] += 1.0;
        r.ndcg[k] += 1.0 / std::log2(1.0 + static_cast<double>(rank));
      }
  }
  const double n = static_cast<double>(lists.size());
  for (auto& [k, v] : r.hr) v /= n;
  for (auto& [k, v] : r.ndcg) v /= n;
  return r;
}

double EntropyGapCurve::mean_gap() const {
  if (steps.empty()) return 0.0;
  double s = 0.0;
  for (const auto& st : steps) s += st.gap;
  return s / static_cast<double>(steps.size());
}

namespace {

// Node entropies along an item's path; entry t-1 is the prefix of length t.
std::vector<double> path_entropies(const PrefixTrie& trie, ItemIndex item) {
  std::vector<double> out;
  for (NodeId at = trie.leaf_of(item); at != PrefixTrie::root(); at = trie.node(at).parent)
    out.push_back(trie.node(at).entropy);
  std::reverse(out.begin(), out.end());
  return out;
}

}  // namespace

EntropyGapCurve entropy_gap(std::span<const RankedList> lists, std::span<const ItemIndex> truths,
                            const PrefixTrie& trie, int max_step, std::size_t top_n, ShortItemPolicy policy) {
  if (lists.size() != truths.size()) throw ValidationError("ranked lists and ground truths are not aligned");
  if (top_n < 1) throw ValidationError("top_n must be >= 1");
  const std::size_t n_items = trie.catalog().size();
  auto check = [&](ItemIndex i) {
    if (i >= n_items) throw ValidationError("item " + std::to_string(i) + " is not in the trie");
  };

  std::vector<std::vector<double>> pred, gt;
  for (std::size_t u = 0; u < lists.size(); ++u) {
    check(truths[u]);
    gt.push_back(path_entropies(trie, truths[u]));
    const auto& e = lists[u].entries;
    for (std::size_t i = 0; i < std::min(top_n, e.size()); ++i) {
      check(e[i].item);
      pred.push_back(path_entropies(trie, e[i].item));
    }
  }
  if (max_step <= 0) {
    std::size_t deepest = 0;
    for (const auto& p : pred) deepest = std::max(deepest, p.size());
    for (const auto& g : gt) deepest = std::max(deepest, g.size());
    max_step = static_cast<int>(deepest);
  }

  // Mean at step t, or nothing when every path is excluded.
  auto mean_at = [&](const std::vector<std::vector<double>>& paths, std::size_t t) -> std::optional<double> {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& p : paths) {
      if (t <= p.size()) {
        s += p[t - 1];
        ++n;
      } else if (policy == ShortItemPolicy::hold) {
        s += p.back();
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return s / static_cast<double>(n);
  };

  EntropyGapCurve curve;
  for (int t = 1; t <= max_step; ++t) {
    auto p = mean_at(pred, static_cast<std::size_t>(t));
    auto g = mean_at(gt, static_cast<std::size_t>(t));
    if (!p || !g) continue;
    curve.steps.push_back({t, *p, *g, *p - *g});
  }
  return curve;
}

DiversityReport diversity(std::span<const RankedList> lists, const Catalog& catalog, std::size_t top_k) {
  if (top_k < 1) throw ValidationError("top_k must be >= 1");
  DiversityReport r;
  for (std::size_t u = 0; u < lists.size(); ++u) {
    const auto& e = lists[u].entries;
    const std::size_t n = std::min(top_k, e.size());
    if (n == 0) throw ValidationError("ranked list " + std::to_string(u) + " is empty");

    std::map<TokenId, std::size_t> first;
    std::size_t most = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (e[i].item >= catalog.size()) throw ValidationError("item " + std::to_string(e[i].item) + " is unknown");
      most = std::max(most, ++first[catalog.item(e[i].item).tokens.front()]);
    }
    r.fwr += static_cast<double>(most) / static_cast<double>(n);

    double top = -INFINITY;
    for (std::size_t i = 0; i < n; ++i) top = std::max(top, e[i].score);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(e[i].score - top);
    double h = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = std::exp(e[i].score - top) / z;
      if (p > 0.0) h -= p * std::log(p);
    }
    r.ise += h;
  }
  r.n_lists = lists.size();
  if (r.n_lists) {
    r.fwr /= static_cast<double>(r.n_lists);
    r.ise /= static_cast<double>(r.n_lists);
  }
  return r;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("correlation inputs differ in length");
  if (x.size() < 2) return std::nullopt;
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

IGLogitReport ig_logit_report(const Scorer& scorer, const PrefixTrie& trie, const InteractionSet& sample,
                              std::size_t buckets) {
  if (sample.records.empty()) throw ValidationError("sample is empty");
  if (buckets < 1) throw ValidationError("histogram needs at least one bucket");
  std::vector<double> igs, logps;
  std::vector<char> zero;
  for (const auto& rec : sample.records) {
    if (rec.target >= trie.catalog().size()) throw ValidationError("sample target outside the trie");
    const UserContext ctx{rec.user_id, rec.history};
    NodeId at = PrefixTrie::root();
    for (TokenId t : trie.catalog().item(rec.target).tokens) {
      const auto d = scorer.distribution(ctx, trie, at);
      const NodeId next = *trie.child(at, t);
      const double p = d.prob(t);
      if (!(p > 0.0)) throw ValidationError("scorer gives zero probability to a ground-truth token");
      igs.push_back(trie.node(next).ig.value);
      zero.push_back(trie.node(next).ig.is_zero);
      logps.push_back(std::log(p));
      at = next;
    }
  }

  IGLogitReport r;
  double zs = 0.0, ns = 0.0;
  std::vector<double> nz_ig, nz_logp;
  for (std::size_t i = 0; i < igs.size(); ++i) {
    if (zero[i]) {
      zs += logps[i];
      ++r.n_zero_ig;
    } else {
      ns += logps[i];
      ++r.n_nonzero_ig;
      nz_ig.push_back(igs[i]);
      nz_logp.push_back(logps[i]);
    }
  }
  if (r.n_zero_ig) r.mean_logp_zero_ig = zs / static_cast<double>(r.n_zero_ig);
  if (r.n_nonzero_ig) r.mean_logp_nonzero_ig = ns / static_cast<double>(r.n_nonzero_ig);
  r.rank_correlation_nonzero = spearman(nz_ig, nz_logp);

  const double top = *std::max_element(igs.begin(), igs.end());
  const double width = top > 0.0 ? top / static_cast<double>(buckets) : 1.0;
  r.histogram.resize(buckets);
  for (std::size_t b = 0; b < buckets; ++b) {
    r.histogram[b].lo = width * static_cast<double>(b);
    r.histogram[b].hi = b + 1 == buckets && top > 0.0 ? top : width * static_cast<double>(b + 1);
  }
  for (std::size_t i = 0; i < igs.size(); ++i) {
    auto b = std::min(buckets - 1, static_cast<std::size_t>(igs[i] / width));
    ++r.histogram[b].count;
    r.histogram[b].mean_logp += logps[i];
  }
  for (auto& b : r.histogram)
    if (b.count) b.mean_logp /= static_cast<double>(b.count);
  return r;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << text;
  if (!out) throw RuntimeError("write failed for " + path.string());
}

nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

void write_metric_report(const MetricReport& report, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["hr"] = nlohmann::ordered_json::object();
  j["ndcg"] = nlohmann::ordered_json::object();
  for (auto [k, v] : report.hr) j["hr"][std::to_string(k)] = v;
  for (auto [k, v] : report.ndcg) j["ndcg"][std::to_string(k)] = v;
  j["n_users"] = report.n_users;
  write_text(path, j.dump(2) + "\n");
}

void write_entropy_gap_csv(const EntropyGapCurve& curve, const std::filesystem::path& path) {
  std::string text = "t,mean_pred_entropy,mean_gt_entropy,gap\n";
  for (const auto& s : curve.steps)
    text += std::to_string(s.t) + ',' + detail::shortest(s.mean_pred_entropy) + ',' +
            detail::shortest(s.mean_gt_entropy) + ',' + detail::shortest(s.gap) + '\n';
  write_text(path, text);
}

void write_ig_logit_report(const IGLogitReport& report, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["mean_logp_zero_ig"] = optional_json(report.mean_logp_zero_ig);
  j["mean_logp_nonzero_ig"] = optional_json(report.mean_logp_nonzero_ig);
  j["rank_correlation_nonzero"] = optional_json(report.rank_correlation_nonzero);
  j["n_zero_ig"] = report.n_zero_ig;
  j["n_nonzero_ig"] = report.n_nonzero_ig;
  j["histogram"] = nlohmann::ordered_json::array();
  for (const auto& b : report.histogram)
    j["histogram"].push_back({{"lo", b.lo}, {"hi", b.hi}, {"count", b.count}, {"mean_logp", b.mean_logp}});
  write_text(path, j.dump(2) + "\n");
}

}  // namespace igd
