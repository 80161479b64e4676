#pragma once

// Top-fraction head sets, Jaccard overlap, the Monte-Carlo random baseline
// and the Table-3-style overlap row.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "memlab/internals/importance.hpp"
#include "memlab/tensor/rng.hpp"

namespace memlab::stats {

struct HeadSet {
  int layers = 0, heads = 0;
  double fraction = 0.2;
  std::string source;
  std::set<std::pair<int, int>> members;  // (layer, head)
};

// Highest-importance ceil(fraction * L * H) heads; ties resolved by
// (layer, head) lexicographic order so selections are reproducible.
inline HeadSet top_fraction(const internals::ImportanceMatrix& m, double fraction,
                            const std::string& source = "") {
  if (fraction <= 0.0 || fraction > 1.0) throw Error("top_fraction: fraction must lie in (0, 1]");
  const int total = m.layers * m.heads;
  const int take = static_cast<int>(std::ceil(fraction * total));
  struct Entry {
    double score;
    int layer, head;
  };
  std::vector<Entry> entries;
  entries.reserve(static_cast<size_t>(total));
  for (int l = 0; l < m.layers; ++l)
    for (int h = 0; h < m.heads; ++h) entries.push_back({m.importance_at(l, h), l, h});
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.layer != b.layer) return a.layer < b.layer;
    return a.head < b.head;
  });
  HeadSet out;
  out.layers = m.layers;
  out.heads = m.heads;
  out.fraction = fraction;
  out.source = source;
  for (int i = 0; i < take; ++i) out.members.insert({entries[static_cast<size_t>(i)].layer,
                                                     entries[static_cast<size_t>(i)].head});
  return out;
}

inline double jaccard(const HeadSet& a, const HeadSet& b) {
  if (a.layers != b.layers || a.heads != b.heads)
    throw ShapeError("jaccard: head sets come from different model dimensions");
  size_t inter = 0;
  for (const auto& p : a.members) inter += b.members.count(p);
  size_t uni = a.members.size() + b.members.size() - inter;
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// E[J] for two independent size-pn subsets of n elements, ratio of expected
// intersection to expected union: p^2 / (2p - p^2).
inline double random_jaccard_closed_form(double fraction) {
  return fraction * fraction / (2.0 * fraction - fraction * fraction);
}

// Seeded Monte-Carlo baseline: mean Jaccard of two independent top-fraction
// subsets of n_heads elements over `trials` draws.
inline double random_jaccard_baseline(int n_heads, double fraction, int trials, RngStream rng) {
  if (n_heads < 1 || trials < 1) throw Error("random_jaccard_baseline: bad arguments");
  const int take = static_cast<int>(std::ceil(fraction * n_heads));
  std::vector<int> pool(static_cast<size_t>(n_heads));
  double acc = 0.0;
  for (int t = 0; t < trials; ++t) {
    RngStream trial = rng.substream(static_cast<uint64_t>(t));
    std::vector<char> a(static_cast<size_t>(n_heads), 0), b(static_cast<size_t>(n_heads), 0);
    for (int half = 0; half < 2; ++half) {
      for (int i = 0; i < n_heads; ++i) pool[static_cast<size_t>(i)] = i;
      trial.shuffle(pool);
      auto& mark = half == 0 ? a : b;
      for (int i = 0; i < take; ++i) mark[static_cast<size_t>(pool[static_cast<size_t>(i)])] = 1;
    }
    int inter = 0;
    for (int i = 0; i < n_heads; ++i) inter += (a[static_cast<size_t>(i)] && b[static_cast<size_t>(i)]) ? 1 : 0;
    acc += static_cast<double>(inter) / static_cast<double>(2 * take - inter);
  }
  return acc / trials;
}

// One Table-3-layout row. Threshold columns count heads appearing in the top
// sets of MORE than x% of domains, as a fraction of all heads.
struct OverlapRow {
  double mean_jaccard = 0.0;      // over cross-domain pairs
  double max_jaccard = 0.0;       // max over domain pairs
  double random = 0.0;            // Monte-Carlo baseline
  double within_domain_mean = 0.0;  // mean over domains of mean example-pair Jaccard
  double gt30 = 0.0, gt50 = 0.0, gt70 = 0.0, gt90 = 0.0, all = 0.0;
};

inline OverlapRow overlap_table(const std::map<std::string, HeadSet>& domain_sets,
                                const std::map<std::string, std::vector<HeadSet>>& example_sets,
                                RngStream baseline_rng, int baseline_trials = 1000) {
  if (domain_sets.size() < 2) throw Error("overlap_table needs at least 2 domains");
  OverlapRow row;

  std::vector<const HeadSet*> sets;
  for (const auto& [name, s] : domain_sets) sets.push_back(&s);
  const int n_heads = sets.front()->layers * sets.front()->heads;
  const double fraction = sets.front()->fraction;

  int pairs = 0;
  for (size_t i = 0; i < sets.size(); ++i)
    for (size_t j = i + 1; j < sets.size(); ++j) {
      double jj = jaccard(*sets[i], *sets[j]);
      row.mean_jaccard += jj;
      row.max_jaccard = std::max(row.max_jaccard, jj);
      ++pairs;
    }
  row.mean_jaccard /= pairs;

  row.random = random_jaccard_baseline(n_heads, fraction, baseline_trials, baseline_rng);

  int domains_with_pairs = 0;
  for (const auto& [name, examples] : example_sets) {
    if (examples.size() < 2) continue;
    double acc = 0.0;
    int cnt = 0;
    for (size_t i = 0; i < examples.size(); ++i)
      for (size_t j = i + 1; j < examples.size(); ++j) {
        acc += jaccard(examples[i], examples[j]);
        ++cnt;
      }
    row.within_domain_mean += acc / cnt;
    ++domains_with_pairs;
  }
  if (domains_with_pairs > 0) row.within_domain_mean /= domains_with_pairs;

  // Shared-head columns.
  std::map<std::pair<int, int>, int> appearance;
  for (const auto* s : sets)
    for (const auto& p : s->members) appearance[p]++;
  const double n_domains = static_cast<double>(sets.size());
  int c30 = 0, c50 = 0, c70 = 0, c90 = 0, call = 0;
  for (const auto& [head, cnt] : appearance) {
    double share = cnt / n_domains;
    if (share > 0.3) ++c30;
    if (share > 0.5) ++c50;
    if (share > 0.7) ++c70;
    if (share > 0.9) ++c90;
    if (cnt == static_cast<int>(sets.size())) ++call;
  }
  row.gt30 = static_cast<double>(c30) / n_heads;
  row.gt50 = static_cast<double>(c50) / n_heads;
  row.gt70 = static_cast<double>(c70) / n_heads;
  row.gt90 = static_cast<double>(c90) / n_heads;
  row.all = static_cast<double>(call) / n_heads;
  return row;
}

// CSV layout pinned to: mean_jaccard,max_jaccard,random,within_domain_mean,
// gt30,gt50,gt70,gt90,all
inline std::string overlap_row_csv_header() {
  return "mean_jaccard,max_jaccard,random,within_domain_mean,gt30,gt50,gt70,gt90,all";
}

inline std::string overlap_row_to_csv(const OverlapRow& r) {
  std::string out;
  out += fmt_g(r.mean_jaccard) + "," + fmt_g(r.max_jaccard) + "," + fmt_g(r.random) + "," +
         fmt_g(r.within_domain_mean) + "," + fmt_g(r.gt30) + "," + fmt_g(r.gt50) + "," +
         fmt_g(r.gt70) + "," + fmt_g(r.gt90) + "," + fmt_g(r.all);
  return out;
}

}  // namespace memlab::stats
