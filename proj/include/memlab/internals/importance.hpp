#pragma once

// Attention-head importance via ablation: regenerate a memorized sequence
// with one head ablated and measure how far the regeneration diverges.
// Importance is 1 - match fraction; the raw match fraction is kept alongside.

#include <map>
#include <string>
#include <vector>

#include "memlab/memscore/score.hpp"

namespace memlab::internals {

struct ImportanceMatrix {
  int layers = 0, heads = 0;
  std::vector<double> divergence;  // importance, in [0,1]
  std::vector<double> match;       // raw Eq.-style match fraction
  std::string provenance;
  int64_t sample_count = 0;

  double& importance_at(int l, int h) { return divergence[static_cast<size_t>(l) * heads + h]; }
  double importance_at(int l, int h) const { return divergence[static_cast<size_t>(l) * heads + h]; }
  double match_at(int l, int h) const { return match[static_cast<size_t>(l) * heads + h]; }

  static ImportanceMatrix zeros(int layers, int heads) {
    ImportanceMatrix m;
    m.layers = layers;
    m.heads = heads;
    m.divergence.assign(static_cast<size_t>(layers) * heads, 0.0);
    m.match.assign(static_cast<size_t>(layers) * heads, 0.0);
    return m;
  }
};

// Per-(layer, head) importance for one fully memorized probe. The clean
// greedy generation is the reference; each head is ablated over the whole
// regeneration.
inline ImportanceMatrix head_importance(const Transformer& model, const memscore::Probe& probe,
                                        AblationMode mode = AblationMode::mean_of_others) {
  const auto& cfg = model.config();
  if (mode == AblationMode::mean_of_others && cfg.n_heads < 2)
    throw Error("head_importance needs at least 2 heads for mean_of_others");
  std::vector<int> reference = model.greedy_decode(probe.ctx, memscore::kProbeLen);
  if (reference != probe.gold)
    throw Error("head_importance called on a non-memorized record (example " +
                std::to_string(probe.example_id) + ")");

  ImportanceMatrix m = ImportanceMatrix::zeros(cfg.n_layers, cfg.n_heads);
  m.provenance = "example:" + std::to_string(probe.example_id);
  m.sample_count = 1;
  for (int l = 0; l < cfg.n_layers; ++l) {
    for (int h = 0; h < cfg.n_heads; ++h) {
      std::vector<int> regen =
          model.greedy_decode(probe.ctx, memscore::kProbeLen, InterventionSpec::ablated(l, h, mode));
      int same = 0;
      for (int j = 0; j < memscore::kProbeLen; ++j)
        if (regen[static_cast<size_t>(j)] == reference[static_cast<size_t>(j)]) ++same;
      double frac = static_cast<double>(same) / memscore::kProbeLen;
      m.match[static_cast<size_t>(l) * cfg.n_heads + h] = frac;
      m.divergence[static_cast<size_t>(l) * cfg.n_heads + h] = 1.0 - frac;
    }
  }
  return m;
}

// Order-independent mean of per-example matrices.
inline ImportanceMatrix aggregate(const std::vector<ImportanceMatrix>& matrices,
                                  const std::string& provenance = "aggregate") {
  if (matrices.empty()) throw Error("aggregate of empty importance set");
  ImportanceMatrix out = ImportanceMatrix::zeros(matrices.front().layers, matrices.front().heads);
  out.provenance = provenance;
  for (const auto& m : matrices) {
    if (m.layers != out.layers || m.heads != out.heads)
      throw ShapeError("aggregate: importance matrix shapes differ");
    for (size_t i = 0; i < out.divergence.size(); ++i) {
      out.divergence[i] += m.divergence[i];
      out.match[i] += m.match[i];
    }
    out.sample_count += m.sample_count;
  }
  for (size_t i = 0; i < out.divergence.size(); ++i) {
    out.divergence[i] /= static_cast<double>(matrices.size());
    out.match[i] /= static_cast<double>(matrices.size());
  }
  return out;
}

// Mean per-example matrix per domain; probes past the per-domain cap are
// skipped deterministically (by input order).
inline std::map<std::string, ImportanceMatrix> domain_importance(
    const Transformer& model, const std::map<std::string, std::vector<memscore::Probe>>& by_domain,
    int sample_cap, int workers = 1,
    std::map<std::string, std::vector<ImportanceMatrix>>* per_example_out = nullptr) {
  if (by_domain.empty()) throw Error("domain_importance with no domains");
  struct Job {
    const std::string* domain;
    const memscore::Probe* probe;
  };
  std::vector<Job> jobs;
  for (const auto& [domain, probes] : by_domain) {
    if (probes.empty()) throw Error("domain_importance: empty domain " + domain);
    int take = sample_cap > 0 ? std::min<int>(sample_cap, static_cast<int>(probes.size()))
                              : static_cast<int>(probes.size());
    for (int i = 0; i < take; ++i) jobs.push_back({&domain, &probes[static_cast<size_t>(i)]});
  }
  std::vector<ImportanceMatrix> results(jobs.size());
  parallel_for(static_cast<int64_t>(jobs.size()), workers, [&](int64_t i) {
    results[static_cast<size_t>(i)] = head_importance(model, *jobs[static_cast<size_t>(i)].probe);
  });

  std::map<std::string, std::vector<ImportanceMatrix>> grouped;
  for (size_t i = 0; i < jobs.size(); ++i) grouped[*jobs[i].domain].push_back(std::move(results[i]));
  std::map<std::string, ImportanceMatrix> out;
  for (auto& [domain, mats] : grouped) out.emplace(domain, aggregate(mats, "domain:" + domain));
  if (per_example_out) *per_example_out = std::move(grouped);
  return out;
}

}  // namespace memlab::internals
