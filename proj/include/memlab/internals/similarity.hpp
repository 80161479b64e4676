#pragma once

// Clean-vs-noised per-layer cosine similarity of attention and MLP block
// outputs, restricted to the continuation (gold) positions.

#include <cstring>
#include <string>
#include <vector>

#include "memlab/memscore/score.hpp"

namespace memlab::internals {

inline double cosine(const float* a, const float* b, size_t n) {
  if (std::memcmp(a, b, n * sizeof(float)) == 0) return 1.0;  // identity interventions are exact
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 && nb == 0.0) return 1.0;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("cosine: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 && nb == 0.0) return 1.0;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct SimilarityProfile {
  std::vector<double> attn_mean, attn_var;
  std::vector<double> mlp_mean, mlp_var;
  double alpha = 0.0;
  std::string cohort;
  int64_t sample_count = 0;
};

// Runs a clean and a noised forward over context+gold for every probe and
// averages per-layer similarities over the cohort. Noise rng derives from
// (example id, alpha) through `spec_for_example`.
inline SimilarityProfile similarity_profile(const Transformer& model,
                                            const std::vector<memscore::Probe>& cohort,
                                            double alpha, RngStream noise_rng,
                                            const std::string& cohort_name = "",
                                            int noise_layer = 0, int workers = 1) {
  if (cohort.empty()) throw Error("similarity_profile of empty cohort");
  const int layers = model.config().n_layers;
  const size_t n = cohort.size();
  std::vector<double> attn(n * static_cast<size_t>(layers));
  std::vector<double> mlp(n * static_cast<size_t>(layers));

  parallel_for(static_cast<int64_t>(n), workers, [&](int64_t i) {
    const auto& probe = cohort[static_cast<size_t>(i)];
    std::vector<int> seq = probe.ctx;
    seq.insert(seq.end(), probe.gold.begin(), probe.gold.end());

    TraceBundle clean;
    model.forward(seq, InterventionSpec::none(), &clean);
    TraceBundle noised;
    InterventionSpec spec = memscore::spec_for_example(
        InterventionSpec::noised(alpha, noise_rng, noise_layer), probe.example_id);
    model.forward(seq, spec, &noised);

    const int d = model.config().d_model;
    const size_t skip = static_cast<size_t>(memscore::kProbeLen) * static_cast<size_t>(d);
    const size_t count = static_cast<size_t>(memscore::kProbeLen) * static_cast<size_t>(d);
    for (int l = 0; l < layers; ++l) {
      attn[static_cast<size_t>(i) * layers + l] =
          cosine(clean.attn_out[static_cast<size_t>(l)].data() + skip,
                 noised.attn_out[static_cast<size_t>(l)].data() + skip, count);
      mlp[static_cast<size_t>(i) * layers + l] =
          cosine(clean.mlp_out[static_cast<size_t>(l)].data() + skip,
                 noised.mlp_out[static_cast<size_t>(l)].data() + skip, count);
    }
  });

  SimilarityProfile prof;
  prof.alpha = alpha;
  prof.cohort = cohort_name;
  prof.sample_count = static_cast<int64_t>(n);
  prof.attn_mean.assign(static_cast<size_t>(layers), 0.0);
  prof.attn_var.assign(static_cast<size_t>(layers), 0.0);
  prof.mlp_mean.assign(static_cast<size_t>(layers), 0.0);
  prof.mlp_var.assign(static_cast<size_t>(layers), 0.0);
  for (int l = 0; l < layers; ++l) {
    double am = 0.0, mm = 0.0;
    for (size_t i = 0; i < n; ++i) {
      am += attn[i * layers + l];
      mm += mlp[i * layers + l];
    }
    am /= static_cast<double>(n);
    mm /= static_cast<double>(n);
    double av = 0.0, mv = 0.0;
    for (size_t i = 0; i < n; ++i) {
      av += (attn[i * layers + l] - am) * (attn[i * layers + l] - am);
      mv += (mlp[i * layers + l] - mm) * (mlp[i * layers + l] - mm);
    }
    prof.attn_mean[static_cast<size_t>(l)] = am;
    prof.attn_var[static_cast<size_t>(l)] = av / static_cast<double>(n);
    prof.mlp_mean[static_cast<size_t>(l)] = mm;
    prof.mlp_var[static_cast<size_t>(l)] = mv / static_cast<double>(n);
  }
  return prof;
}

}  // namespace memlab::internals
