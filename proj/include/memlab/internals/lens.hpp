#pragma once

// Logit lens: decode any layer's residual hidden state through the final
// normalization and the unembedding. At layer L the construction is the
// model's own output path, so the distributions coincide.

#include <string>
#include <vector>

#include "memlab/memscore/score.hpp"

namespace memlab::internals {

// Probability distribution (T x V) for the lens at `layer` (1-based, 1..L).
inline Tensor logit_lens(const Transformer& model, const TraceBundle& trace, int layer) {
  const int L = model.config().n_layers;
  if (layer < 1 || layer > L)
    throw ShapeError("logit_lens layer must lie in 1.." + std::to_string(L));
  const Tensor& h = trace.residual[static_cast<size_t>(layer - 1)];
  Tensor logits = matmul(model.apply_final_norm(h), model.unembedding());
  return softmax(logits, 1);
}

struct LensCurve {
  std::vector<double> mean_gold_prob;  // per layer, 1..L
  std::string cohort;
  int64_t sample_count = 0;
};

// Mean lens probability of the gold next token over all continuation
// positions and cohort examples, per layer.
inline LensCurve lens_curve(const Transformer& model, const std::vector<memscore::Probe>& cohort,
                            const std::string& cohort_name = "", int workers = 1) {
  if (cohort.empty()) throw Error("lens_curve of empty cohort");
  const int L = model.config().n_layers;
  const size_t n = cohort.size();
  std::vector<double> acc(n * static_cast<size_t>(L), 0.0);

  parallel_for(static_cast<int64_t>(n), workers, [&](int64_t i) {
    const auto& probe = cohort[static_cast<size_t>(i)];
    std::vector<int> seq = probe.ctx;
    seq.insert(seq.end(), probe.gold.begin(), probe.gold.end());
    TraceBundle trace;
    model.forward(seq, InterventionSpec::none(), &trace);
    const int V = model.config().vocab_size;
    for (int l = 1; l <= L; ++l) {
      Tensor probs = logit_lens(model, trace, l);
      double sum = 0.0;
      // Gold token j sits at absolute position 32+j, predicted from 31+j.
      for (int j = 0; j < memscore::kProbeLen; ++j) {
        int pos = memscore::kProbeLen - 1 + j;
        sum += probs.data()[static_cast<size_t>(pos) * V + probe.gold[static_cast<size_t>(j)]];
      }
      acc[static_cast<size_t>(i) * L + (l - 1)] = sum / memscore::kProbeLen;
    }
  });

  LensCurve curve;
  curve.cohort = cohort_name;
  curve.sample_count = static_cast<int64_t>(n);
  curve.mean_gold_prob.assign(static_cast<size_t>(L), 0.0);
  for (int l = 0; l < L; ++l) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += acc[i * L + l];
    curve.mean_gold_prob[static_cast<size_t>(l)] = s / static_cast<double>(n);
  }
  return curve;
}

}  // namespace memlab::internals
