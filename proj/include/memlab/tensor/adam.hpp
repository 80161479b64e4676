#pragma once

// Adam with standard bias-corrected moments, applied in place to a fixed
// parameter list. State order follows the parameter order, so updates are
// deterministic.

#include <cmath>
#include <vector>

#include "memlab/tensor/tensor.hpp"

namespace memlab {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamState {
 public:
  explicit AdamState(const std::vector<Tensor>& params) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params) {
      m_.emplace_back(p.numel(), 0.0f);
      v_.emplace_back(p.numel(), 0.0f);
    }
  }

  int64_t step_count() const { return t_; }

  void step(std::vector<Tensor>& params, const AdamHyper& hyper) {
    if (params.size() != m_.size()) throw Error("adam_step: parameter list changed size");
    ++t_;
    const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
      Tensor& p = params[i];
      if (!p.has_grad()) continue;
      const std::vector<float>& g = p.grad();
      float* x = p.data();
      float* m = m_[i].data();
      float* v = v_[i].data();
      for (size_t j = 0; j < g.size(); ++j) {
        double gj = g[j];
        if (!std::isfinite(gj)) throw NumericError("adam_step saw a non-finite gradient");
        double mj = hyper.beta1 * m[j] + (1.0 - hyper.beta1) * gj;
        double vj = hyper.beta2 * v[j] + (1.0 - hyper.beta2) * gj * gj;
        m[j] = static_cast<float>(mj);
        v[j] = static_cast<float>(vj);
        double update = hyper.lr * (mj / bc1) / (std::sqrt(vj / bc2) + hyper.eps);
        x[j] = static_cast<float>(x[j] - update);
      }
    }
  }

 private:
  int64_t t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

// One optimizer step over `params` using the gradients currently stored on
// them.
inline void adam_step(std::vector<Tensor>& params, AdamState& state, const AdamHyper& hyper) {
  state.step(params, hyper);
}

}  // namespace memlab
