#pragma once

// The two interventions the lab supports: relative Gaussian noise on the
// residual stream and single-head ablation. At most one of each per forward.

#include <optional>

#include "memlab/model/config.hpp"
#include "memlab/tensor/rng.hpp"

namespace memlab {

enum class AblationMode { mean_of_others, self_control };

struct NoiseSpec {
  double alpha = 0.0;   // sigma_eff = alpha * rms(residual) at the injection site
  int layer_index = 0;  // residual stream entering block layer_index (0 = first layer)
  RngStream rng;
};

struct AblationSpec {
  int layer = 0;
  int head = 0;
  AblationMode mode = AblationMode::mean_of_others;
};

struct InterventionSpec {
  std::optional<NoiseSpec> noise;
  std::optional<AblationSpec> ablation;

  void validate(const ModelConfig& cfg) const {
    if (noise) {
      if (noise->alpha < 0.0 || noise->alpha > 0.5)
        throw ConfigError("noise alpha must lie in [0, 0.5]");
      if (noise->layer_index < 0 || noise->layer_index >= cfg.n_layers)
        throw ConfigError("noise layer_index out of range");
    }
    if (ablation) {
      if (ablation->layer < 0 || ablation->layer >= cfg.n_layers)
        throw ConfigError("ablation layer out of range");
      if (ablation->head < 0 || ablation->head >= cfg.n_heads)
        throw ConfigError("ablation head out of range");
      if (ablation->mode == AblationMode::mean_of_others && cfg.n_heads < 2)
        throw ConfigError("mean_of_others ablation needs at least 2 heads");
    }
  }

  static InterventionSpec none() { return {}; }

  static InterventionSpec noised(double alpha, RngStream rng, int layer_index = 0) {
    InterventionSpec s;
    s.noise = NoiseSpec{alpha, layer_index, rng};
    return s;
  }

  static InterventionSpec ablated(int layer, int head,
                                  AblationMode mode = AblationMode::mean_of_others) {
    InterventionSpec s;
    s.ablation = AblationSpec{layer, head, mode};
    return s;
  }
};

}  // namespace memlab
