#pragma once

#include <cstdint>
#include <string>

#include "memlab/common.hpp"

namespace memlab {

enum class NormKind : uint8_t { layer_norm = 0, rms_norm = 1 };
enum class PosKind : uint8_t { learned = 0, rotary = 1 };

inline const char* to_string(NormKind k) { return k == NormKind::layer_norm ? "layer_norm" : "rms_norm"; }
inline const char* to_string(PosKind k) { return k == PosKind::learned ? "learned" : "rotary"; }

inline NormKind norm_kind_from(const std::string& s) {
  if (s == "layer_norm") return NormKind::layer_norm;
  if (s == "rms_norm") return NormKind::rms_norm;
  throw ConfigError("unknown norm kind: " + s);
}
inline PosKind pos_kind_from(const std::string& s) {
  if (s == "learned") return PosKind::learned;
  if (s == "rotary") return PosKind::rotary;
  throw ConfigError("unknown positional kind: " + s);
}

struct ModelConfig {
  int n_layers = 2;
  int n_heads = 4;
  int d_model = 64;
  int d_ff = 256;
  int vocab_size = 64;
  int max_seq = 64;
  NormKind norm_kind = NormKind::rms_norm;
  PosKind positional_kind = PosKind::rotary;

  void validate() const {
    if (n_layers < 1 || n_heads < 1 || d_model < 1 || d_ff < 1 || vocab_size < 1)
      throw ConfigError("model dimensions must all be >= 1");
    if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
    if (max_seq < 64) throw ConfigError("max_seq must be >= 64 (32-token context + 32-token continuation)");
    if (positional_kind == PosKind::rotary && (d_model / n_heads) % 2 != 0)
      throw ConfigError("rotary positions need an even per-head dimension");
  }

  int head_dim() const { return d_model / n_heads; }

  int64_t param_count() const {
    int64_t d = d_model, ff = d_ff, v = vocab_size;
    int64_t per_block = 4 * d * d + 2 * d * ff + d;  // qkv+o, mlp, norm2 gain
    per_block += d;                                  // norm1 gain
    if (norm_kind == NormKind::layer_norm) per_block += 2 * d;  // norm biases
    int64_t total = v * d + n_layers * per_block + d + d * v;   // emb, blocks, final gain, unembed
    if (norm_kind == NormKind::layer_norm) total += d;          // final bias
    if (positional_kind == PosKind::learned) total += static_cast<int64_t>(max_seq) * d;
    return total;
  }

  // Short architecture tag used in manifests, e.g. "d64L2H4f256/rms_norm/rotary".
  std::string recipe() const {
    return "d" + std::to_string(d_model) + "L" + std::to_string(n_layers) + "H" +
           std::to_string(n_heads) + "f" + std::to_string(d_ff) + "/" + to_string(norm_kind) +
           "/" + to_string(positional_kind);
  }
};

}  // namespace memlab
