#pragma once

// Full internal capture of one forward pass over a single sequence.

#include <vector>

#include "memlab/tensor/tensor.hpp"

namespace memlab {

struct TraceBundle {
  Tensor embedded;                             // T x d residual entering block 0
  std::vector<Tensor> residual;                // per layer, T x d block output
  std::vector<std::vector<Tensor>> attn_heads; // per layer, per head, T x d/H pre-projection
  std::vector<Tensor> attn_out;                // per layer, T x d post-projection, pre-residual-add
  std::vector<Tensor> mlp_out;                 // per layer, T x d MLP contribution
  Tensor final_hidden;                         // T x d residual after the last block
  Tensor logits;                               // T x V

  int layers() const { return static_cast<int>(residual.size()); }
};

}  // namespace memlab
