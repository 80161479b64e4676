#pragma once

// Instrumented decoder-only transformer: pre-norm blocks, full trace capture,
// greedy decoding, residual-stream noise injection and per-head ablation.

#include <string>
#include <vector>

#include "memlab/model/config.hpp"
#include "memlab/model/intervention.hpp"
#include "memlab/model/trace.hpp"
#include "memlab/tensor/ops.hpp"

namespace memlab {

class Transformer {
 public:
  // All-zero weights; the shape a checkpoint loads into.
  explicit Transformer(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const int d = cfg_.d_model, ff = cfg_.d_ff, v = cfg_.vocab_size;
    tok_emb_ = Tensor::zeros({v, d});
    if (cfg_.positional_kind == PosKind::learned) pos_emb_ = Tensor::zeros({cfg_.max_seq, d});
    blocks_.resize(static_cast<size_t>(cfg_.n_layers));
    for (auto& b : blocks_) {
      b.norm1_g = Tensor::zeros({d});
      b.norm2_g = Tensor::zeros({d});
      if (cfg_.norm_kind == NormKind::layer_norm) {
        b.norm1_b = Tensor::zeros({d});
        b.norm2_b = Tensor::zeros({d});
      }
      b.wq = Tensor::zeros({d, d});
      b.wk = Tensor::zeros({d, d});
      b.wv = Tensor::zeros({d, d});
      b.wo = Tensor::zeros({d, d});
      b.w_in = Tensor::zeros({d, ff});
      b.w_out = Tensor::zeros({ff, d});
    }
    final_norm_g_ = Tensor::zeros({d});
    if (cfg_.norm_kind == NormKind::layer_norm) final_norm_b_ = Tensor::zeros({d});
    unembed_ = Tensor::zeros({d, v});
  }

  static Transformer init_random(const ModelConfig& cfg, RngStream rng) {
    Transformer m(cfg);
    double resid_scale = 0.02 / std::sqrt(2.0 * cfg.n_layers);
    uint64_t idx = 0;
    auto fill = [&](Tensor& t, double std) {
      RngStream s = rng.substream(idx++);
      float* p = t.data();
      for (int64_t i = 0; i < t.numel(); ++i)
        p[i] = static_cast<float>(s.next_gaussian() * std);
    };
    fill(m.tok_emb_, 0.02);
    if (m.pos_emb_.defined()) fill(m.pos_emb_, 0.02);
    for (auto& b : m.blocks_) {
      std::fill(b.norm1_g.values().begin(), b.norm1_g.values().end(), 1.0f);
      std::fill(b.norm2_g.values().begin(), b.norm2_g.values().end(), 1.0f);
      fill(b.wq, 0.02);
      fill(b.wk, 0.02);
      fill(b.wv, 0.02);
      fill(b.wo, resid_scale);
      fill(b.w_in, 0.02);
      fill(b.w_out, resid_scale);
    }
    std::fill(m.final_norm_g_.values().begin(), m.final_norm_g_.values().end(), 1.0f);
    fill(m.unembed_, 0.02);
    return m;
  }

  const ModelConfig& config() const { return cfg_; }

  // Stable (name, tensor) parameter enumeration; checkpoint order.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("tok_emb", tok_emb_);
    if (pos_emb_.defined()) out.emplace_back("pos_emb", pos_emb_);
    for (size_t i = 0; i < blocks_.size(); ++i) {
      const auto& b = blocks_[i];
      std::string p = "blocks." + std::to_string(i) + ".";
      out.emplace_back(p + "norm1.g", b.norm1_g);
      if (b.norm1_b.defined()) out.emplace_back(p + "norm1.b", b.norm1_b);
      out.emplace_back(p + "wq", b.wq);
      out.emplace_back(p + "wk", b.wk);
      out.emplace_back(p + "wv", b.wv);
      out.emplace_back(p + "wo", b.wo);
      out.emplace_back(p + "norm2.g", b.norm2_g);
      if (b.norm2_b.defined()) out.emplace_back(p + "norm2.b", b.norm2_b);
      out.emplace_back(p + "w_in", b.w_in);
      out.emplace_back(p + "w_out", b.w_out);
    }
    out.emplace_back("final_norm.g", final_norm_g_);
    if (final_norm_b_.defined()) out.emplace_back("final_norm.b", final_norm_b_);
    out.emplace_back("unembed", unembed_);
    return out;
  }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
  }

  void set_requires_grad(bool b) {
    for (auto& [name, t] : named_parameters()) {
      Tensor mut = t;
      mut.set_requires_grad(b);
    }
  }

  // Batched training forward, no interventions/capture. Every sequence must
  // have the same length. Returns logits (batch*seq x vocab).
  Tensor forward_batch(const std::vector<std::vector<int>>& batch) const {
    if (batch.empty()) throw ShapeError("empty batch");
    const int seq = static_cast<int>(batch.front().size());
    std::vector<int> flat;
    flat.reserve(batch.size() * static_cast<size_t>(seq));
    for (const auto& row : batch) {
      if (static_cast<int>(row.size()) != seq) throw ShapeError("ragged batch");
      flat.insert(flat.end(), row.begin(), row.end());
    }
    return forward_rows(flat, static_cast<int>(batch.size()), seq, InterventionSpec::none(),
                        nullptr);
  }

  // Single-sequence forward. Returns logits (seq x vocab); optionally fills a
  // TraceBundle with the full internal state.
  Tensor forward(const std::vector<int>& tokens, const InterventionSpec& spec = {},
                 TraceBundle* capture = nullptr) const {
    if (tokens.empty()) throw ShapeError("forward needs at least one token");
    return forward_rows(tokens, 1, static_cast<int>(tokens.size()), spec, capture);
  }

  // Appends n greedily decoded tokens after ctx and returns just those n.
  // Noise draws a fresh substream at every decode step; ablation applies to
  // context processing and every step alike.
  std::vector<int> greedy_decode(const std::vector<int>& ctx, int n,
                                 const InterventionSpec& spec = {}) const {
    if (ctx.empty()) throw ShapeError("greedy_decode needs a non-empty context");
    if (n < 0) throw ShapeError("greedy_decode length must be >= 0");
    if (static_cast<int>(ctx.size()) + n > cfg_.max_seq)
      throw ShapeError("greedy_decode would exceed max_seq");
    spec.validate(cfg_);
    std::vector<int> toks = ctx;
    std::vector<int> out;
    out.reserve(static_cast<size_t>(n));
    for (int step = 0; step < n; ++step) {
      InterventionSpec step_spec = spec;
      if (step_spec.noise) step_spec.noise->rng = spec.noise->rng.substream(static_cast<uint64_t>(step));
      Tensor logits = forward(toks, step_spec);
      out.push_back(argmax_row(logits, static_cast<int>(toks.size()) - 1));
      toks.push_back(out.back());
    }
    return out;
  }

  struct ResidualNormProfile {
    double embedding = 0.0;        // rms at the default injection site
    std::vector<double> layers;    // rms of each block's residual output
  };

  // Mean over examples of rms(H_l) per layer (non-intervened forwards).
  ResidualNormProfile residual_norm_profile(const std::vector<std::vector<int>>& examples) const {
    if (examples.empty()) throw ShapeError("residual_norm_profile needs examples");
    ResidualNormProfile prof;
    prof.layers.assign(static_cast<size_t>(cfg_.n_layers), 0.0);
    for (const auto& ex : examples) {
      TraceBundle tb;
      forward(ex, InterventionSpec::none(), &tb);
      prof.embedding += rms(tb.embedded);
      for (int l = 0; l < cfg_.n_layers; ++l) prof.layers[static_cast<size_t>(l)] += rms(tb.residual[static_cast<size_t>(l)]);
    }
    prof.embedding /= static_cast<double>(examples.size());
    for (auto& v : prof.layers) v /= static_cast<double>(examples.size());
    return prof;
  }

  // Lens path pieces; internals/lens.hpp reuses them so the fused forward and
  // the lens produce bit-identical final-layer results.
  Tensor apply_final_norm(const Tensor& h) const {
    return cfg_.norm_kind == NormKind::rms_norm ? rms_norm(h, final_norm_g_)
                                                : layer_norm(h, final_norm_g_, final_norm_b_);
  }
  const Tensor& unembedding() const { return unembed_; }

  static int argmax_row(const Tensor& logits, int row) {
    const int v = logits.dim(1);
    const float* p = logits.data() + static_cast<size_t>(row) * v;
    int best = 0;
    for (int c = 1; c < v; ++c)
      if (p[c] > p[best]) best = c;
    return best;
  }

 private:
  struct Block {
    Tensor norm1_g, norm1_b, norm2_g, norm2_b;
    Tensor wq, wk, wv, wo;
    Tensor w_in, w_out;
  };

  Tensor norm(const Tensor& x, const Tensor& g, const Tensor& b) const {
    return cfg_.norm_kind == NormKind::rms_norm ? rms_norm(x, g) : layer_norm(x, g, b);
  }

  Tensor forward_rows(const std::vector<int>& flat, int batch, int seq,
                      const InterventionSpec& spec, TraceBundle* capture) const {
    if (seq > cfg_.max_seq)
      throw ShapeError("sequence length " + std::to_string(seq) + " exceeds max_seq " +
                       std::to_string(cfg_.max_seq));
    spec.validate(cfg_);
    if (capture && batch != 1) throw Error("trace capture requires a single sequence");

    Tensor x = embedding(tok_emb_, flat);
    if (cfg_.positional_kind == PosKind::learned) x = add_positional(x, pos_emb_, seq);

    RngStream noise_rng;
    if (spec.noise) noise_rng = spec.noise->rng;

    if (capture) {
      capture->residual.clear();
      capture->attn_heads.clear();
      capture->attn_out.clear();
      capture->mlp_out.clear();
    }

    for (int l = 0; l < cfg_.n_layers; ++l) {
      // Relative Gaussian noise on the residual stream entering this block.
      if (spec.noise && spec.noise->layer_index == l && spec.noise->alpha > 0.0) {
        double sigma_eff = spec.noise->alpha * rms(x);
        Tensor eps = gaussian(x.shape(), sigma_eff, noise_rng);
        x = add(x, eps);
      }
      if (l == 0 && capture) capture->embedded = x.detached_copy();

      const Block& b = blocks_[static_cast<size_t>(l)];
      Tensor h = norm(x, b.norm1_g, b.norm1_b);
      Tensor q = matmul(h, b.wq);
      Tensor k = matmul(h, b.wk);
      Tensor v = matmul(h, b.wv);

      AttnAblation abl;
      const AttnAblation* abl_ptr = nullptr;
      if (spec.ablation && spec.ablation->layer == l &&
          spec.ablation->mode == AblationMode::mean_of_others) {
        abl.head = spec.ablation->head;
        abl_ptr = &abl;
      }
      std::vector<Tensor> heads;
      Tensor a = multihead_attention(q, k, v, batch, seq, cfg_.n_heads,
                                     cfg_.positional_kind == PosKind::rotary, abl_ptr,
                                     capture ? &heads : nullptr);
      Tensor ao = matmul(a, b.wo);
      x = add(x, ao);

      Tensor h2 = norm(x, b.norm2_g, b.norm2_b);
      Tensor m = matmul(gelu(matmul(h2, b.w_in)), b.w_out);
      x = add(x, m);

      if (capture) {
        capture->attn_heads.push_back(std::move(heads));
        capture->attn_out.push_back(ao.detached_copy());
        capture->mlp_out.push_back(m.detached_copy());
        capture->residual.push_back(x.detached_copy());
      }
    }

    Tensor fx = apply_final_norm(x);
    Tensor logits = matmul(fx, unembed_);
    if (capture) {
      capture->final_hidden = x.detached_copy();
      capture->logits = logits.detached_copy();
    }
    return logits;
  }

 public:
  // Direct tensor access for checkpoint IO and tests.
  Tensor& tensor_by_name(const std::string& name) {
    for (auto& [n, t] : named_parameters_mut())
      if (n == name) return *t;
    throw Error("unknown parameter: " + name);
  }

 private:
  std::vector<std::pair<std::string, Tensor*>> named_parameters_mut() {
    std::vector<std::pair<std::string, Tensor*>> out;
    out.emplace_back("tok_emb", &tok_emb_);
    if (pos_emb_.defined()) out.emplace_back("pos_emb", &pos_emb_);
    for (size_t i = 0; i < blocks_.size(); ++i) {
      auto& b = blocks_[i];
      std::string p = "blocks." + std::to_string(i) + ".";
      out.emplace_back(p + "norm1.g", &b.norm1_g);
      if (b.norm1_b.defined()) out.emplace_back(p + "norm1.b", &b.norm1_b);
      out.emplace_back(p + "wq", &b.wq);
      out.emplace_back(p + "wk", &b.wk);
      out.emplace_back(p + "wv", &b.wv);
      out.emplace_back(p + "wo", &b.wo);
      out.emplace_back(p + "norm2.g", &b.norm2_g);
      if (b.norm2_b.defined()) out.emplace_back(p + "norm2.b", &b.norm2_b);
      out.emplace_back(p + "w_in", &b.w_in);
      out.emplace_back(p + "w_out", &b.w_out);
    }
    out.emplace_back("final_norm.g", &final_norm_g_);
    if (final_norm_b_.defined()) out.emplace_back("final_norm.b", &final_norm_b_);
    out.emplace_back("unembed", &unembed_);
    return out;
  }

  ModelConfig cfg_;
  Tensor tok_emb_, pos_emb_;
  std::vector<Block> blocks_;
  Tensor final_norm_g_, final_norm_b_;
  Tensor unembed_;
};

}  // namespace memlab
