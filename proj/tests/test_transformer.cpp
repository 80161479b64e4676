#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "memlab/model/transformer.hpp"
#include "memlab/train/trainer.hpp"

using namespace memlab;
using Catch::Approx;

namespace {

ModelConfig small_cfg(NormKind norm = NormKind::rms_norm, PosKind pos = PosKind::rotary) {
  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.d_model = 16;
  cfg.d_ff = 32;
  cfg.vocab_size = 59;
  cfg.norm_kind = norm;
  cfg.positional_kind = pos;
  return cfg;
}

std::vector<int> some_tokens(int n, uint64_t seed, int vocab = 59) {
  RngStream rng(seed);
  std::vector<int> out(static_cast<size_t>(n));
  for (auto& t : out) t = static_cast<int>(rng.next_below(static_cast<uint64_t>(vocab)));
  return out;
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig cfg = small_cfg();
  cfg.d_model = 15;
  REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_cfg();
  cfg.max_seq = 32;
  REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_cfg();
  cfg.n_heads = 16;  // head_dim 1 is odd, rotary needs pairs
  REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("forward validates tokens and lengths") {
  Transformer m = Transformer::init_random(small_cfg(), RngStream(1));
  REQUIRE_THROWS_AS(m.forward(std::vector<int>{59}), ShapeError);
  REQUIRE_THROWS_AS(m.forward(some_tokens(65, 2)), ShapeError);
  REQUIRE_THROWS_AS(m.forward(std::vector<int>{}), ShapeError);
  Tensor logits = m.forward(some_tokens(10, 3));
  REQUIRE(logits.shape() == Shape{10, 59});
}

TEST_CASE("alpha=0 noise and self_control ablation are bit-exact identities") {
  Transformer m = Transformer::init_random(small_cfg(), RngStream(4));
  std::vector<int> toks = some_tokens(20, 5);
  Tensor clean = m.forward(toks);

  InterventionSpec zero_noise = InterventionSpec::noised(0.0, RngStream(9));
  REQUIRE(m.forward(toks, zero_noise).values() == clean.values());

  InterventionSpec self_ctl = InterventionSpec::ablated(1, 0, AblationMode::self_control);
  REQUIRE(m.forward(toks, self_ctl).values() == clean.values());

  REQUIRE(m.greedy_decode(toks, 10, zero_noise) == m.greedy_decode(toks, 10));
  REQUIRE(m.greedy_decode(toks, 10, self_ctl) == m.greedy_decode(toks, 10));
}

TEST_CASE("noise with alpha>0 perturbs the logits") {
  Transformer m = Transformer::init_random(small_cfg(), RngStream(4));
  std::vector<int> toks = some_tokens(20, 5);
  Tensor clean = m.forward(toks);
  Tensor noised = m.forward(toks, InterventionSpec::noised(0.3, RngStream(9)));
  REQUIRE(clean.values() != noised.values());
  // Same spec, same rng: reproducible.
  Tensor again = m.forward(toks, InterventionSpec::noised(0.3, RngStream(9)));
  REQUIRE(noised.values() == again.values());
}

TEST_CASE("mean_of_others ablation writes the other heads' mean into the trace") {
  Transformer m = Transformer::init_random(small_cfg(), RngStream(6));
  std::vector<int> toks = some_tokens(12, 7);
  TraceBundle tb;
  m.forward(toks, InterventionSpec::ablated(0, 0), &tb);
  // Two heads: the ablated slot must equal the other head's output exactly.
  REQUIRE(tb.attn_heads[0][0].values() == tb.attn_heads[0][1].values());

  TraceBundle clean;
  m.forward(toks, InterventionSpec::none(), &clean);
  REQUIRE(clean.attn_heads[0][0].values() != clean.attn_heads[0][1].values());
}

TEST_CASE("intervention index validation") {
  Transformer m = Transformer::init_random(small_cfg(), RngStream(8));
  std::vector<int> toks = some_tokens(8, 9);
  REQUIRE_THROWS_AS(m.forward(toks, InterventionSpec::ablated(2, 0)), ConfigError);
  REQUIRE_THROWS_AS(m.forward(toks, InterventionSpec::ablated(0, 2)), ConfigError);
  REQUIRE_THROWS_AS(m.forward(toks, InterventionSpec::noised(0.7, RngStream(1))), ConfigError);
  REQUIRE_THROWS_AS(m.forward(toks, InterventionSpec::noised(0.1, RngStream(1), 5)), ConfigError);

  ModelConfig one_head = small_cfg();
  one_head.n_heads = 1;
  Transformer m1 = Transformer::init_random(one_head, RngStream(8));
  REQUIRE_THROWS_AS(m1.forward(toks, InterventionSpec::ablated(0, 0)), ConfigError);
}

TEST_CASE("greedy decoding: empty request, determinism, length overflow") {
  Transformer m = Transformer::init_random(small_cfg(), RngStream(10));
  std::vector<int> ctx = some_tokens(5, 11);
  REQUIRE(m.greedy_decode(ctx, 0).empty());
  REQUIRE(m.greedy_decode(ctx, 12) == m.greedy_decode(ctx, 12));
  REQUIRE_THROWS_AS(m.greedy_decode(ctx, 60), ShapeError);
  REQUIRE_THROWS_AS(m.greedy_decode({}, 3), ShapeError);
}

TEST_CASE("model overfit on a period-3 loop continues the period exactly") {
  corpus::CharTokenizer tok;
  corpus::Corpus corp;
  corp.vocab_size = tok.vocab_size();
  std::string loop = testutil::repeat_to("abc", 81);
  for (int i = 0; i < 4; ++i) {
    corp.lines.push_back(tok.encode(loop));
    corp.total_tokens += 81;
  }
  train::TrainConfig tc;
  tc.model = small_cfg();
  tc.steps = 260;
  tc.batch_size = 4;
  tc.lr.peak = 5e-3;
  tc.lr.warmup = 30;
  tc.seed = 3;
  train::TrainResult r = train::train(tc, corp);
  REQUIRE(r.loss_curve.back().second < 1e-3);

  Transformer m = r.checkpoint.to_model();
  std::vector<int> ctx = tok.encode("abcabc");
  std::vector<int> gen = m.greedy_decode(ctx, 12);
  REQUIRE(tok.decode(gen) == "abcabcabcabc");
}

TEST_CASE("causality: a perturbed token never changes earlier logits") {
  for (PosKind pos : {PosKind::rotary, PosKind::learned}) {
    NormKind norm = pos == PosKind::rotary ? NormKind::rms_norm : NormKind::layer_norm;
    Transformer m = Transformer::init_random(small_cfg(norm, pos), RngStream(12));
    std::vector<int> toks = some_tokens(16, 13);
    Tensor base = m.forward(toks);
    const int t = 9;
    std::vector<int> perturbed = toks;
    perturbed[t] = (perturbed[t] + 1) % 59;
    Tensor changed = m.forward(perturbed);
    for (int pos_i = 0; pos_i < t; ++pos_i)
      for (int v = 0; v < 59; ++v)
        REQUIRE(base.values()[static_cast<size_t>(pos_i) * 59 + v] ==
                changed.values()[static_cast<size_t>(pos_i) * 59 + v]);
    REQUIRE(base.values() != changed.values());
  }
}

TEST_CASE("greedy path is invariant under positive rescaling of the logits") {
  ModelConfig cfg = small_cfg();
  Transformer a = Transformer::init_random(cfg, RngStream(14));
  Transformer b = Transformer::init_random(cfg, RngStream(14));
  Tensor& unembed = b.tensor_by_name("unembed");
  for (auto& v : unembed.values()) v *= 3.5f;
  std::vector<int> ctx = some_tokens(6, 15);
  REQUIRE(a.greedy_decode(ctx, 16) == b.greedy_decode(ctx, 16));
}

TEST_CASE("trace capture is lossless and reconstructs the residual stream") {
  Transformer m = Transformer::init_random(small_cfg(), RngStream(16));
  std::vector<int> toks = some_tokens(14, 17);
  TraceBundle tb1, tb2;
  m.forward(toks, InterventionSpec::none(), &tb1);
  m.forward(toks, InterventionSpec::none(), &tb2);
  REQUIRE(tb1.residual.size() == 2);
  for (size_t l = 0; l < tb1.residual.size(); ++l)
    REQUIRE(tb1.residual[l].values() == tb2.residual[l].values());
  REQUIRE(tb1.logits.values() == tb2.logits.values());

  // residual[l] == residual[l-1] + attn_out[l] + mlp_out[l]
  const auto& cfg = m.config();
  for (int l = 0; l < cfg.n_layers; ++l) {
    const auto& prev = l == 0 ? tb1.embedded : tb1.residual[static_cast<size_t>(l - 1)];
    for (int64_t i = 0; i < prev.numel(); ++i) {
      double sum = prev.values()[static_cast<size_t>(i)] +
                   tb1.attn_out[static_cast<size_t>(l)].values()[static_cast<size_t>(i)] +
                   tb1.mlp_out[static_cast<size_t>(l)].values()[static_cast<size_t>(i)];
      REQUIRE(sum == Approx(tb1.residual[static_cast<size_t>(l)].values()[static_cast<size_t>(i)]).margin(1e-4));
    }
  }

  // The per-head trace pushed through the output projection reproduces the
  // captured post-projection attention output.
  const int T = 14, d = cfg.d_model, dh = cfg.head_dim();
  for (int l = 0; l < cfg.n_layers; ++l) {
    Tensor concat = Tensor::zeros({T, d});
    for (int h = 0; h < cfg.n_heads; ++h)
      for (int t = 0; t < T; ++t)
        for (int i = 0; i < dh; ++i)
          concat.data()[static_cast<size_t>(t) * d + h * dh + i] =
              tb1.attn_heads[static_cast<size_t>(l)][static_cast<size_t>(h)].values()[static_cast<size_t>(t) * dh + i];
    Tensor wo;
    for (auto& [name, t] : m.named_parameters())
      if (name == "blocks." + std::to_string(l) + ".wo") wo = t;
    Tensor proj = matmul(concat, wo);
    for (int64_t i = 0; i < proj.numel(); ++i)
      REQUIRE(proj.values()[static_cast<size_t>(i)] ==
              Approx(tb1.attn_out[static_cast<size_t>(l)].values()[static_cast<size_t>(i)]).margin(1e-4));
  }
}

TEST_CASE("residual norm profile: zero model, nonnegativity, scaling") {
  ModelConfig cfg = small_cfg(NormKind::layer_norm, PosKind::learned);
  std::vector<std::vector<int>> examples = {some_tokens(20, 18), some_tokens(20, 19)};

  Transformer zero(cfg);
  auto zp = zero.residual_norm_profile(examples);
  REQUIRE(zp.embedding == 0.0);
  for (double v : zp.layers) REQUIRE(v == 0.0);

  Transformer m = Transformer::init_random(cfg, RngStream(20));
  auto p1 = m.residual_norm_profile(examples);
  REQUIRE(p1.embedding > 0.0);
  for (double v : p1.layers) REQUIRE(v >= 0.0);

  // Doubling every residual-stream contribution doubles the profile.
  Transformer doubled = Transformer::init_random(cfg, RngStream(20));
  for (auto& [name, t] : doubled.named_parameters()) {
    bool scales = name == "tok_emb" || name == "pos_emb" || name.ends_with(".wo") ||
                  name.ends_with(".w_out");
    if (!scales) continue;
    Tensor mut = t;
    for (auto& v : mut.values()) v *= 2.0f;
  }
  auto p2 = doubled.residual_norm_profile(examples);
  REQUIRE(p2.embedding == Approx(2.0 * p1.embedding).epsilon(5e-3));
  for (size_t l = 0; l < p1.layers.size(); ++l)
    REQUIRE(p2.layers[l] == Approx(2.0 * p1.layers[l]).epsilon(5e-3));

  REQUIRE_THROWS_AS(m.residual_norm_profile({}), ShapeError);
}

TEST_CASE("checkpoint save/load round trip is bit exact") {
  namespace fs = std::filesystem;
  Transformer m = Transformer::init_random(small_cfg(NormKind::layer_norm, PosKind::learned),
                                           RngStream(21));
  train::Checkpoint ck = train::Checkpoint::from_model(m, 123, 77, 456);
  std::string bytes = train::checkpoint_to_bytes(ck);
  train::Checkpoint back = train::checkpoint_from_bytes(bytes);
  REQUIRE(train::checkpoint_to_bytes(back) == bytes);
  REQUIRE(back.step == 123);
  REQUIRE(back.rng_seed == 77);
  REQUIRE(back.rng_counter == 456);

  Transformer restored = back.to_model();
  std::vector<int> toks = some_tokens(10, 22);
  REQUIRE(restored.forward(toks).values() == m.forward(toks).values());

  // Truncation -> corrupt; edited shape header -> shape mismatch.
  REQUIRE_THROWS_AS(train::checkpoint_from_bytes(bytes.substr(0, bytes.size() / 2)), IoError);
  std::string mangled = bytes;
  mangled[0] = 'X';
  REQUIRE_THROWS_AS(train::checkpoint_from_bytes(mangled), IoError);

  // Flip one dimension in the first tensor's shape header.
  std::string shape_edit = bytes;
  size_t name_pos = shape_edit.find("tok_emb");
  REQUIRE(name_pos != std::string::npos);
  size_t rank_pos = name_pos + 7;
  int64_t dim;
  std::memcpy(&dim, shape_edit.data() + rank_pos + 4, sizeof(dim));
  dim += 1;
  std::memcpy(shape_edit.data() + rank_pos + 4, &dim, sizeof(dim));
  REQUIRE_THROWS_AS(train::checkpoint_from_bytes(shape_edit), ShapeError);
}
