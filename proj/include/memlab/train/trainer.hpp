#pragma once

// Next-token training with a fixed, model-independent data order so size
// ladders see identical batch streams.

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "memlab/corpus/generate.hpp"
#include "memlab/tensor/adam.hpp"
#include "memlab/train/checkpoint.hpp"

namespace memlab::train {

enum class DecayKind { cosine, linear, constant };

inline DecayKind decay_from(const std::string& s) {
  if (s == "cosine") return DecayKind::cosine;
  if (s == "linear") return DecayKind::linear;
  if (s == "constant") return DecayKind::constant;
  throw ConfigError("unknown lr decay kind: " + s);
}

struct LrSchedule {
  double peak = 3e-3;
  int warmup = 100;
  DecayKind decay = DecayKind::cosine;

  double value(int step, int total_steps) const {
    if (warmup > 0 && step < warmup) return peak * (step + 1) / static_cast<double>(warmup);
    if (decay == DecayKind::constant || total_steps <= warmup) return peak;
    double progress = (step - warmup) / static_cast<double>(total_steps - warmup);
    if (decay == DecayKind::linear) return peak * (1.0 - 0.9 * progress);
    return peak * (0.55 + 0.45 * std::cos(progress * 3.14159265358979323846));
  }
};

struct TrainConfig {
  ModelConfig model;
  int steps = 1000;
  int batch_size = 16;
  int seq_len = 64;
  LrSchedule lr;
  uint64_t seed = 1;
  int checkpoint_every = 0;  // 0 = final checkpoint only
  std::string tag = "model";
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<std::pair<int, double>> loss_curve;  // (step, loss)
};

// Deterministic stream of line indices: per-epoch seeded shuffles, batches
// drawn sequentially and carried across epoch boundaries.
class DataOrder {
 public:
  DataOrder(size_t n_lines, uint64_t seed) : n_(n_lines), rng_(RngStream(seed).named("data")) {
    if (n_ == 0) throw ConfigError("corpus has no trainable lines");
    refill();
  }

  size_t next() {
    if (pos_ == order_.size()) refill();
    return order_[pos_++];
  }

 private:
  void refill() {
    order_.resize(n_);
    for (size_t i = 0; i < n_; ++i) order_[i] = i;
    RngStream s = rng_.substream(epoch_++);
    s.shuffle(order_);
    pos_ = 0;
  }

  size_t n_;
  RngStream rng_;
  uint64_t epoch_ = 0;
  std::vector<size_t> order_;
  size_t pos_ = 0;
};

inline TrainResult train(const TrainConfig& cfg, const corpus::Corpus& corpus,
                         const std::function<void(int, double)>& progress = {},
                         const std::string& checkpoint_dir = "") {
  cfg.model.validate();
  if (cfg.steps < 1) throw ConfigError("train: steps must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (cfg.seq_len < 1 || cfg.seq_len > cfg.model.max_seq)
    throw ConfigError("train: seq_len must be in [1, max_seq]");
  if (corpus.lines.empty()) throw ConfigError("train: corpus is empty");
  if (corpus.vocab_size != cfg.model.vocab_size)
    throw ConfigError("train: corpus vocab " + std::to_string(corpus.vocab_size) +
                      " != model vocab " + std::to_string(cfg.model.vocab_size));

  // Line-aligned windows: each batch item is the first seq_len+1 tokens of a
  // line, so probes condition exactly as training did.
  std::vector<size_t> eligible;
  for (size_t i = 0; i < corpus.lines.size(); ++i)
    if (static_cast<int>(corpus.lines[i].size()) >= cfg.seq_len + 1) eligible.push_back(i);
  if (eligible.empty())
    throw ConfigError("train: no corpus line reaches seq_len+1 = " + std::to_string(cfg.seq_len + 1) +
                      " tokens");

  Transformer model = Transformer::init_random(cfg.model, RngStream(cfg.seed).named("init"));
  model.set_requires_grad(true);
  std::vector<Tensor> params = model.parameters();
  AdamState adam(params);
  AdamHyper hyper;

  DataOrder order(eligible.size(), cfg.seed);
  TrainResult result;
  result.loss_curve.reserve(static_cast<size_t>(cfg.steps));

  std::vector<std::vector<int>> inputs(static_cast<size_t>(cfg.batch_size));
  std::vector<int> targets;

  for (int step = 0; step < cfg.steps; ++step) {
    targets.clear();
    for (int b = 0; b < cfg.batch_size; ++b) {
      const std::vector<int>& line = corpus.lines[eligible[order.next()]];
      inputs[static_cast<size_t>(b)].assign(line.begin(), line.begin() + cfg.seq_len);
      targets.insert(targets.end(), line.begin() + 1, line.begin() + cfg.seq_len + 1);
    }

    for (auto& p : params) p.zero_grad();
    double loss;
    try {
      Tensor loss_t = cross_entropy(model.forward_batch(inputs), targets);
      loss = loss_t.values()[0];
      loss_t.backward();
    } catch (const NumericError& e) {
      throw NumericError("training diverged at step " + std::to_string(step) + ": " + e.what());
    }
    hyper.lr = cfg.lr.value(step, cfg.steps);
    adam_step(params, adam, hyper);

    result.loss_curve.emplace_back(step, loss);
    if (progress) progress(step, loss);
    if (cfg.checkpoint_every > 0 && !checkpoint_dir.empty() && (step + 1) % cfg.checkpoint_every == 0 &&
        step + 1 < cfg.steps) {
      char name[64];
      std::snprintf(name, sizeof(name), "%s.step%06d.ckpt", cfg.tag.c_str(), step + 1);
      save_checkpoint(Checkpoint::from_model(model, static_cast<uint64_t>(step + 1), cfg.seed,
                                             static_cast<uint64_t>(step + 1)),
                      std::filesystem::path(checkpoint_dir) / name);
    }
  }

  model.set_requires_grad(false);
  result.checkpoint = Checkpoint::from_model(model, static_cast<uint64_t>(cfg.steps), cfg.seed,
                                             static_cast<uint64_t>(cfg.steps));
  return result;
}

struct FamilyMember {
  std::string tag;
  ModelConfig config;
};

// Trains a size ladder on one corpus with one data order. The ladder must
// have >= 3 strictly increasing parameter counts.
inline std::vector<TrainResult> train_family(const TrainConfig& base,
                                             const std::vector<FamilyMember>& ladder,
                                             const corpus::Corpus& corpus,
                                             const std::function<void(const std::string&, int, double)>&
                                                 progress = {}) {
  if (ladder.size() < 3) throw ConfigError("train_family: ladder needs at least 3 sizes");
  for (size_t i = 1; i < ladder.size(); ++i)
    if (ladder[i].config.param_count() <= ladder[i - 1].config.param_count())
      throw ConfigError("train_family: ladder parameter counts must strictly increase");
  std::vector<TrainResult> out;
  for (const auto& member : ladder) {
    TrainConfig cfg = base;
    cfg.model = member.config;
    cfg.tag = member.tag;
    auto hook = progress ? std::function<void(int, double)>([&](int s, double l) {
      progress(member.tag, s, l);
    })
                         : std::function<void(int, double)>{};
    out.push_back(train(cfg, corpus, hook));
  }
  return out;
}

inline std::string loss_curve_to_csv(const std::vector<std::pair<int, double>>& curve) {
  std::ostringstream out;
  out << "step,loss\n";
  for (const auto& [step, loss] : curve) out << step << "," << fmt_g(loss, 12) << "\n";
  return out.str();
}

// Mean over trailing windows; the smoothing used by the monotone-loss check.
inline std::vector<double> smoothed_losses(const std::vector<std::pair<int, double>>& curve,
                                           int window) {
  std::vector<double> out;
  if (window < 1 || static_cast<int>(curve.size()) < window) return out;
  for (size_t i = 0; i + window <= curve.size(); i += static_cast<size_t>(window)) {
    double acc = 0.0;
    for (int j = 0; j < window; ++j) acc += curve[i + static_cast<size_t>(j)].second;
    out.push_back(acc / window);
  }
  return out;
}

}  // namespace memlab::train
