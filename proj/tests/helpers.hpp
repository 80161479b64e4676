#pragma once

// Shared test fixtures: a tiny highly-memorizable corpus and a model overfit
// on it, trained once per test-binary run.

#include <string>
#include <vector>

#include "memlab/memlab.hpp"

namespace testutil {

using namespace memlab;

inline std::string repeat_to(const std::string& unit, int len) {
  std::string out;
  while (static_cast<int>(out.size()) < len) out += unit;
  out.resize(static_cast<size_t>(len));
  return out;
}

// Corpus of planted periodic/template lines plus unique noise lines.
inline corpus::Corpus tiny_corpus(std::vector<corpus::PlantedSequence>* sequences = nullptr) {
  corpus::CharTokenizer tok;
  corpus::Corpus c;
  c.vocab_size = tok.vocab_size();
  struct Line {
    std::string text;
    int reps;
    std::string domain;
  };
  std::vector<Line> lines = {
      {repeat_to("ab", 80), 60, "loops"},
      {repeat_to("abcd", 80), 60, "loops"},
      {repeat_to("z", 80), 60, "loops"},
      {repeat_to("let k=mix(a,7);", 90), 50, "assignish"},
      {repeat_to("id:123|name:stone river|", 96), 50, "recordish"},
  };
  RngStream noise(99);
  for (int i = 0; i < 24; ++i) {
    std::string s;
    for (int j = 0; j < 80; ++j) s += static_cast<char>('a' + noise.next_below(26));
    lines.push_back({s, 1, "noise"});
  }
  RngStream shuffle_rng(7);
  std::vector<size_t> emit;
  for (size_t i = 0; i < lines.size(); ++i)
    for (int r = 0; r < lines[i].reps; ++r) emit.push_back(i);
  shuffle_rng.shuffle(emit);
  std::vector<corpus::PlantedSequence> seqs(lines.size());
  for (size_t i = 0; i < lines.size(); ++i) {
    seqs[i].tokens = tok.encode(lines[i].text);
    seqs[i].domain = lines[i].domain;
    seqs[i].repetitions = lines[i].reps;
  }
  for (size_t pos = 0; pos < emit.size(); ++pos) {
    seqs[emit[pos]].line_offsets.push_back(static_cast<int64_t>(pos));
    c.lines.push_back(seqs[emit[pos]].tokens);
    c.total_tokens += static_cast<int64_t>(seqs[emit[pos]].tokens.size());
  }
  if (sequences) *sequences = seqs;
  return c;
}

struct OverfitFixture {
  corpus::Corpus corpus;
  std::vector<corpus::PlantedSequence> sequences;
  Transformer model;
  std::vector<std::pair<int, double>> loss_curve;
  std::vector<memscore::Probe> probes;  // one per distinct sequence

  memscore::Probe probe_for_domain(const std::string& domain, size_t nth = 0) const {
    size_t seen = 0;
    for (const auto& p : probes)
      if (p.domain == domain && seen++ == nth) return p;
    throw Error("fixture has no probe " + std::to_string(nth) + " for domain " + domain);
  }
};

inline const OverfitFixture& overfit_fixture() {
  static OverfitFixture* fx = [] {
    auto* f = new OverfitFixture{{}, {}, Transformer(ModelConfig{}), {}, {}};
    f->corpus = tiny_corpus(&f->sequences);
    train::TrainConfig tc;
    tc.model.d_model = 32;
    tc.model.n_layers = 2;
    tc.model.n_heads = 2;
    tc.model.d_ff = 64;
    tc.model.vocab_size = f->corpus.vocab_size;
    tc.steps = 600;
    tc.batch_size = 8;
    tc.lr.peak = 4e-3;
    tc.lr.warmup = 60;
    tc.seed = 11;
    train::TrainResult result = train::train(tc, f->corpus);
    f->model = result.checkpoint.to_model();
    f->loss_curve = std::move(result.loss_curve);
    corpus::CorpusManifest manifest;
    manifest.vocab_size = f->corpus.vocab_size;
    manifest.total_tokens = f->corpus.total_tokens;
    manifest.sequences = f->sequences;
    f->probes = memscore::probes_from_manifest(manifest);
    return f;
  }();
  return *fx;
}

}  // namespace testutil
