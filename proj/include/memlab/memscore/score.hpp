#pragma once

// Memorization score and its statistics. Scores are exact rationals k/32.

#include <array>
#include <cstring>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "memlab/corpus/domains.hpp"
#include "memlab/corpus/frequency.hpp"
#include "memlab/model/transformer.hpp"

namespace memlab::memscore {

inline constexpr int kProbeLen = 32;  // 32-token context, 32-token continuation

struct Probe {
  std::vector<int> ctx;
  std::vector<int> gold;
  std::string domain;
  int repetitions = 1;
  int64_t example_id = 0;
};

// One probe per distinct planted sequence: first 32 tokens condition, next 32
// are the gold continuation. Manifest tokens must be resolved first.
inline std::vector<Probe> probes_from_manifest(const corpus::CorpusManifest& manifest) {
  std::vector<Probe> out;
  for (size_t i = 0; i < manifest.sequences.size(); ++i) {
    const auto& seq = manifest.sequences[i];
    if (static_cast<int>(seq.tokens.size()) < 2 * kProbeLen) continue;
    Probe p;
    p.ctx.assign(seq.tokens.begin(), seq.tokens.begin() + kProbeLen);
    p.gold.assign(seq.tokens.begin() + kProbeLen, seq.tokens.begin() + 2 * kProbeLen);
    p.domain = seq.domain;
    p.repetitions = seq.repetitions;
    p.example_id = static_cast<int64_t>(i);
    out.push_back(std::move(p));
  }
  return out;
}

struct MemRecord {
  std::vector<int> ctx, gold, generated;
  int score_num = 0;  // score == score_num / 32 exactly
  std::string domain;
  double alpha = 0.0;
  std::optional<double> avg_frequency;
  int64_t example_id = 0;
  int repetitions = 1;

  double score() const { return static_cast<double>(score_num) / kProbeLen; }
  bool memorized() const { return score_num == kProbeLen; }
  bool unmemorized() const { return score_num == 0; }
  bool half_memorized() const { return 2 * score_num == kProbeLen; }
};

// Derives the per-example noise substream from (example id, alpha); other
// interventions pass through unchanged.
inline InterventionSpec spec_for_example(const InterventionSpec& base, int64_t example_id) {
  InterventionSpec s = base;
  if (s.noise) {
    uint64_t alpha_bits;
    double a = s.noise->alpha;
    std::memcpy(&alpha_bits, &a, sizeof(a));
    s.noise->rng = base.noise->rng.substream2(static_cast<uint64_t>(example_id), alpha_bits);
  }
  return s;
}

inline MemRecord memorization_score(const Transformer& model, const Probe& probe,
                                    const InterventionSpec& spec = {}) {
  if (static_cast<int>(probe.ctx.size()) != kProbeLen ||
      static_cast<int>(probe.gold.size()) != kProbeLen)
    throw ShapeError("memorization_score needs a 32-token context and continuation");
  MemRecord rec;
  rec.ctx = probe.ctx;
  rec.gold = probe.gold;
  rec.domain = probe.domain;
  rec.example_id = probe.example_id;
  rec.repetitions = probe.repetitions;
  rec.alpha = spec.noise ? spec.noise->alpha : 0.0;
  rec.generated = model.greedy_decode(probe.ctx, kProbeLen, spec_for_example(spec, probe.example_id));
  for (int i = 0; i < kProbeLen; ++i)
    if (rec.generated[static_cast<size_t>(i)] == rec.gold[static_cast<size_t>(i)]) ++rec.score_num;
  return rec;
}

// Fraction of records with score exactly 1.
inline double memorization_rate(const std::vector<MemRecord>& records) {
  if (records.empty()) throw Error("memorization_rate of empty record set");
  int64_t full = 0;
  for (const auto& r : records) full += r.memorized() ? 1 : 0;
  return static_cast<double>(full) / static_cast<double>(records.size());
}

struct ScoreDistribution {
  std::array<int64_t, kProbeLen + 1> counts{};  // bin k holds #records with score k/32
  int64_t total = 0;
};

inline ScoreDistribution score_distribution(const std::vector<MemRecord>& records) {
  if (records.empty()) throw Error("score_distribution of empty record set");
  ScoreDistribution d;
  for (const auto& r : records) {
    d.counts[static_cast<size_t>(r.score_num)]++;
    ++d.total;
  }
  return d;
}

struct DomainBreakdown {
  double structural = 0.0, semi_structural = 0.0, free_text = 0.0;
  int64_t memorized_total = 0;
};

// Per-category proportions of fully memorized records (Table-2 layout).
inline DomainBreakdown domain_breakdown(const std::vector<MemRecord>& records,
                                        const std::map<std::string, corpus::DomainCategory>& categories) {
  if (records.empty()) throw Error("domain_breakdown of empty record set");
  DomainBreakdown b;
  for (const auto& r : records) {
    if (!r.memorized()) continue;
    auto it = categories.find(r.domain);
    if (it == categories.end()) throw Error("domain_breakdown: unknown domain " + r.domain);
    ++b.memorized_total;
    switch (it->second) {
      case corpus::DomainCategory::structural: b.structural += 1; break;
      case corpus::DomainCategory::semi_structural: b.semi_structural += 1; break;
      case corpus::DomainCategory::free_text: b.free_text += 1; break;
    }
  }
  if (b.memorized_total > 0) {
    b.structural /= static_cast<double>(b.memorized_total);
    b.semi_structural /= static_cast<double>(b.memorized_total);
    b.free_text /= static_cast<double>(b.memorized_total);
  }
  return b;
}

// --- record dump: one structured-text record per line, stable field order ---

namespace detail {

inline std::string join_ids(const std::vector<int>& ids) {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(ids[i]);
  }
  return out;
}

inline std::vector<int> parse_ids(const std::string& s) {
  std::vector<int> out;
  for (const auto& part : split(s, ','))
    if (!part.empty()) out.push_back(std::stoi(part));
  return out;
}

}  // namespace detail

inline std::string records_to_text(const std::vector<MemRecord>& records) {
  std::ostringstream out;
  for (const auto& r : records) {
    out << "id=" << r.example_id << " domain=" << r.domain << " r=" << r.repetitions
        << " alpha=" << fmt_g(r.alpha) << " score=" << r.score_num << "/" << kProbeLen;
    if (r.avg_frequency) out << " freq=" << fmt_g(*r.avg_frequency, 12);
    out << " ctx=" << detail::join_ids(r.ctx) << " gold=" << detail::join_ids(r.gold)
        << " gen=" << detail::join_ids(r.generated) << "\n";
  }
  return out.str();
}

inline std::vector<MemRecord> records_from_text(const std::string& text) {
  std::vector<MemRecord> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    MemRecord r;
    for (const auto& field : split(line, ' ')) {
      auto eq = field.find('=');
      if (eq == std::string::npos) throw IoError("bad record field: " + field);
      std::string key = field.substr(0, eq), val = field.substr(eq + 1);
      if (key == "id") r.example_id = std::stoll(val);
      else if (key == "domain") r.domain = val;
      else if (key == "r") r.repetitions = std::stoi(val);
      else if (key == "alpha") r.alpha = std::stod(val);
      else if (key == "score") r.score_num = std::stoi(val.substr(0, val.find('/')));
      else if (key == "freq") r.avg_frequency = std::stod(val);
      else if (key == "ctx") r.ctx = detail::parse_ids(val);
      else if (key == "gold") r.gold = detail::parse_ids(val);
      else if (key == "gen") r.generated = detail::parse_ids(val);
      else throw IoError("unknown record field: " + key);
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace memlab::memscore
