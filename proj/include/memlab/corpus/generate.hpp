#pragma once

// Corpus assembly with exact planted repetition counts, plus the text
// formats: corpus file (header line "vocab_size total_tokens", then one
// sequence of space-separated token ids per line) and the key-value manifest.

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "memlab/corpus/domains.hpp"
#include "memlab/corpus/tokenizer.hpp"

namespace memlab::corpus {

struct PlantItem {
  std::string domain;
  int repetitions = 1;
  int count = 1;        // distinct sequences at this repetition level
  std::string literal;  // when set, plants this exact text instead of sampling
};

struct PlantPlan {
  std::vector<PlantItem> items;
  int64_t budget_tokens = 0;  // 0 = unlimited
  int min_line_chars = 72;
  int max_line_chars = 96;
};

struct PlantedSequence {
  std::vector<int> tokens;
  std::string domain;
  int repetitions = 1;
  std::vector<int64_t> line_offsets;  // lines of the corpus holding each copy
};

struct CorpusManifest {
  int vocab_size = 0;
  int64_t total_tokens = 0;
  std::vector<PlantedSequence> sequences;
};

struct Corpus {
  int vocab_size = 0;
  int64_t total_tokens = 0;
  std::vector<std::vector<int>> lines;
};

inline std::pair<Corpus, CorpusManifest> generate_corpus(const std::vector<DomainSpec>& specs,
                                                         const PlantPlan& plan, uint64_t seed) {
  if (specs.empty()) throw ConfigError("generate_corpus needs at least one domain");
  std::map<std::string, const DomainSpec*> by_name;
  for (const auto& s : specs) by_name[s.name] = &s;

  CharTokenizer tok;
  RngStream root = RngStream(seed).named("corpus");

  CorpusManifest manifest;
  manifest.vocab_size = tok.vocab_size();
  std::set<std::string> seen;
  int64_t planned_tokens = 0;

  for (size_t item_idx = 0; item_idx < plan.items.size(); ++item_idx) {
    const PlantItem& item = plan.items[item_idx];
    auto it = by_name.find(item.domain);
    if (it == by_name.end()) throw ConfigError("plant plan references unknown domain: " + item.domain);
    if (item.repetitions < 1) throw ConfigError("plant repetitions must be >= 1");
    RngStream rng = root.named(item.domain).substream(item_idx);
    for (int c = 0; c < item.count; ++c) {
      std::string text;
      if (!item.literal.empty()) {
        text = item.literal;
      } else {
        for (int attempt = 0;; ++attempt) {
          text = generate_line(*it->second, rng, plan.min_line_chars, plan.max_line_chars);
          if (!seen.count(text)) break;
          if (attempt > 200) throw Error("domain " + item.domain + " cannot produce enough distinct sequences");
        }
      }
      if (static_cast<int>(text.size()) < 64)
        throw Error("generated sequence shorter than the 64-token minimum");
      seen.insert(text);
      PlantedSequence seq;
      seq.tokens = tok.encode(text);
      seq.domain = item.domain;
      seq.repetitions = item.repetitions;
      planned_tokens += static_cast<int64_t>(seq.tokens.size()) * item.repetitions;
      manifest.sequences.push_back(std::move(seq));
    }
  }

  if (plan.budget_tokens > 0 && planned_tokens > plan.budget_tokens)
    throw ConfigError("plant_plan exceeds corpus budget: needs " + std::to_string(planned_tokens) +
                      " tokens, budget " + std::to_string(plan.budget_tokens));

  // Emit r copies of each sequence, deterministically shuffled.
  std::vector<size_t> emit;
  for (size_t i = 0; i < manifest.sequences.size(); ++i)
    for (int r = 0; r < manifest.sequences[i].repetitions; ++r) emit.push_back(i);
  RngStream shuffle_rng = root.named("shuffle");
  shuffle_rng.shuffle(emit);

  Corpus corpus;
  corpus.vocab_size = manifest.vocab_size;
  corpus.lines.reserve(emit.size());
  for (size_t line = 0; line < emit.size(); ++line) {
    PlantedSequence& seq = manifest.sequences[emit[line]];
    seq.line_offsets.push_back(static_cast<int64_t>(line));
    corpus.lines.push_back(seq.tokens);
    corpus.total_tokens += static_cast<int64_t>(seq.tokens.size());
  }
  manifest.total_tokens = corpus.total_tokens;
  return {std::move(corpus), std::move(manifest)};
}

// Exact brute-force count of `needle` as a contiguous subsequence of corpus
// lines; the validation oracle for the planted-repetition contract.
inline int64_t count_occurrences(const Corpus& corpus, const std::vector<int>& needle) {
  if (needle.empty()) return 0;
  int64_t count = 0;
  for (const auto& line : corpus.lines) {
    if (line.size() < needle.size()) continue;
    for (size_t i = 0; i + needle.size() <= line.size(); ++i) {
      bool match = true;
      for (size_t j = 0; j < needle.size(); ++j) {
        if (line[i + j] != needle[j]) {
          match = false;
          break;
        }
      }
      if (match) ++count;
    }
  }
  return count;
}

// --- file formats -----------------------------------------------------------

inline std::string corpus_to_text(const Corpus& c) {
  std::ostringstream out;
  out << c.vocab_size << " " << c.total_tokens << "\n";
  for (const auto& line : c.lines) {
    for (size_t i = 0; i < line.size(); ++i) {
      if (i) out << ' ';
      out << line[i];
    }
    out << '\n';
  }
  return out.str();
}

inline Corpus corpus_from_text(const std::string& text) {
  std::istringstream in(text);
  Corpus c;
  std::string header;
  if (!std::getline(in, header)) throw IoError("corpus file is empty");
  {
    std::istringstream hs(header);
    if (!(hs >> c.vocab_size >> c.total_tokens)) throw IoError("bad corpus header");
  }
  std::string line;
  int64_t seen = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<int> ids;
    int id;
    while (ls >> id) {
      if (id < 0 || id >= c.vocab_size) throw IoError("corpus token id out of range");
      ids.push_back(id);
    }
    seen += static_cast<int64_t>(ids.size());
    c.lines.push_back(std::move(ids));
  }
  if (seen != c.total_tokens) throw IoError("corpus token count does not match header");
  return c;
}

inline std::string manifest_to_text(const CorpusManifest& m) {
  std::ostringstream out;
  out << "vocab_size=" << m.vocab_size << "\n";
  out << "total_tokens=" << m.total_tokens << "\n";
  out << "sequences=" << m.sequences.size() << "\n";
  for (const auto& s : m.sequences) {
    out << "seq domain=" << s.domain << " r=" << s.repetitions << " offsets=";
    for (size_t i = 0; i < s.line_offsets.size(); ++i) {
      if (i) out << ',';
      out << s.line_offsets[i];
    }
    out << "\n";
  }
  return out.str();
}

inline CorpusManifest manifest_from_text(const std::string& text) {
  CorpusManifest m;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("vocab_size=", 0) == 0) {
      m.vocab_size = std::stoi(line.substr(11));
    } else if (line.rfind("total_tokens=", 0) == 0) {
      m.total_tokens = std::stoll(line.substr(13));
    } else if (line.rfind("seq ", 0) == 0) {
      PlantedSequence s;
      for (const auto& field : split(line.substr(4), ' ')) {
        auto eq = field.find('=');
        if (eq == std::string::npos) continue;
        std::string key = field.substr(0, eq), val = field.substr(eq + 1);
        if (key == "domain") s.domain = val;
        else if (key == "r") s.repetitions = std::stoi(val);
        else if (key == "offsets")
          for (const auto& o : split(val, ',')) s.line_offsets.push_back(std::stoll(o));
      }
      m.sequences.push_back(std::move(s));
    }
  }
  return m;
}

// Re-attaches sequence tokens (the manifest stores only offsets).
inline void resolve_manifest_tokens(CorpusManifest& m, const Corpus& corpus) {
  for (auto& s : m.sequences) {
    if (s.line_offsets.empty()) throw IoError("manifest sequence without offsets");
    int64_t off = s.line_offsets.front();
    if (off < 0 || off >= static_cast<int64_t>(corpus.lines.size()))
      throw IoError("manifest offset out of corpus range");
    s.tokens = corpus.lines[static_cast<size_t>(off)];
  }
}

}  // namespace memlab::corpus
