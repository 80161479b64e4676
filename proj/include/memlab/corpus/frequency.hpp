#pragma once

// Exact token-frequency index over a corpus; the local stand-in for the
// external n-gram service. Queries are read-only after construction.

#include <vector>

#include "memlab/corpus/generate.hpp"

namespace memlab::corpus {

class FrequencyIndex {
 public:
  explicit FrequencyIndex(const Corpus& corpus) : counts_(static_cast<size_t>(corpus.vocab_size), 0) {
    for (const auto& line : corpus.lines)
      for (int id : line) {
        counts_[static_cast<size_t>(id)]++;
        ++total_;
      }
  }

  int64_t corpus_total() const { return total_; }

  // Unknown ids count zero; that is a valid query, not an error.
  int64_t token_frequency(int id) const {
    if (id < 0 || id >= static_cast<int>(counts_.size())) return 0;
    return counts_[static_cast<size_t>(id)];
  }

  double avg_sequence_frequency(const std::vector<int>& seq) const {
    if (seq.empty()) throw Error("avg_sequence_frequency of empty sequence");
    double acc = 0.0;
    for (int id : seq) acc += static_cast<double>(token_frequency(id));
    return acc / static_cast<double>(seq.size());
  }

  double normalized_frequency(const std::vector<int>& seq) const {
    if (total_ == 0) return 0.0;
    return avg_sequence_frequency(seq) / static_cast<double>(total_);
  }

 private:
  std::vector<int64_t> counts_;
  int64_t total_ = 0;
};

}  // namespace memlab::corpus
