#pragma once

// Compression ratio: the least context length that still extracts the whole
// memorized continuation, as a fraction of 32.

#include <array>

#include "memlab/memscore/score.hpp"

namespace memlab::memscore {

enum class TruncationSide { suffix, prefix };

inline const char* to_string(TruncationSide s) {
  return s == TruncationSide::suffix ? "suffix" : "prefix";
}

namespace detail {

inline std::vector<int> truncated_ctx(const std::vector<int>& ctx, int k, TruncationSide side) {
  if (side == TruncationSide::suffix) return {ctx.end() - k, ctx.end()};
  return {ctx.begin(), ctx.begin() + k};
}

}  // namespace detail

// True iff the k-token truncation of the context still extracts gold.
inline bool extracts_with_k(const Transformer& model, const MemRecord& rec, int k,
                            const InterventionSpec& spec = {},
                            TruncationSide side = TruncationSide::suffix) {
  std::vector<int> sub = detail::truncated_ctx(rec.ctx, k, side);
  return model.greedy_decode(sub, kProbeLen, spec_for_example(spec, rec.example_id)) == rec.gold;
}

// Ascending scan, first success = global minimum k. Requires score == 1.
inline int min_context_tokens(const Transformer& model, const MemRecord& rec,
                              const InterventionSpec& spec = {},
                              TruncationSide side = TruncationSide::suffix) {
  if (!rec.memorized())
    throw Error("compression_ratio called on a non-memorized record (score " +
                std::to_string(rec.score_num) + "/32)");
  for (int k = 1; k <= kProbeLen; ++k)
    if (extracts_with_k(model, rec, k, spec, side)) return k;
  throw Error("compression scan found no extracting context, full context included");
}

inline double compression_ratio(const Transformer& model, const MemRecord& rec,
                                const InterventionSpec& spec = {},
                                TruncationSide side = TruncationSide::suffix) {
  return static_cast<double>(min_context_tokens(model, rec, spec, side)) / kProbeLen;
}

// Exhaustive evaluation of every k in 1..32; the oracle for the ascending
// scan and the source of non-monotone pattern counts in reports.
inline std::array<bool, kProbeLen> extraction_pattern(const Transformer& model, const MemRecord& rec,
                                                      const InterventionSpec& spec = {},
                                                      TruncationSide side = TruncationSide::suffix) {
  if (!rec.memorized()) throw Error("extraction_pattern called on a non-memorized record");
  std::array<bool, kProbeLen> out{};
  for (int k = 1; k <= kProbeLen; ++k)
    out[static_cast<size_t>(k - 1)] = extracts_with_k(model, rec, k, spec, side);
  return out;
}

inline bool pattern_is_monotone(const std::array<bool, kProbeLen>& pattern) {
  bool seen = false;
  for (bool b : pattern) {
    if (seen && !b) return false;
    seen = seen || b;
  }
  return true;
}

}  // namespace memlab::memscore
