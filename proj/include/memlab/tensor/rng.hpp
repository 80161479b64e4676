#pragma once

// Counter-based random stream. Every draw is a pure function of
// (seed, stream, counter), so identical seeds reproduce identical sequences
// on any platform and substreams can be consumed in parallel without
// coordination.

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "memlab/common.hpp"

namespace memlab {

namespace detail {
// splitmix64 finalizer.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}
}  // namespace detail

struct RngStream {
  uint64_t seed = 0;
  uint64_t stream = 0;
  uint64_t counter = 0;

  RngStream() = default;
  explicit RngStream(uint64_t seed_, uint64_t stream_ = 0) : seed(seed_), stream(stream_) {}

  // Derived streams start their own counter at zero.
  RngStream named(std::string_view name) const {
    uint64_t id = fnv1a64(name.data(), name.size());
    return RngStream(seed, detail::mix64(stream ^ id));
  }
  RngStream substream(uint64_t index) const {
    return RngStream(seed, detail::mix64(stream ^ (0x9e3779b97f4a7c15ull * (index + 1))));
  }
  RngStream substream2(uint64_t a, uint64_t b) const {
    return substream(detail::mix64(a) ^ (b * 0xd1b54a32d192ed03ull));
  }

  uint64_t next_u64() {
    uint64_t base = detail::mix64(seed ^ (stream * 0xd1b54a32d192ed03ull));
    return detail::mix64(base ^ ((counter++) * 0x9e3779b97f4a7c15ull));
  }

  // Uniform in [0, 1).
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  uint64_t next_below(uint64_t n) {
    // Rejection-free modulo is fine here: n is always far below 2^64.
    return next_u64() % n;
  }

  // Standard normal via Box-Muller (one value per call; pairing is not
  // cached so draws stay a pure function of the counter position).
  double next_gaussian() {
    double u1 = 1.0 - next_double();  // (0, 1]
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }
};

}  // namespace memlab
