#pragma once

// Exact 1-D Wasserstein-1 between empirical distributions via the quantile
// integral of the two step CDFs.

#include <algorithm>
#include <vector>

#include "memlab/common.hpp"

namespace memlab::stats {

inline double wasserstein1(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw Error("wasserstein1 of empty sample set");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const size_t n = a.size(), m = b.size();
  size_t ia = 0, ib = 0;
  double q = 0.0, w = 0.0;
  while (ia < n && ib < m) {
    double qa = static_cast<double>(ia + 1) / static_cast<double>(n);
    double qb = static_cast<double>(ib + 1) / static_cast<double>(m);
    double qn = std::min(qa, qb);
    w += (qn - q) * std::abs(a[ia] - b[ib]);
    q = qn;
    if (qa <= qn) ++ia;
    if (qb <= qn) ++ib;
  }
  return w;
}

}  // namespace memlab::stats
