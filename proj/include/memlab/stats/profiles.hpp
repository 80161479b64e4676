#pragma once

// Layer-importance profiles and the cross-model similarity heatmap. Profiles
// from models of different depth are aligned by linear interpolation onto a
// fixed 100-point relative-depth grid.

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "memlab/internals/importance.hpp"
#include "memlab/internals/similarity.hpp"

namespace memlab::stats {

inline constexpr int kProfileGrid = 100;

enum class ProfileNorm { raw, per_layer_count };

struct LayerProfile {
  std::vector<double> values;  // one per layer
  ProfileNorm norm = ProfileNorm::raw;
  std::string source;
};

// Per-layer mean head importance; per_layer_count divides by L.
inline LayerProfile layer_profile(const internals::ImportanceMatrix& m,
                                  ProfileNorm norm = ProfileNorm::raw,
                                  const std::string& source = "") {
  LayerProfile p;
  p.norm = norm;
  p.source = source;
  p.values.reserve(static_cast<size_t>(m.layers));
  for (int l = 0; l < m.layers; ++l) {
    double acc = 0.0;
    for (int h = 0; h < m.heads; ++h) acc += m.importance_at(l, h);
    acc /= m.heads;
    if (norm == ProfileNorm::per_layer_count) acc /= m.layers;
    p.values.push_back(acc);
  }
  return p;
}

// Endpoint-preserving linear resample onto `grid` points; exact identity when
// the source already has `grid` entries.
inline std::vector<double> resample_profile(const std::vector<double>& values, int grid = kProfileGrid) {
  if (static_cast<int>(values.size()) < 2) throw Error("resample_profile needs at least 2 layers");
  if (static_cast<int>(values.size()) == grid) return values;
  std::vector<double> out(static_cast<size_t>(grid));
  const double span = static_cast<double>(values.size() - 1);
  for (int i = 0; i < grid; ++i) {
    double pos = span * i / (grid - 1);
    size_t lo = static_cast<size_t>(pos);
    if (lo >= values.size() - 1) {
      out[static_cast<size_t>(i)] = values.back();
      continue;
    }
    double frac = pos - static_cast<double>(lo);
    out[static_cast<size_t>(i)] = values[lo] * (1.0 - frac) + values[lo + 1] * frac;
  }
  return out;
}

// Pairwise cosine similarity of depth-aligned profiles.
struct ProfileHeatmap {
  std::vector<std::string> names;
  std::vector<double> values;  // names.size()^2, row-major

  double at(size_t i, size_t j) const { return values[i * names.size() + j]; }
};

inline ProfileHeatmap profile_similarity(const std::vector<std::pair<std::string, LayerProfile>>& profiles) {
  if (profiles.size() < 2) throw Error("profile_similarity needs at least 2 models");
  std::vector<std::vector<double>> grids;
  ProfileHeatmap hm;
  for (const auto& [name, p] : profiles) {
    hm.names.push_back(name);
    grids.push_back(resample_profile(p.values));
  }
  const size_t n = grids.size();
  hm.values.assign(n * n, 0.0);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j)
      hm.values[i * n + j] = i == j ? 1.0 : internals::cosine(grids[i], grids[j]);
  return hm;
}

inline std::string heatmap_to_csv(const ProfileHeatmap& hm) {
  std::ostringstream out;
  out << "model";
  for (const auto& n : hm.names) out << "," << n;
  out << "\n";
  for (size_t i = 0; i < hm.names.size(); ++i) {
    out << hm.names[i];
    for (size_t j = 0; j < hm.names.size(); ++j) out << "," << fmt_g(hm.at(i, j));
    out << "\n";
  }
  return out.str();
}

}  // namespace memlab::stats
