#pragma once

// Double-precision reference implementations used as finite-difference
// oracles. Deliberately independent of the engine: plain loops over
// std::vector<double>, no shared code with memlab/tensor.

#include <cmath>
#include <functional>
#include <vector>

namespace ref64 {

inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b,
                                  int m, int k, int n) {
  std::vector<double> c(static_cast<size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      double av = a[static_cast<size_t>(i) * k + p];
      for (int j = 0; j < n; ++j) c[static_cast<size_t>(i) * n + j] += av * b[static_cast<size_t>(p) * n + j];
    }
  return c;
}

inline std::vector<double> gelu(const std::vector<double>& x) {
  std::vector<double> y(x.size());
  const double c = std::sqrt(2.0 / 3.14159265358979323846);
  for (size_t i = 0; i < x.size(); ++i) {
    double v = x[i];
    y[i] = 0.5 * v * (1.0 + std::tanh(c * (v + 0.044715 * v * v * v)));
  }
  return y;
}

inline std::vector<double> layer_norm(const std::vector<double>& x, const std::vector<double>& g,
                                      const std::vector<double>& b, int rows, int d,
                                      double eps = 1e-5) {
  std::vector<double> y(x.size());
  for (int r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += x[static_cast<size_t>(r) * d + j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      double c = x[static_cast<size_t>(r) * d + j] - mu;
      var += c * c;
    }
    var /= d;
    double inv = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < d; ++j)
      y[static_cast<size_t>(r) * d + j] = (x[static_cast<size_t>(r) * d + j] - mu) * inv * g[static_cast<size_t>(j)] + b[static_cast<size_t>(j)];
  }
  return y;
}

inline std::vector<double> rms_norm(const std::vector<double>& x, const std::vector<double>& g,
                                    int rows, int d, double eps = 1e-5) {
  std::vector<double> y(x.size());
  for (int r = 0; r < rows; ++r) {
    double ms = 0.0;
    for (int j = 0; j < d; ++j) ms += x[static_cast<size_t>(r) * d + j] * x[static_cast<size_t>(r) * d + j];
    double inv = 1.0 / std::sqrt(ms / d + eps);
    for (int j = 0; j < d; ++j)
      y[static_cast<size_t>(r) * d + j] = x[static_cast<size_t>(r) * d + j] * inv * g[static_cast<size_t>(j)];
  }
  return y;
}

// Causal multi-head attention over one sequence, optional rotary positions.
// q,k,v: (seq x d); returns the concatenated per-head context (seq x d).
inline std::vector<double> causal_attention(std::vector<double> q, std::vector<double> k,
                                            const std::vector<double>& v, int seq, int d,
                                            int heads, bool rotary) {
  const int dh = d / heads;
  if (rotary) {
    for (auto* m : {&q, &k}) {
      for (int t = 0; t < seq; ++t)
        for (int h = 0; h < heads; ++h)
          for (int i = 0; i < dh / 2; ++i) {
            double theta = t * std::pow(10000.0, -2.0 * i / dh);
            double c = std::cos(theta), s = std::sin(theta);
            size_t i0 = static_cast<size_t>(t) * d + h * dh + 2 * i;
            double x0 = (*m)[i0], x1 = (*m)[i0 + 1];
            (*m)[i0] = x0 * c - x1 * s;
            (*m)[i0 + 1] = x0 * s + x1 * c;
          }
    }
  }
  std::vector<double> out(static_cast<size_t>(seq) * d, 0.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < heads; ++h) {
    for (int t = 0; t < seq; ++t) {
      std::vector<double> scores(static_cast<size_t>(t) + 1);
      double mx = -1e300;
      for (int j = 0; j <= t; ++j) {
        double s = 0.0;
        for (int i = 0; i < dh; ++i)
          s += q[static_cast<size_t>(t) * d + h * dh + i] * k[static_cast<size_t>(j) * d + h * dh + i];
        scores[static_cast<size_t>(j)] = s * scale;
        mx = std::max(mx, scores[static_cast<size_t>(j)]);
      }
      double z = 0.0;
      for (int j = 0; j <= t; ++j) {
        scores[static_cast<size_t>(j)] = std::exp(scores[static_cast<size_t>(j)] - mx);
        z += scores[static_cast<size_t>(j)];
      }
      for (int j = 0; j <= t; ++j) {
        double p = scores[static_cast<size_t>(j)] / z;
        for (int i = 0; i < dh; ++i)
          out[static_cast<size_t>(t) * d + h * dh + i] += p * v[static_cast<size_t>(j) * d + h * dh + i];
      }
    }
  }
  return out;
}

// Mean negative log-likelihood over rows.
inline double cross_entropy(const std::vector<double>& logits, const std::vector<int>& targets,
                            int rows, int vocab) {
  double loss = 0.0;
  for (int r = 0; r < rows; ++r) {
    double mx = -1e300;
    for (int c = 0; c < vocab; ++c) mx = std::max(mx, logits[static_cast<size_t>(r) * vocab + c]);
    double z = 0.0;
    for (int c = 0; c < vocab; ++c) z += std::exp(logits[static_cast<size_t>(r) * vocab + c] - mx);
    loss -= logits[static_cast<size_t>(r) * vocab + targets[static_cast<size_t>(r)]] - mx - std::log(z);
  }
  return loss / rows;
}

// Central finite difference of f at coordinate i.
inline double central_diff(const std::function<double(const std::vector<double>&)>& f,
                           std::vector<double> x, size_t i, double h = 1e-3) {
  double orig = x[i];
  x[i] = orig + h;
  double fp = f(x);
  x[i] = orig - h;
  double fm = f(x);
  return (fp - fm) / (2.0 * h);
}

struct GradCheck {
  double max_rel = 0.0;
  size_t worst = 0;
};

// Elementwise relative error with a scale-aware floor so exactly-zero
// gradients do not divide by zero.
inline GradCheck compare(const std::vector<float>& analytic, const std::vector<double>& fd) {
  double scale = 0.0;
  for (double g : fd) scale = std::max(scale, std::abs(g));
  double floor = std::max(1e-3 * scale, 1e-9);
  GradCheck out;
  for (size_t i = 0; i < fd.size(); ++i) {
    double g = analytic[i];
    double rel = std::abs(g - fd[i]) / std::max({std::abs(g), std::abs(fd[i]), floor});
    if (rel > out.max_rel) {
      out.max_rel = rel;
      out.worst = i;
    }
  }
  return out;
}

}  // namespace ref64
