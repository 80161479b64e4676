#pragma once

// Tensor ops with reverse-mode gradients. Only what a small decoder-only
// transformer and its tests need: no general broadcasting, rank <= 2.
// Reductions (rms, means, loss, softmax sums) accumulate in double per the
// numeric contract; storage stays float32.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "memlab/tensor/rng.hpp"
#include "memlab/tensor/tensor.hpp"

namespace memlab {

namespace detail {

using EMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;
using EStride = Eigen::OuterStride<>;
using EBlockMap = Eigen::Map<EMat, 0, EStride>;
using ECBlockMap = Eigen::Map<const EMat, 0, EStride>;

inline void check_finite(const std::vector<float>& v, const char* op) {
  for (float x : v)
    if (!std::isfinite(x)) throw NumericError(std::string(op) + " produced a non-finite value");
}

inline void check_finite(const Tensor& t, const char* op) { check_finite(t.values(), op); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul expects rank-2 tensors, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeError("matmul inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  std::vector<float> out(static_cast<size_t>(m) * n);
  {
    detail::EMap C(out.data(), m, n);
    detail::ECMap A(a.data(), m, k);
    detail::ECMap B(b.data(), k, n);
    C.noalias() = A * B;
  }
  detail::check_finite(out, "matmul");
  auto an = a.node_ptr(), bn = b.node_ptr();
  return detail::make_op_output(
      {m, n}, std::move(out), {a, b}, [an, bn, m, k, n](detail::Node& self) {
        detail::ECMap dC(self.grad.data(), m, n);
        if (an->requires_grad) {
          an->ensure_grad();
          detail::EMap dA(an->grad.data(), m, k);
          detail::ECMap B(bn->value.data(), k, n);
          dA.noalias() += dC * B.transpose();
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          detail::EMap dB(bn->grad.data(), k, n);
          detail::ECMap A(an->value.data(), m, k);
          dB.noalias() += A.transpose() * dC;
        }
      });
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + " shape mismatch: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<float> out(a.values());
  const float* pb = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] += pb[i];
  detail::check_finite(out, "add");
  auto an = a.node_ptr(), bn = b.node_ptr();
  return detail::make_op_output(a.shape(), std::move(out), {a, b}, [an, bn](detail::Node& self) {
    for (auto& p : {an, bn}) {
      if (!p->requires_grad) continue;
      p->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<float> out(a.values());
  const float* pb = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= pb[i];
  detail::check_finite(out, "sub");
  auto an = a.node_ptr(), bn = b.node_ptr();
  return detail::make_op_output(a.shape(), std::move(out), {a, b}, [an, bn](detail::Node& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<float> out(a.values());
  const float* pb = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= pb[i];
  detail::check_finite(out, "mul");
  auto an = a.node_ptr(), bn = b.node_ptr();
  return detail::make_op_output(a.shape(), std::move(out), {a, b}, [an, bn](detail::Node& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i] * an->value[i];
    }
  });
}

inline Tensor scale(const Tensor& a, double c) {
  std::vector<float> out(a.values());
  for (auto& x : out) x = static_cast<float>(x * c);
  detail::check_finite(out, "scale");
  auto an = a.node_ptr();
  return detail::make_op_output(a.shape(), std::move(out), {a}, [an, c](detail::Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      an->grad[i] += static_cast<float>(self.grad[i] * c);
  });
}

inline Tensor gelu(const Tensor& a) {
  static constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  static constexpr double kA = 0.044715;
  std::vector<float> out(a.values().size());
  const float* px = a.data();
  for (size_t i = 0; i < out.size(); ++i) {
    double x = px[i];
    out[i] = static_cast<float>(0.5 * x * (1.0 + std::tanh(kC * (x + kA * x * x * x))));
  }
  detail::check_finite(out, "gelu");
  auto an = a.node_ptr();
  return detail::make_op_output(a.shape(), std::move(out), {a}, [an](detail::Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) {
      double x = an->value[i];
      double u = kC * (x + kA * x * x * x);
      double t = std::tanh(u);
      double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kC * (1.0 + 3.0 * kA * x * x);
      an->grad[i] += static_cast<float>(self.grad[i] * d);
    }
  });
}

inline Tensor sum(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("sum of empty tensor");
  double acc = 0.0;
  for (float x : a.values()) acc += x;
  if (!std::isfinite(acc)) throw NumericError("sum produced a non-finite value");
  auto an = a.node_ptr();
  return detail::make_op_output({1}, {static_cast<float>(acc)}, {a}, [an](detail::Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (auto& g : an->grad) g += self.grad[0];
  });
}

// ---------------------------------------------------------------------------
// Softmax / normalization
// ---------------------------------------------------------------------------

// Softmax along `axis` (rank-1: axis 0; rank-2: axis 0 = down columns,
// axis 1 = along rows). Max-subtracted, double-accumulated sums.
inline Tensor softmax(const Tensor& v, int axis) {
  if (v.numel() == 0) throw ShapeError("softmax of empty tensor");
  if (v.rank() < 1 || v.rank() > 2) throw ShapeError("softmax expects rank 1 or 2");
  if (axis < 0 || axis >= v.rank()) throw ShapeError("softmax axis out of range");

  int rows, cols, rstride, cstride;
  if (v.rank() == 1) {
    rows = 1, cols = v.dim(0), rstride = 0, cstride = 1;
  } else if (axis == 1) {
    rows = v.dim(0), cols = v.dim(1), rstride = v.dim(1), cstride = 1;
  } else {
    rows = v.dim(1), cols = v.dim(0), rstride = 1, cstride = v.dim(1);
  }

  std::vector<float> out(v.values().size());
  const float* px = v.data();
  for (int r = 0; r < rows; ++r) {
    const float* xr = px + static_cast<size_t>(r) * rstride;
    float* yr = out.data() + static_cast<size_t>(r) * rstride;
    float mx = xr[0];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, xr[static_cast<size_t>(c) * cstride]);
    double z = 0.0;
    for (int c = 0; c < cols; ++c) {
      double e = std::exp(static_cast<double>(xr[static_cast<size_t>(c) * cstride]) - mx);
      yr[static_cast<size_t>(c) * cstride] = static_cast<float>(e);
      z += e;
    }
    for (int c = 0; c < cols; ++c)
      yr[static_cast<size_t>(c) * cstride] = static_cast<float>(yr[static_cast<size_t>(c) * cstride] / z);
  }
  detail::check_finite(out, "softmax");
  auto an = v.node_ptr();
  return detail::make_op_output(
      v.shape(), std::move(out), {v},
      [an, rows, cols, rstride, cstride](detail::Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int r = 0; r < rows; ++r) {
          const float* p = self.value.data() + static_cast<size_t>(r) * rstride;
          const float* dy = self.grad.data() + static_cast<size_t>(r) * rstride;
          float* dx = an->grad.data() + static_cast<size_t>(r) * rstride;
          double dot = 0.0;
          for (int c = 0; c < cols; ++c) {
            size_t i = static_cast<size_t>(c) * cstride;
            dot += static_cast<double>(p[i]) * dy[i];
          }
          for (int c = 0; c < cols; ++c) {
            size_t i = static_cast<size_t>(c) * cstride;
            dx[i] += static_cast<float>(p[i] * (static_cast<double>(dy[i]) - dot));
          }
        }
      });
}

// Root-mean-square over every element jointly, accumulated in double.
inline double rms(const Tensor& t) {
  if (t.numel() == 0) throw ShapeError("rms of empty tensor");
  double acc = 0.0;
  for (float x : t.values()) acc += static_cast<double>(x) * x;
  double r = std::sqrt(acc / static_cast<double>(t.numel()));
  if (!std::isfinite(r)) throw NumericError("rms produced a non-finite value");
  return r;
}

inline constexpr double kNormEps = 1e-5;

namespace detail {

inline void norm_shape_check(const Tensor& x, const Tensor& gain, const Tensor* bias, const char* op) {
  if (x.numel() == 0) throw ShapeError(std::string(op) + " of empty tensor");
  if (x.rank() < 1 || x.rank() > 2) throw ShapeError(std::string(op) + " expects rank 1 or 2");
  int d = x.rank() == 2 ? x.dim(1) : x.dim(0);
  if (gain.rank() != 1 || gain.dim(0) != d)
    throw ShapeError(std::string(op) + " gain must have shape (" + std::to_string(d) + ")");
  if (bias && (bias->rank() != 1 || bias->dim(0) != d))
    throw ShapeError(std::string(op) + " bias must have shape (" + std::to_string(d) + ")");
}

}  // namespace detail

// Per-position normalization over the model dimension (last axis), then
// affine. Mean/variance in double; epsilon sits inside the square root.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  detail::norm_shape_check(x, gain, &bias, "layer_norm");
  const int d = x.rank() == 2 ? x.dim(1) : x.dim(0);
  const int rows = static_cast<int>(x.numel() / d);
  std::vector<float> out(x.values().size());
  auto xhat = std::make_shared<std::vector<float>>(x.values().size());
  auto inv_std = std::make_shared<std::vector<float>>(rows);
  const float* px = x.data();
  const float* pg = gain.data();
  const float* pb = bias.data();
  for (int r = 0; r < rows; ++r) {
    const float* xr = px + static_cast<size_t>(r) * d;
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += xr[j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      double c = xr[j] - mu;
      var += c * c;
    }
    var /= d;
    double inv = 1.0 / std::sqrt(var + kNormEps);
    (*inv_std)[r] = static_cast<float>(inv);
    for (int j = 0; j < d; ++j) {
      size_t i = static_cast<size_t>(r) * d + j;
      double h = (xr[j] - mu) * inv;
      (*xhat)[i] = static_cast<float>(h);
      out[i] = static_cast<float>(h * pg[j] + pb[j]);
    }
  }
  detail::check_finite(out, "layer_norm");
  auto xn = x.node_ptr(), gn = gain.node_ptr(), bn = bias.node_ptr();
  return detail::make_op_output(
      x.shape(), std::move(out), {x, gain, bias},
      [xn, gn, bn, xhat, inv_std, rows, d](detail::Node& self) {
        for (int r = 0; r < rows; ++r) {
          size_t base = static_cast<size_t>(r) * d;
          const float* dy = self.grad.data() + base;
          const float* xh = xhat->data() + base;
          double m1 = 0.0, m2 = 0.0;
          for (int j = 0; j < d; ++j) {
            double dxh = static_cast<double>(dy[j]) * gn->value[j];
            m1 += dxh;
            m2 += dxh * xh[j];
          }
          m1 /= d;
          m2 /= d;
          if (xn->requires_grad) {
            xn->ensure_grad();
            double inv = (*inv_std)[r];
            for (int j = 0; j < d; ++j) {
              double dxh = static_cast<double>(dy[j]) * gn->value[j];
              xn->grad[base + j] += static_cast<float>(inv * (dxh - m1 - xh[j] * m2));
            }
          }
          if (gn->requires_grad) {
            gn->ensure_grad();
            for (int j = 0; j < d; ++j) gn->grad[j] += dy[j] * xh[j];
          }
          if (bn->requires_grad) {
            bn->ensure_grad();
            for (int j = 0; j < d; ++j) bn->grad[j] += dy[j];
          }
        }
      });
}

inline Tensor rms_norm(const Tensor& x, const Tensor& gain) {
  detail::norm_shape_check(x, gain, nullptr, "rms_norm");
  const int d = x.rank() == 2 ? x.dim(1) : x.dim(0);
  const int rows = static_cast<int>(x.numel() / d);
  std::vector<float> out(x.values().size());
  auto xhat = std::make_shared<std::vector<float>>(x.values().size());
  auto inv_rms = std::make_shared<std::vector<float>>(rows);
  const float* px = x.data();
  const float* pg = gain.data();
  for (int r = 0; r < rows; ++r) {
    const float* xr = px + static_cast<size_t>(r) * d;
    double ms = 0.0;
    for (int j = 0; j < d; ++j) ms += static_cast<double>(xr[j]) * xr[j];
    double inv = 1.0 / std::sqrt(ms / d + kNormEps);
    (*inv_rms)[r] = static_cast<float>(inv);
    for (int j = 0; j < d; ++j) {
      size_t i = static_cast<size_t>(r) * d + j;
      double h = xr[j] * inv;
      (*xhat)[i] = static_cast<float>(h);
      out[i] = static_cast<float>(h * pg[j]);
    }
  }
  detail::check_finite(out, "rms_norm");
  auto xn = x.node_ptr(), gn = gain.node_ptr();
  return detail::make_op_output(
      x.shape(), std::move(out), {x, gain},
      [xn, gn, xhat, inv_rms, rows, d](detail::Node& self) {
        for (int r = 0; r < rows; ++r) {
          size_t base = static_cast<size_t>(r) * d;
          const float* dy = self.grad.data() + base;
          const float* xh = xhat->data() + base;
          double m2 = 0.0;
          for (int j = 0; j < d; ++j) m2 += static_cast<double>(dy[j]) * gn->value[j] * xh[j];
          m2 /= d;
          if (xn->requires_grad) {
            xn->ensure_grad();
            double inv = (*inv_rms)[r];
            for (int j = 0; j < d; ++j) {
              double dxh = static_cast<double>(dy[j]) * gn->value[j];
              xn->grad[base + j] += static_cast<float>(inv * (dxh - xh[j] * m2));
            }
          }
          if (gn->requires_grad) {
            gn->ensure_grad();
            for (int j = 0; j < d; ++j) gn->grad[j] += dy[j] * xh[j];
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Embedding / positions
// ---------------------------------------------------------------------------

inline Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
  if (table.rank() != 2) throw ShapeError("embedding table must be rank 2");
  const int v = table.dim(0), d = table.dim(1);
  std::vector<float> out(ids.size() * static_cast<size_t>(d));
  for (size_t i = 0; i < ids.size(); ++i) {
    int id = ids[i];
    if (id < 0 || id >= v)
      throw ShapeError("token id " + std::to_string(id) + " out of vocab range [0," +
                       std::to_string(v) + ")");
    std::copy_n(table.data() + static_cast<size_t>(id) * d, d, out.data() + i * d);
  }
  auto tn = table.node_ptr();
  auto ids_copy = std::make_shared<std::vector<int>>(ids);
  return detail::make_op_output(
      {static_cast<int>(ids.size()), d}, std::move(out), {table},
      [tn, ids_copy, d](detail::Node& self) {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        for (size_t i = 0; i < ids_copy->size(); ++i) {
          float* dst = tn->grad.data() + static_cast<size_t>((*ids_copy)[i]) * d;
          const float* src = self.grad.data() + i * d;
          for (int j = 0; j < d; ++j) dst[j] += src[j];
        }
      });
}

// Adds table[row % seq] to each row of x (batch folded into rows).
inline Tensor add_positional(const Tensor& x, const Tensor& table, int seq) {
  if (x.rank() != 2 || table.rank() != 2 || x.dim(1) != table.dim(1))
    throw ShapeError("add_positional shape mismatch");
  if (seq <= 0 || seq > table.dim(0)) throw ShapeError("sequence longer than positional table");
  const int d = x.dim(1), n = x.dim(0);
  std::vector<float> out(x.values());
  for (int r = 0; r < n; ++r) {
    const float* src = table.data() + static_cast<size_t>(r % seq) * d;
    float* dst = out.data() + static_cast<size_t>(r) * d;
    for (int j = 0; j < d; ++j) dst[j] += src[j];
  }
  detail::check_finite(out, "add_positional");
  auto xn = x.node_ptr(), tn = table.node_ptr();
  return detail::make_op_output(
      x.shape(), std::move(out), {x, table}, [xn, tn, n, d, seq](detail::Node& self) {
        if (xn->requires_grad) {
          xn->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
        }
        if (tn->requires_grad) {
          tn->ensure_grad();
          for (int r = 0; r < n; ++r) {
            float* dst = tn->grad.data() + static_cast<size_t>(r % seq) * d;
            const float* src = self.grad.data() + static_cast<size_t>(r) * d;
            for (int j = 0; j < d; ++j) dst[j] += src[j];
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

// Mean negative log-likelihood over rows; fused stable softmax.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy expects (positions x vocab) logits");
  const int n = logits.dim(0), v = logits.dim(1);
  if (static_cast<int>(targets.size()) != n)
    throw ShapeError("cross_entropy target count mismatch");
  for (int t : targets)
    if (t < 0 || t >= v)
      throw ShapeError("cross_entropy target id " + std::to_string(t) + " out of vocab range [0," +
                       std::to_string(v) + ")");

  auto probs = std::make_shared<std::vector<float>>(logits.values().size());
  double loss = 0.0;
  const float* pl = logits.data();
  for (int r = 0; r < n; ++r) {
    const float* lr = pl + static_cast<size_t>(r) * v;
    float* pr = probs->data() + static_cast<size_t>(r) * v;
    float mx = lr[0];
    for (int c = 1; c < v; ++c) mx = std::max(mx, lr[c]);
    double z = 0.0;
    for (int c = 0; c < v; ++c) {
      double e = std::exp(static_cast<double>(lr[c]) - mx);
      pr[c] = static_cast<float>(e);
      z += e;
    }
    double logz = std::log(z);
    for (int c = 0; c < v; ++c) pr[c] = static_cast<float>(pr[c] / z);
    loss -= static_cast<double>(lr[targets[static_cast<size_t>(r)]]) - mx - logz;
  }
  loss /= n;
  if (!std::isfinite(loss)) throw NumericError("cross_entropy produced a non-finite loss");
  auto ln = logits.node_ptr();
  auto tgt = std::make_shared<std::vector<int>>(targets);
  return detail::make_op_output(
      {1}, {static_cast<float>(loss)}, {logits}, [ln, tgt, probs, n, v](detail::Node& self) {
        if (!ln->requires_grad) return;
        ln->ensure_grad();
        float g = self.grad[0] / static_cast<float>(n);
        for (int r = 0; r < n; ++r) {
          float* dst = ln->grad.data() + static_cast<size_t>(r) * v;
          const float* pr = probs->data() + static_cast<size_t>(r) * v;
          for (int c = 0; c < v; ++c) dst[c] += g * pr[c];
          dst[(*tgt)[static_cast<size_t>(r)]] -= g;
        }
      });
}

// ---------------------------------------------------------------------------
// Random
// ---------------------------------------------------------------------------

// I.i.d. N(0, sigma^2) samples; sigma = 0 returns exact zeros. No gradient.
inline Tensor gaussian(Shape shape, double sigma, RngStream& rng) {
  if (sigma < 0) throw Error("gaussian: negative sigma");
  Tensor t = Tensor::zeros(std::move(shape));
  if (sigma == 0.0) return t;
  float* p = t.data();
  for (int64_t i = 0; i < t.numel(); ++i)
    p[i] = static_cast<float>(rng.next_gaussian() * sigma);
  detail::check_finite(t, "gaussian");
  return t;
}

// ---------------------------------------------------------------------------
// Fused causal multi-head attention
// ---------------------------------------------------------------------------

// Resolved per-layer ablation directive. mean_of_others replaces the head's
// pre-projection output with the mean of the other heads; self_control is the
// identity intervention.
struct AttnAblation {
  int head = -1;
  bool mean_of_others = true;
};

namespace detail {

// Rotary tables for one forward: cos/sin of position * base^(-2i/dh).
struct RopeTables {
  int seq = 0, half = 0;
  std::vector<float> cos_t, sin_t;
  void build(int seq_, int dh) {
    seq = seq_;
    half = dh / 2;
    cos_t.resize(static_cast<size_t>(seq) * half);
    sin_t.resize(static_cast<size_t>(seq) * half);
    for (int p = 0; p < seq; ++p) {
      for (int i = 0; i < half; ++i) {
        double theta = p * std::pow(10000.0, -2.0 * i / dh);
        cos_t[static_cast<size_t>(p) * half + i] = static_cast<float>(std::cos(theta));
        sin_t[static_cast<size_t>(p) * half + i] = static_cast<float>(std::sin(theta));
      }
    }
  }
};

// Rotates every head's (2i, 2i+1) pairs of each row by the row position's
// angle; sign=-1 applies the inverse rotation (used for gradients).
inline void rope_rows(std::vector<float>& m, int rows, int d, int heads, int seq,
                      const RopeTables& rt, int sign) {
  const int dh = d / heads;
  for (int r = 0; r < rows; ++r) {
    int p = r % seq;
    const float* cr = rt.cos_t.data() + static_cast<size_t>(p) * rt.half;
    const float* sr = rt.sin_t.data() + static_cast<size_t>(p) * rt.half;
    float* row = m.data() + static_cast<size_t>(r) * d;
    for (int h = 0; h < heads; ++h) {
      float* hp = row + h * dh;
      for (int i = 0; i < rt.half; ++i) {
        float c = cr[i], s = sign < 0 ? -sr[i] : sr[i];
        float x0 = hp[2 * i], x1 = hp[2 * i + 1];
        hp[2 * i] = x0 * c - x1 * s;
        hp[2 * i + 1] = x0 * s + x1 * c;
      }
    }
  }
}

}  // namespace detail

// q, k, v: (batch*seq x d) projections. Returns the concatenated per-head
// context (batch*seq x d), i.e. the pre-output-projection attention value.
// Causal within each sequence. When `head_capture` is given (batch must be 1)
// the post-intervention per-head outputs (seq x d/heads) are copied out.
inline Tensor multihead_attention(const Tensor& q, const Tensor& k, const Tensor& v, int batch,
                                  int seq, int heads, bool rotary,
                                  const AttnAblation* ablation = nullptr,
                                  std::vector<Tensor>* head_capture = nullptr) {
  detail::require_same_shape(q, k, "attention q/k");
  detail::require_same_shape(q, v, "attention q/v");
  if (q.rank() != 2 || q.dim(0) != batch * seq) throw ShapeError("attention rows != batch*seq");
  const int d = q.dim(1);
  if (d % heads != 0) throw ShapeError("d_model not divisible by head count");
  const int dh = d / heads;
  if (rotary && dh % 2 != 0) throw ShapeError("rotary positions need an even head dimension");
  if (ablation && ablation->head >= 0) {
    if (ablation->head >= heads) throw ShapeError("ablation head index out of range");
    if (ablation->mean_of_others && heads < 2)
      throw ShapeError("mean_of_others ablation needs at least 2 heads");
  }
  const bool needs_grad = q.requires_grad() || k.requires_grad() || v.requires_grad();
  if (needs_grad && ablation && ablation->head >= 0 && ablation->mean_of_others)
    throw Error("head ablation is inference-only");

  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  auto rt = std::make_shared<detail::RopeTables>();
  if (rotary) rt->build(seq, dh);

  auto qr = std::make_shared<std::vector<float>>(q.values());
  auto kr = std::make_shared<std::vector<float>>(k.values());
  if (rotary) {
    detail::rope_rows(*qr, batch * seq, d, heads, seq, *rt, +1);
    detail::rope_rows(*kr, batch * seq, d, heads, seq, *rt, +1);
  }

  auto probs = std::make_shared<std::vector<float>>(
      static_cast<size_t>(batch) * heads * seq * seq, 0.0f);
  std::vector<float> out(static_cast<size_t>(batch) * seq * d);
  std::vector<float> scores(static_cast<size_t>(seq) * seq);

  for (int b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      const float* qb = qr->data() + static_cast<size_t>(b) * seq * d + h * dh;
      const float* kb = kr->data() + static_cast<size_t>(b) * seq * d + h * dh;
      const float* vb = v.data() + static_cast<size_t>(b) * seq * d + h * dh;
      float* ob = out.data() + static_cast<size_t>(b) * seq * d + h * dh;
      float* pb = probs->data() + (static_cast<size_t>(b) * heads + h) * seq * seq;

      detail::ECBlockMap Q(qb, seq, dh, detail::EStride(d));
      detail::ECBlockMap K(kb, seq, dh, detail::EStride(d));
      detail::ECBlockMap V(vb, seq, dh, detail::EStride(d));
      detail::EMap S(scores.data(), seq, seq);
      S.noalias() = Q * K.transpose() * static_cast<float>(inv_scale);

      // Causal softmax: row t sees columns <= t.
      for (int t = 0; t < seq; ++t) {
        const float* sr = scores.data() + static_cast<size_t>(t) * seq;
        float* pr = pb + static_cast<size_t>(t) * seq;
        float mx = sr[0];
        for (int j = 1; j <= t; ++j) mx = std::max(mx, sr[j]);
        double z = 0.0;
        for (int j = 0; j <= t; ++j) {
          double e = std::exp(static_cast<double>(sr[j]) - mx);
          pr[j] = static_cast<float>(e);
          z += e;
        }
        for (int j = 0; j <= t; ++j) pr[j] = static_cast<float>(pr[j] / z);
      }

      detail::ECMap P(pb, seq, seq);
      detail::EBlockMap C(ob, seq, dh, detail::EStride(d));
      C.noalias() = P * V;
    }
  }

  if (ablation && ablation->head >= 0 && ablation->mean_of_others) {
    const int ah = ablation->head;
    const float w = 1.0f / static_cast<float>(heads - 1);
    for (int r = 0; r < batch * seq; ++r) {
      float* row = out.data() + static_cast<size_t>(r) * d;
      for (int i = 0; i < dh; ++i) {
        float acc = 0.0f;
        for (int h = 0; h < heads; ++h)
          if (h != ah) acc += row[h * dh + i];
        row[ah * dh + i] = acc * w;
      }
    }
  }

  if (head_capture) {
    if (batch != 1) throw Error("trace capture requires batch == 1");
    for (int h = 0; h < heads; ++h) {
      Tensor hc = Tensor::zeros({seq, dh});
      for (int t = 0; t < seq; ++t)
        std::copy_n(out.data() + static_cast<size_t>(t) * d + h * dh, dh,
                    hc.data() + static_cast<size_t>(t) * dh);
      head_capture->push_back(std::move(hc));
    }
  }

  detail::check_finite(out, "attention");
  auto qn = q.node_ptr(), kn = k.node_ptr(), vn = v.node_ptr();
  const bool use_rope = rotary;
  return detail::make_op_output(
      {batch * seq, d}, std::move(out), {q, k, v},
      [qn, kn, vn, qr, kr, probs, rt, batch, seq, heads, d, dh, inv_scale,
       use_rope](detail::Node& self) {
        std::vector<float> dqr(qn->requires_grad || kn->requires_grad
                                   ? static_cast<size_t>(batch) * seq * d
                                   : 0,
                               0.0f);
        std::vector<float> dkr(dqr.size(), 0.0f);
        std::vector<float> dp(static_cast<size_t>(seq) * seq);
        if (vn->requires_grad) vn->ensure_grad();

        for (int b = 0; b < batch; ++b) {
          for (int h = 0; h < heads; ++h) {
            size_t base = static_cast<size_t>(b) * seq * d + static_cast<size_t>(h) * dh;
            const float* pb = probs->data() + (static_cast<size_t>(b) * heads + h) * seq * seq;
            detail::ECMap P(pb, seq, seq);
            detail::ECBlockMap dC(self.grad.data() + base, seq, dh, detail::EStride(d));

            if (vn->requires_grad) {
              detail::EBlockMap dV(vn->grad.data() + base, seq, dh, detail::EStride(d));
              dV.noalias() += P.transpose() * dC;
            }
            if (dqr.empty()) continue;

            // dS = P .* (dP - rowsum(P .* dP)), causal rows only.
            {
              detail::ECBlockMap V(vn->value.data() + base, seq, dh, detail::EStride(d));
              detail::EMap dP(dp.data(), seq, seq);
              dP.noalias() = dC * V.transpose();
            }
            for (int t = 0; t < seq; ++t) {
              const float* pr = pb + static_cast<size_t>(t) * seq;
              float* dpr = dp.data() + static_cast<size_t>(t) * seq;
              double dot = 0.0;
              for (int j = 0; j <= t; ++j) dot += static_cast<double>(pr[j]) * dpr[j];
              for (int j = 0; j <= t; ++j)
                dpr[j] = static_cast<float>(pr[j] * (static_cast<double>(dpr[j]) - dot) * inv_scale);
              for (int j = t + 1; j < seq; ++j) dpr[j] = 0.0f;
            }
            detail::ECMap dS(dp.data(), seq, seq);
            detail::ECBlockMap Qr(qr->data() + base, seq, dh, detail::EStride(d));
            detail::ECBlockMap Kr(kr->data() + base, seq, dh, detail::EStride(d));
            detail::EBlockMap dQ(dqr.data() + base, seq, dh, detail::EStride(d));
            detail::EBlockMap dK(dkr.data() + base, seq, dh, detail::EStride(d));
            dQ.noalias() += dS * Kr;
            dK.noalias() += dS.transpose() * Qr;
          }
        }

        if (!dqr.empty()) {
          if (use_rope) {
            detail::rope_rows(dqr, batch * seq, d, heads, seq, *rt, -1);
            detail::rope_rows(dkr, batch * seq, d, heads, seq, *rt, -1);
          }
          if (qn->requires_grad) {
            qn->ensure_grad();
            for (size_t i = 0; i < dqr.size(); ++i) qn->grad[i] += dqr[i];
          }
          if (kn->requires_grad) {
            kn->ensure_grad();
            for (size_t i = 0; i < dkr.size(); ++i) kn->grad[i] += dkr[i];
          }
        }
      });
}

}  // namespace memlab
