#include <catch2/catch_amalgamated.hpp>

#include "memlab/tensor/adam.hpp"
#include "memlab/tensor/ops.hpp"
#include "ref64.hpp"

using namespace memlab;
using Catch::Approx;

namespace {

std::vector<float> random_values(size_t n, uint64_t seed, double std_dev) {
  RngStream rng(seed);
  std::vector<float> out(n);
  for (auto& v : out) v = static_cast<float>(rng.next_gaussian() * std_dev);
  return out;
}

std::vector<double> widen(const std::vector<float>& v) { return {v.begin(), v.end()}; }

std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                const std::vector<double>& at) {
  std::vector<double> g(at.size());
  for (size_t i = 0; i < at.size(); ++i) g[i] = ref64::central_diff(f, at, i);
  return g;
}

}  // namespace

TEST_CASE("backward: d(x^2)/dx at 3 is 6") {
  Tensor x = Tensor::scalar(3.0f).set_requires_grad(true);
  Tensor y = mul(x, x);
  y.backward();
  REQUIRE(x.grad()[0] == Approx(6.0));
}

TEST_CASE("backward rejects non-scalar roots") {
  Tensor x = Tensor::zeros({2, 2}).set_requires_grad(true);
  Tensor y = add(x, x);
  REQUIRE_THROWS_AS(y.backward(), ShapeError);
}

TEST_CASE("gradients accumulate when a tensor feeds two consumers") {
  Tensor x = Tensor::scalar(2.0f).set_requires_grad(true);
  Tensor y = add(mul(x, x), x);  // x^2 + x, dy/dx = 2x + 1 = 5
  y.backward();
  REQUIRE(x.grad()[0] == Approx(5.0));
}

TEST_CASE("MLP gradients match the finite-difference oracle") {
  const int rows = 3, in = 6, hidden = 8, out = 5;
  std::vector<float> xv = random_values(rows * in, 11, 0.8);
  std::vector<float> w1v = random_values(in * hidden, 12, 0.4);
  std::vector<float> w2v = random_values(hidden * out, 13, 0.4);
  std::vector<int> targets = {1, 4, 0};

  auto f = [&](const std::vector<double>& p) {
    std::vector<double> w1(p.begin(), p.begin() + in * hidden);
    std::vector<double> w2(p.begin() + in * hidden, p.end());
    auto h = ref64::matmul(widen(xv), w1, rows, in, hidden);
    auto a = ref64::gelu(h);
    auto logits = ref64::matmul(a, w2, rows, hidden, out);
    return ref64::cross_entropy(logits, targets, rows, out);
  };

  Tensor x = Tensor::from({rows, in}, xv);
  Tensor w1 = Tensor::from({in, hidden}, w1v).set_requires_grad(true);
  Tensor w2 = Tensor::from({hidden, out}, w2v).set_requires_grad(true);
  Tensor loss = cross_entropy(matmul(gelu(matmul(x, w1)), w2), targets);
  loss.backward();

  std::vector<double> at = widen(w1v);
  for (double v : widen(w2v)) at.push_back(v);
  REQUIRE(loss.values()[0] == Approx(f(at)).epsilon(1e-5));

  std::vector<float> analytic = w1.grad();
  analytic.insert(analytic.end(), w2.grad().begin(), w2.grad().end());
  auto check = ref64::compare(analytic, fd_gradient(f, at));
  INFO("worst index " << check.worst);
  REQUIRE(check.max_rel < 1e-4);
}

TEST_CASE("normalization gradients match the finite-difference oracle") {
  const int rows = 4, d = 6, out = 5;
  std::vector<float> xv = random_values(rows * d, 21, 0.9);
  std::vector<float> gv = random_values(d, 22, 0.3);
  for (auto& v : gv) v += 1.0f;
  std::vector<float> bv = random_values(d, 23, 0.3);
  std::vector<float> wv = random_values(d * out, 24, 0.5);
  std::vector<int> targets = {0, 2, 4, 1};

  SECTION("layer_norm") {
    auto f = [&](const std::vector<double>& p) {
      std::vector<double> x(p.begin(), p.begin() + rows * d);
      std::vector<double> g(p.begin() + rows * d, p.begin() + rows * d + d);
      std::vector<double> b(p.begin() + rows * d + d, p.begin() + rows * d + 2 * d);
      std::vector<double> w(p.begin() + rows * d + 2 * d, p.end());
      auto n = ref64::layer_norm(x, g, b, rows, d);
      return ref64::cross_entropy(ref64::matmul(n, w, rows, d, out), targets, rows, out);
    };
    Tensor x = Tensor::from({rows, d}, xv).set_requires_grad(true);
    Tensor g = Tensor::from({d}, gv).set_requires_grad(true);
    Tensor b = Tensor::from({d}, bv).set_requires_grad(true);
    Tensor w = Tensor::from({d, out}, wv).set_requires_grad(true);
    Tensor loss = cross_entropy(matmul(layer_norm(x, g, b), w), targets);
    loss.backward();

    std::vector<double> at = widen(xv);
    for (const auto* src : {&gv, &bv, &wv})
      for (double v : widen(*src)) at.push_back(v);
    std::vector<float> analytic = x.grad();
    for (const Tensor* t : {&g, &b, &w})
      analytic.insert(analytic.end(), t->grad().begin(), t->grad().end());
    auto check = ref64::compare(analytic, fd_gradient(f, at));
    REQUIRE(check.max_rel < 1e-4);
  }

  SECTION("rms_norm") {
    auto f = [&](const std::vector<double>& p) {
      std::vector<double> x(p.begin(), p.begin() + rows * d);
      std::vector<double> g(p.begin() + rows * d, p.begin() + rows * d + d);
      std::vector<double> w(p.begin() + rows * d + d, p.end());
      auto n = ref64::rms_norm(x, g, rows, d);
      return ref64::cross_entropy(ref64::matmul(n, w, rows, d, out), targets, rows, out);
    };
    Tensor x = Tensor::from({rows, d}, xv).set_requires_grad(true);
    Tensor g = Tensor::from({d}, gv).set_requires_grad(true);
    Tensor w = Tensor::from({d, out}, wv).set_requires_grad(true);
    Tensor loss = cross_entropy(matmul(rms_norm(x, g), w), targets);
    loss.backward();

    std::vector<double> at = widen(xv);
    for (const auto* src : {&gv, &wv})
      for (double v : widen(*src)) at.push_back(v);
    std::vector<float> analytic = x.grad();
    for (const Tensor* t : {&g, &w})
      analytic.insert(analytic.end(), t->grad().begin(), t->grad().end());
    auto check = ref64::compare(analytic, fd_gradient(f, at));
    REQUIRE(check.max_rel < 1e-4);
  }
}

TEST_CASE("attention-block gradients match the finite-difference oracle") {
  const int seq = 5, d = 8, heads = 2, vocab = 6;
  const bool rotary = GENERATE(false, true);
  std::vector<float> xv = random_values(seq * d, 31, 0.8);
  std::vector<float> wqv = random_values(d * d, 32, 0.35);
  std::vector<float> wkv = random_values(d * d, 33, 0.35);
  std::vector<float> wvv = random_values(d * d, 34, 0.35);
  std::vector<float> wov = random_values(d * d, 35, 0.35);
  std::vector<float> wuv = random_values(d * vocab, 36, 0.4);
  std::vector<int> targets = {0, 3, 5, 2, 1};

  auto f = [&](const std::vector<double>& p) {
    size_t o = 0;
    auto slice = [&](size_t n) {
      std::vector<double> s(p.begin() + o, p.begin() + o + n);
      o += n;
      return s;
    };
    auto x = slice(seq * d), wq = slice(d * d), wk = slice(d * d), wv = slice(d * d),
         wo = slice(d * d), wu = slice(d * vocab);
    auto q = ref64::matmul(x, wq, seq, d, d);
    auto k = ref64::matmul(x, wk, seq, d, d);
    auto v = ref64::matmul(x, wv, seq, d, d);
    auto a = ref64::causal_attention(q, k, v, seq, d, heads, rotary);
    auto proj = ref64::matmul(a, wo, seq, d, d);
    auto logits = ref64::matmul(proj, wu, seq, d, vocab);
    return ref64::cross_entropy(logits, targets, seq, vocab);
  };

  Tensor x = Tensor::from({seq, d}, xv).set_requires_grad(true);
  Tensor wq = Tensor::from({d, d}, wqv).set_requires_grad(true);
  Tensor wk = Tensor::from({d, d}, wkv).set_requires_grad(true);
  Tensor wv = Tensor::from({d, d}, wvv).set_requires_grad(true);
  Tensor wo = Tensor::from({d, d}, wov).set_requires_grad(true);
  Tensor wu = Tensor::from({d, vocab}, wuv).set_requires_grad(true);
  Tensor attn = multihead_attention(matmul(x, wq), matmul(x, wk), matmul(x, wv), 1, seq, heads, rotary);
  Tensor loss = cross_entropy(matmul(matmul(attn, wo), wu), targets);
  loss.backward();

  std::vector<double> at = widen(xv);
  for (const auto* src : {&wqv, &wkv, &wvv, &wov, &wuv})
    for (double v : widen(*src)) at.push_back(v);
  REQUIRE(loss.values()[0] == Approx(f(at)).epsilon(1e-5));

  std::vector<float> analytic = x.grad();
  for (const Tensor* t : {&wq, &wk, &wv, &wo, &wu})
    analytic.insert(analytic.end(), t->grad().begin(), t->grad().end());
  auto check = ref64::compare(analytic, fd_gradient(f, at));
  INFO("rotary=" << rotary << " worst index " << check.worst);
  REQUIRE(check.max_rel < 1e-4);
}

TEST_CASE("embedding scatter-add gradients") {
  Tensor table = Tensor::from({3, 2}, {0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f}).set_requires_grad(true);
  Tensor rows = embedding(table, {2, 0, 2});
  Tensor loss = sum(rows);
  loss.backward();
  REQUIRE(table.grad() == std::vector<float>{1, 1, 0, 0, 2, 2});
  REQUIRE_THROWS_AS(embedding(table, {3}), ShapeError);
}

TEST_CASE("adam: lr 0 is a no-op, positive lr reduces a quadratic") {
  std::vector<float> start = random_values(10, 77, 1.0);
  std::vector<Tensor> params = {Tensor::from({10}, start).set_requires_grad(true)};
  AdamState state(params);
  Tensor loss = sum(mul(params[0], params[0]));
  loss.backward();

  AdamHyper frozen;
  frozen.lr = 0.0;
  adam_step(params, state, frozen);
  REQUIRE(params[0].values() == start);

  AdamHyper hyper;
  hyper.lr = 0.05;
  for (int i = 0; i < 200; ++i) {
    params[0].zero_grad();
    Tensor l = sum(mul(params[0], params[0]));
    l.backward();
    adam_step(params, state, hyper);
  }
  Tensor final_loss = sum(mul(params[0], params[0]));
  REQUIRE(final_loss.values()[0] < 0.05f);
}
