#include <catch2/catch_amalgamated.hpp>

#include "memlab/tensor/ops.hpp"

using namespace memlab;
using Catch::Approx;

TEST_CASE("matmul: identity, hand-computed product, shape mismatch") {
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor r = matmul(eye, m);
  REQUIRE(r.values() == std::vector<float>{1, 2, 3, 4});

  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({2, 1}, {5, 6});
  Tensor c = matmul(a, b);
  REQUIRE(c.values() == std::vector<float>{17, 39});

  Tensor bad = Tensor::zeros({2, 3});
  REQUIRE_THROWS_AS(matmul(bad, bad), ShapeError);
}

TEST_CASE("softmax: uniform, closed form, large-logit stability") {
  Tensor z = Tensor::from({4}, {0, 0, 0, 0});
  for (float v : softmax(z, 0).values()) REQUIRE(v == Approx(0.25));

  Tensor l = Tensor::from({3}, {0.0f, std::log(2.0f), std::log(3.0f)});
  Tensor s = softmax(l, 0);
  REQUIRE(s.values()[0] == Approx(1.0 / 6.0).margin(1e-6));
  REQUIRE(s.values()[1] == Approx(2.0 / 6.0).margin(1e-6));
  REQUIRE(s.values()[2] == Approx(3.0 / 6.0).margin(1e-6));

  Tensor big = Tensor::from({2}, {1000.0f, 0.0f});
  Tensor sb = softmax(big, 0);
  REQUIRE(sb.values()[0] == Approx(1.0));
  REQUIRE(sb.values()[1] == Approx(0.0).margin(1e-30));

  REQUIRE_THROWS_AS(softmax(Tensor::zeros({0}), 0), ShapeError);
}

TEST_CASE("softmax rows sum to one along either axis") {
  RngStream rng(3);
  Tensor m = gaussian({5, 7}, 2.0, rng);
  for (int axis : {0, 1}) {
    Tensor s = softmax(m, axis);
    int rows = axis == 1 ? 5 : 7;
    int cols = axis == 1 ? 7 : 5;
    for (int r = 0; r < rows; ++r) {
      double sum = 0.0;
      for (int c = 0; c < cols; ++c)
        sum += axis == 1 ? s.values()[static_cast<size_t>(r) * 7 + c]
                         : s.values()[static_cast<size_t>(c) * 7 + r];
      REQUIRE(sum == Approx(1.0).margin(1e-6));
    }
  }
}

TEST_CASE("rms: zeros, ones, hand value, scaling homogeneity") {
  REQUIRE(rms(Tensor::zeros({3, 3})) == 0.0);
  REQUIRE(rms(Tensor::full({5}, 1.0f)) == Approx(1.0));
  REQUIRE(rms(Tensor::from({2}, {3, 4})) == Approx(std::sqrt(12.5)));
  REQUIRE_THROWS_AS(rms(Tensor::zeros({0})), ShapeError);

  RngStream rng(9);
  Tensor h = gaussian({6, 4}, 1.0, rng);
  for (double c : {-3.0, 0.5, 2.0}) {
    REQUIRE(rms(scale(h, c)) == Approx(std::abs(c) * rms(h)).epsilon(1e-5));
  }
}

TEST_CASE("layer_norm: constant rows, [1,-1], zero gain") {
  Tensor g1 = Tensor::full({4}, 1.0f), b0 = Tensor::zeros({4});
  Tensor constant = Tensor::full({4}, 3.25f);
  for (float v : layer_norm(constant, g1, b0).values()) REQUIRE(std::abs(v) < 1e-4f);

  Tensor two = Tensor::from({2}, {1, -1});
  Tensor g2 = Tensor::full({2}, 1.0f), b2 = Tensor::zeros({2});
  Tensor out = layer_norm(two, g2, b2);
  REQUIRE(out.values()[0] == Approx(1.0).margin(1e-4));
  REQUIRE(out.values()[1] == Approx(-1.0).margin(1e-4));

  Tensor bias = Tensor::from({2}, {5, -7});
  Tensor gz = Tensor::zeros({2});
  Tensor ob = layer_norm(two, gz, bias);
  REQUIRE(ob.values() == std::vector<float>{5, -7});
}

TEST_CASE("rms_norm: unit-rms rows and zero gain") {
  Tensor x = Tensor::from({1, 2}, {1, -1});
  Tensor g = Tensor::full({2}, 1.0f);
  Tensor y = rms_norm(x, g);
  REQUIRE(y.values()[0] == Approx(1.0).margin(1e-4));
  REQUIRE(y.values()[1] == Approx(-1.0).margin(1e-4));
  for (float v : rms_norm(x, Tensor::zeros({2})).values()) REQUIRE(v == 0.0f);
}

TEST_CASE("cross_entropy: confident, uniform, out-of-range target") {
  Tensor confident = Tensor::from({1, 3}, {30.0f, 0.0f, 0.0f});
  REQUIRE(cross_entropy(confident, {0}).values()[0] == Approx(0.0).margin(1e-6));

  const int v = 17;
  Tensor uniform = Tensor::zeros({2, v});
  REQUIRE(cross_entropy(uniform, {3, 11}).values()[0] == Approx(std::log(v)).margin(1e-6));

  REQUIRE_THROWS_AS(cross_entropy(uniform, {3, v}), ShapeError);
  REQUIRE_THROWS_AS(cross_entropy(uniform, {-1, 0}), ShapeError);
}

TEST_CASE("ops reject non-finite results instead of propagating them") {
  Tensor huge = Tensor::full({2, 2}, 3e38f);
  REQUIRE_THROWS_AS(add(huge, huge), NumericError);
  REQUIRE_THROWS_AS(matmul(huge, huge), NumericError);
  REQUIRE_THROWS_AS(scale(huge, 1e10), NumericError);
}

TEST_CASE("op determinism: identical inputs give bit-identical outputs") {
  RngStream r1(31), r2(31);
  Tensor a1 = gaussian({16, 16}, 1.0, r1), a2 = gaussian({16, 16}, 1.0, r2);
  RngStream r3(32), r4(32);
  Tensor b1 = gaussian({16, 16}, 1.0, r3), b2 = gaussian({16, 16}, 1.0, r4);
  REQUIRE(matmul(a1, b1).values() == matmul(a2, b2).values());
  REQUIRE(softmax(a1, 1).values() == softmax(a2, 1).values());
  Tensor g = Tensor::full({16}, 1.0f);
  REQUIRE(rms_norm(a1, g).values() == rms_norm(a2, g).values());
}

TEST_CASE("tensor shape contract") {
  REQUIRE_THROWS_AS(Tensor::from({2, 3}, {1, 2, 3}), ShapeError);
  Tensor t = Tensor::zeros({2, 3});
  REQUIRE(t.numel() == 6);
  REQUIRE_THROWS_AS(t.grad(), Error);
}
