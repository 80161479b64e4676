#include <catch2/catch_amalgamated.hpp>

#include "memlab/tensor/ops.hpp"
#include "memlab/tensor/rng.hpp"

using namespace memlab;

TEST_CASE("identical seeds reproduce identical draw sequences") {
  RngStream a(1234), b(1234);
  for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("named substreams decorrelate") {
  RngStream root(7);
  RngStream a = root.named("corpus"), b = root.named("train");
  int same = 0;
  for (int i = 0; i < 64; ++i) same += a.next_u64() == b.next_u64() ? 1 : 0;
  REQUIRE(same == 0);
  REQUIRE(root.named("corpus").next_u64() == RngStream(7).named("corpus").next_u64());
}

TEST_CASE("substream indices give distinct streams, reproducibly") {
  RngStream root(3);
  REQUIRE(root.substream(1).next_u64() != root.substream(2).next_u64());
  REQUIRE(root.substream2(5, 9).next_u64() == root.substream2(5, 9).next_u64());
  REQUIRE(root.substream2(5, 9).next_u64() != root.substream2(9, 5).next_u64());
}

TEST_CASE("gaussian sampling: sigma 0, determinism, negative sigma") {
  RngStream rng(42);
  Tensor z = gaussian({4, 4}, 0.0, rng);
  for (float v : z.values()) REQUIRE(v == 0.0f);

  RngStream r1(42), r2(42);
  Tensor a = gaussian({128}, 1.5, r1);
  Tensor b = gaussian({128}, 1.5, r2);
  REQUIRE(a.values() == b.values());

  RngStream r3(42);
  REQUIRE_THROWS_AS(gaussian({2}, -0.1, r3), Error);
}

TEST_CASE("gaussian sampling matches N(0,1) moments on 1e6 draws") {
  RngStream rng(2024);
  const int n = 1000000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    double g = rng.next_gaussian();
    sum += g;
    sq += g * g;
  }
  double mean = sum / n;
  double stddev = std::sqrt(sq / n - mean * mean);
  REQUIRE(std::abs(mean) < 0.01);
  REQUIRE(stddev > 0.99);
  REQUIRE(stddev < 1.01);
}

TEST_CASE("uniform doubles stay in [0,1)") {
  RngStream rng(5);
  for (int i = 0; i < 10000; ++i) {
    double u = rng.next_double();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
}
