#include <catch2/catch_amalgamated.hpp>

#include "btc/rng.hpp"
#include "btc/tensor.hpp"

using namespace btc;

TEST_CASE("shapes validate on construction", "[tensor]") {
  CHECK(Tensor({2, 3}).numel() == 6);
  CHECK(Tensor({1}).rank() == 1);
  CHECK_THROWS_AS(Tensor({2, 0, 3}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({1, 1, 1, 1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<float>{1.0f}), std::invalid_argument);
}

TEST_CASE("elementwise ops demand matching shapes", "[tensor]") {
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 2}, {4, 3, 2, 1});
  Tensor c = a + b;
  for (std::size_t i = 0; i < c.numel(); ++i) CHECK(c[i] == 5.0f);
  CHECK_THROWS_AS(a + Tensor({4}), std::invalid_argument);
  CHECK(linf_distance(a, b) == 3.0f);
}

TEST_CASE("frame slicing round-trips", "[tensor]") {
  Tensor t({3, 2, 2, 2});
  Rng rng(5);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.next_float();
  Tensor f1 = t.slice_frame(1);
  CHECK(f1.shape() == Shape{2, 2, 2});
  Tensor copy({3, 2, 2, 2});
  for (int f = 0; f < 3; ++f) copy.assign_frame(f, t.slice_frame(f));
  CHECK(copy == t);
  CHECK_THROWS_AS(t.slice_frame(3), std::out_of_range);
}

TEST_CASE("clamp bounds every element", "[tensor]") {
  Tensor t({5}, {-2.0f, -0.01f, 0.0f, 0.01f, 2.0f});
  t.clamp_(-0.5f, 0.5f);
  CHECK(t[0] == -0.5f);
  CHECK(t[4] == 0.5f);
  CHECK(t[2] == 0.0f);
  CHECK(t.max_abs() == 0.5f);
}

TEST_CASE("rng streams are deterministic and fork independently", "[tensor]") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
  Rng c = Rng(123).fork(1);
  Rng d = Rng(123).fork(2);
  CHECK(c.next_u64() != d.next_u64());
  Rng u(9);
  for (int i = 0; i < 1000; ++i) {
    const float v = u.uniform(-0.25f, 0.25f);
    REQUIRE(v >= -0.25f);
    REQUIRE(v < 0.25f);
  }
}
