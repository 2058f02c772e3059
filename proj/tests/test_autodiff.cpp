#include <catch2/catch_amalgamated.hpp>

#include "btc/autodiff.hpp"
#include "btc/rng.hpp"
#include "btc/tensor.hpp"

using namespace btc;

namespace {

Tensor random_tensor(const Shape& shape, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  Rng rng(seed);
  Tensor t(shape);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Random values bounded away from zero, so relu kinks cannot sit within a
// finite-difference step of the evaluation point.
Tensor random_tensor_off_kink(const Shape& shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(shape);
  for (std::size_t i = 0; i < t.numel(); ++i) {
    const float mag = rng.uniform(0.1f, 1.0f);
    t[i] = rng.next_float() < 0.5f ? -mag : mag;
  }
  return t;
}

template <typename BuildFn>
ad::DifferentiableLoss loss_of(BuildFn build) {
  return [build](const Tensor& point) {
    ad::Tape tape;
    ad::Value x = tape.leaf(point, true);
    ad::Value loss = build(tape, x);
    tape.backward(loss);
    return std::make_pair(tape.scalar_value(loss), tape.grad(x));
  };
}

}  // namespace

TEST_CASE("cosine similarity on the axis cases", "[diffcore]") {
  ad::Tape tape;
  auto cos_of = [&](std::vector<float> a, std::vector<float> b) {
    return tape.scalar_value(tape.cosine_similarity(tape.leaf(Tensor({2}, std::move(a))),
                                                    tape.leaf(Tensor({2}, std::move(b)))));
  };
  CHECK(cos_of({1, 0}, {0, 1}) == 0.0);
  CHECK_THAT(cos_of({1, 2}, {2, 4}), Catch::Matchers::WithinAbs(1.0, 1e-7));
  CHECK_THAT(cos_of({1, 0}, {-1, 0}), Catch::Matchers::WithinAbs(-1.0, 1e-7));
}

TEST_CASE("cosine similarity rejects mismatched shapes naming both", "[diffcore]") {
  ad::Tape tape;
  ad::Value a = tape.leaf(Tensor({2, 3}));
  ad::Value b = tape.leaf(Tensor({4}));
  CHECK_THROWS_WITH(tape.cosine_similarity(a, b),
                    Catch::Matchers::ContainsSubstring("(2x3)") && Catch::Matchers::ContainsSubstring("(4)"));
}

TEST_CASE("cosine similarity invariants over random inputs", "[diffcore]") {
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    Tensor a = random_tensor({3, 4}, seed);
    Tensor b = random_tensor({3, 4}, seed + 1000);
    ad::Tape tape;
    const double self = tape.scalar_value(tape.cosine_similarity(tape.leaf(a), tape.leaf(a)));
    REQUIRE_THAT(self, Catch::Matchers::WithinAbs(1.0, 1e-6));
    const double ab = tape.scalar_value(tape.cosine_similarity(tape.leaf(a), tape.leaf(b)));
    REQUIRE(std::abs(ab) <= 1.0 + 1e-6);
    const float c = 0.001f + 42.0f * static_cast<float>(seed);
    const double scaled = tape.scalar_value(tape.cosine_similarity(tape.leaf(a), tape.leaf(b * c)));
    REQUIRE_THAT(scaled, Catch::Matchers::WithinAbs(ab, 1e-6));
  }
}

TEST_CASE("cosine similarity zero-norm guard", "[diffcore]") {
  ad::Tape tape;
  ad::Value zero = tape.leaf(Tensor({3}), true);
  ad::Value other = tape.leaf(Tensor({3}, {1, 2, 3}), true);
  ad::Value sim = tape.cosine_similarity(zero, other);
  CHECK(tape.scalar_value(sim) == 0.0);
  tape.backward(sim);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(tape.grad(zero)[i] == 0.0f);
    CHECK(tape.grad(other)[i] == 0.0f);
  }
}

TEST_CASE("conv2d sums ones and applies identity kernels", "[diffcore]") {
  ad::Tape tape;
  ad::Value ones = tape.leaf(Tensor({1, 3, 3}, 1.0f));
  ad::Value kernel = tape.leaf(Tensor({1, 1, 2, 2}, 1.0f));
  const Tensor& out = tape.value(tape.conv2d(ones, kernel, 1));
  REQUIRE(out.shape() == Shape{1, 2, 2});
  for (std::size_t i = 0; i < out.numel(); ++i) CHECK(out[i] == 4.0f);

  Tensor input = random_tensor({2, 4, 5}, 3);
  ad::Value x = tape.leaf(input);
  Tensor ident({2, 2, 1, 1});
  ident[0] = 1.0f;  // out channel 0 copies channel 0
  ident[3] = 1.0f;  // out channel 1 copies channel 1
  const Tensor& same = tape.value(tape.conv2d(x, tape.leaf(ident), 1));
  CHECK(same == input);
}

TEST_CASE("conv2d rejects oversized kernels and bad shapes", "[diffcore]") {
  ad::Tape tape;
  ad::Value x = tape.leaf(Tensor({1, 3, 3}));
  CHECK_THROWS_AS(tape.conv2d(x, tape.leaf(Tensor({1, 1, 4, 4})), 1), std::invalid_argument);
  CHECK_THROWS_AS(tape.conv2d(x, tape.leaf(Tensor({1, 2, 2, 2})), 1), std::invalid_argument);
}

TEST_CASE("conv2d backward matches finite differences", "[diffcore]") {
  const Tensor input = random_tensor_off_kink({2, 8, 8}, 11);
  const Tensor kernels = random_tensor({4, 2, 3, 3}, 12, -0.5f, 0.5f);
  const Tensor target = random_tensor({4, 6, 6}, 13);

  SECTION("w.r.t. input") {
    auto loss = loss_of([&](ad::Tape& t, ad::Value x) {
      return t.cosine_similarity(t.conv2d(x, t.leaf(kernels), 1), t.leaf(target));
    });
    CHECK(ad::finite_difference_check(loss, input) < 1e-3);
  }
  SECTION("w.r.t. kernels") {
    auto loss = loss_of([&](ad::Tape& t, ad::Value w) {
      return t.cosine_similarity(t.conv2d(t.leaf(input), w, 1), t.leaf(target));
    });
    CHECK(ad::finite_difference_check(loss, kernels) < 1e-3);
  }
  SECTION("strided, w.r.t. input") {
    auto loss = loss_of([&](ad::Tape& t, ad::Value x) {
      return t.cosine_similarity(t.conv2d(x, t.leaf(kernels), 2), t.leaf(random_tensor({4, 3, 3}, 14)));
    });
    CHECK(ad::finite_difference_check(loss, input) < 1e-3);
  }
}

TEST_CASE("relu forward and masked backward", "[diffcore]") {
  ad::Tape tape;
  const Tensor& out = tape.value(tape.relu(tape.leaf(Tensor({3}, {-1, 0, 2}))));
  CHECK(out == Tensor({3}, {0, 0, 2}));

  Tensor pos = random_tensor({2, 3}, 4, 0.01f, 1.0f);
  CHECK(tape.value(tape.relu(tape.leaf(pos))) == pos);

  ad::Value x = tape.leaf(Tensor({2}, {-1, 2}), true);
  ad::Value s = tape.sum(tape.relu(x));  // upstream gradient (1, 1)
  tape.backward(s);
  CHECK(tape.grad(x) == Tensor({2}, {0, 1}));
}

TEST_CASE("avgpool2d means windows and splits gradient uniformly", "[diffcore]") {
  ad::Tape tape;
  const Tensor& pooled = tape.value(tape.avgpool2d(tape.leaf(Tensor({1, 2, 2}, {1, 2, 3, 4})), 2));
  REQUIRE(pooled.shape() == Shape{1, 1, 1});
  CHECK(pooled[0] == 2.5f);

  const Tensor& constant = tape.value(tape.avgpool2d(tape.leaf(Tensor({2, 4, 4}, 0.7f)), 2));
  REQUIRE(constant.shape() == Shape{2, 2, 2});
  for (std::size_t i = 0; i < constant.numel(); ++i) CHECK(constant[i] == 0.7f);

  ad::Value x = tape.leaf(Tensor({1, 2, 2}, {1, 2, 3, 4}), true);
  ad::Value s = tape.sum(tape.avgpool2d(x, 2));
  tape.backward(s);
  for (std::size_t i = 0; i < 4; ++i) CHECK(tape.grad(x)[i] == 0.25f);

  CHECK_THROWS_AS(tape.avgpool2d(tape.leaf(Tensor({1, 3, 3})), 2), std::invalid_argument);
}

TEST_CASE("zero_pad2d pads and crops on backward", "[diffcore]") {
  ad::Tape tape;
  ad::Value x = tape.leaf(Tensor({1, 2, 2}, {1, 2, 3, 4}), true);
  ad::Value padded = tape.zero_pad2d(x, 1);
  REQUIRE(tape.value(padded).shape() == Shape{1, 4, 4});
  CHECK(tape.value(padded).at3(0, 0, 0, 4, 4) == 0.0f);
  CHECK(tape.value(padded).at3(0, 1, 1, 4, 4) == 1.0f);
  CHECK(tape.value(padded).at3(0, 2, 2, 4, 4) == 4.0f);
  ad::Value s = tape.sum(padded);
  tape.backward(s);
  for (std::size_t i = 0; i < 4; ++i) CHECK(tape.grad(x)[i] == 1.0f);
}

TEST_CASE("backward of x*x and of cos(x,x)", "[diffcore]") {
  ad::Tape tape;
  ad::Value x = tape.leaf(Tensor::scalar(3.0f), true);
  ad::Value square = tape.mul(x, x);
  tape.backward(square);
  CHECK(tape.grad(x)[0] == 6.0f);

  ad::Tape tape2;
  ad::Value v = tape2.leaf(Tensor({4}, {0.5f, -1.0f, 2.0f, 0.25f}), true);
  ad::Value sim = tape2.cosine_similarity(v, v);
  CHECK_THAT(tape2.scalar_value(sim), Catch::Matchers::WithinAbs(1.0, 1e-7));
  tape2.backward(sim);
  for (std::size_t i = 0; i < 4; ++i) CHECK_THAT(tape2.grad(v)[i], Catch::Matchers::WithinAbs(0.0, 1e-7));
}

TEST_CASE("backward requires a scalar output", "[diffcore]") {
  ad::Tape tape;
  ad::Value x = tape.leaf(Tensor({2, 2}), true);
  CHECK_THROWS_AS(tape.backward(tape.relu(x)), std::invalid_argument);
}

TEST_CASE("composite conv-relu-pool-cosine gradient matches finite differences", "[diffcore]") {
  const Tensor kernels = random_tensor({3, 2, 3, 3}, 21, -0.4f, 0.4f);
  const Tensor target = random_tensor({3, 3, 3}, 22);
  auto loss = loss_of([&](ad::Tape& t, ad::Value x) {
    ad::Value feat = t.avgpool2d(t.relu(t.conv2d(t.zero_pad2d(x, 1), t.leaf(kernels), 1)), 2);
    return t.cosine_similarity(feat, t.leaf(target));
  });
  const Tensor point = random_tensor_off_kink({2, 6, 6}, 23);
  CHECK(ad::finite_difference_check(loss, point) < 1e-3);
}

TEST_CASE("finite differences are exact for quadratics and constants", "[diffcore]") {
  auto quadratic = loss_of([](ad::Tape& t, ad::Value x) { return t.sum(t.mul(x, x)); });
  // Step and point on the 2^-10 grid: x +/- h is exact in f32, so central
  // differences of a quadratic reduce to the analytic slope exactly.
  const double h = 0x1.0p-10;
  Rng rng(31);
  Tensor point({3, 5});
  for (std::size_t i = 0; i < point.numel(); ++i)
    point[i] = static_cast<float>(static_cast<int>(rng.next_below(2049)) - 1024) * 0x1.0p-10f;
  CHECK(ad::finite_difference_check(quadratic, point, h) < 1e-6);

  auto constant = [](const Tensor& p) { return std::make_pair(2.5, Tensor(p.shape())); };
  CHECK(ad::finite_difference_check(constant, random_tensor({4}, 32)) == 0.0);
}

TEST_CASE("backward is bit-deterministic and prunes constant branches", "[diffcore]") {
  const Tensor input = random_tensor({2, 6, 6}, 41);
  const Tensor kernels = random_tensor({3, 2, 3, 3}, 42, -0.4f, 0.4f);
  auto run = [&]() {
    ad::Tape tape;
    ad::Value x = tape.leaf(input, true);
    ad::Value w = tape.leaf(kernels);  // constant branch
    ad::Value loss = tape.sum(tape.relu(tape.conv2d(x, w, 1)));
    tape.backward(loss);
    return std::make_pair(tape.grad(x), w);
  };
  ad::Tape probe;
  auto [g1, w1] = run();
  auto [g2, w2] = run();
  CHECK(g1 == g2);

  ad::Tape tape;
  ad::Value x = tape.leaf(input, true);
  ad::Value w = tape.leaf(kernels);
  tape.backward(tape.sum(tape.conv2d(x, w, 1)));
  CHECK_THROWS_AS(tape.grad(w), std::logic_error);  // not a marked input
}
