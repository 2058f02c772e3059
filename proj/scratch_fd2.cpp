// Scratch: bisect which op breaks the gradient check.
#include <cstdio>

#include "btc/autodiff.hpp"
#include "btc/rng.hpp"

using namespace btc;

static Tensor rnd(const Shape& s, std::uint64_t seed, float lo, float hi) {
  Rng r(seed);
  Tensor t(s);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = r.uniform(lo, hi);
  return t;
}

template <typename F>
static void report(const char* name, F f, const Tensor& point) {
  auto [v, g] = f(point);
  double worst = 0.0;
  std::size_t worst_i = 0;
  double wa = 0, wn = 0;
  for (std::size_t i = 0; i < point.numel(); ++i) {
    Tensor p = point, m = point;
    p[i] = static_cast<float>(p[i] + 1e-3);
    m[i] = static_cast<float>(m[i] - 1e-3);
    double numeric = (f(p).first - f(m).first) / 2e-3;
    double a = g[i];
    double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
    double err = std::abs(a - numeric) / denom;
    if (err > worst) {
      worst = err;
      worst_i = i;
      wa = a;
      wn = numeric;
    }
  }
  printf("%-28s worst %.3e at %zu (analytic %.8f numeric %.8f)\n", name, worst, worst_i, wa, wn);
}

int main() {
  // cosine alone
  {
    Tensor t0 = rnd({16}, 2, -1, 1);
    auto f = [&](const Tensor& p) {
      ad::Tape tape;
      ad::Value x = tape.leaf(p, true);
      ad::Value s = tape.cosine_similarity(x, tape.leaf(t0));
      tape.backward(s);
      return std::make_pair(tape.scalar_value(s), tape.grad(x));
    };
    report("cosine(x, t)", f, rnd({16}, 1, -1, 1));
  }
  // sum(mul) quadratic
  {
    auto f = [&](const Tensor& p) {
      ad::Tape tape;
      ad::Value x = tape.leaf(p, true);
      ad::Value s = tape.sum(tape.mul(x, x));
      tape.backward(s);
      return std::make_pair(tape.scalar_value(s), tape.grad(x));
    };
    report("sum(x*x)", f, rnd({16}, 3, -1, 1));
  }
  // conv + sum (linear in x -> FD exact-ish)
  {
    Tensor w = rnd({4, 2, 3, 3}, 4, -0.5f, 0.5f);
    auto f = [&](const Tensor& p) {
      ad::Tape tape;
      ad::Value x = tape.leaf(p, true);
      ad::Value s = tape.sum(tape.conv2d(x, tape.leaf(w), 1));
      tape.backward(s);
      return std::make_pair(tape.scalar_value(s), tape.grad(x));
    };
    report("sum(conv(x,w))", f, rnd({2, 8, 8}, 5, -1, 1));
  }
  // conv + quadratic
  {
    Tensor w = rnd({4, 2, 3, 3}, 6, -0.5f, 0.5f);
    auto f = [&](const Tensor& p) {
      ad::Tape tape;
      ad::Value x = tape.leaf(p, true);
      ad::Value c = tape.conv2d(x, tape.leaf(w), 1);
      ad::Value s = tape.sum(tape.mul(c, c));
      tape.backward(s);
      return std::make_pair(tape.scalar_value(s), tape.grad(x));
    };
    report("sum(conv^2)", f, rnd({2, 8, 8}, 7, -1, 1));
  }
  // conv + cosine (the failing one)
  {
    Tensor w = rnd({4, 2, 3, 3}, 8, -0.5f, 0.5f);
    Tensor tgt = rnd({4, 6, 6}, 9, -1, 1);
    auto f = [&](const Tensor& p) {
      ad::Tape tape;
      ad::Value x = tape.leaf(p, true);
      ad::Value c = tape.conv2d(x, tape.leaf(w), 1);
      ad::Value s = tape.cosine_similarity(c, tape.leaf(tgt));
      tape.backward(s);
      return std::make_pair(tape.scalar_value(s), tape.grad(x));
    };
    report("cos(conv(x,w), t)", f, rnd({2, 8, 8}, 10, -1, 1));
  }
  // pool + cosine
  {
    Tensor tgt = rnd({2, 4, 4}, 11, -1, 1);
    auto f = [&](const Tensor& p) {
      ad::Tape tape;
      ad::Value x = tape.leaf(p, true);
      ad::Value c = tape.avgpool2d(x, 2);
      ad::Value s = tape.cosine_similarity(c, tape.leaf(tgt));
      tape.backward(s);
      return std::make_pair(tape.scalar_value(s), tape.grad(x));
    };
    report("cos(pool(x), t)", f, rnd({2, 8, 8}, 12, -1, 1));
  }
  return 0;
}
