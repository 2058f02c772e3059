// Scratch: probe FD error distributions across seeds for the gradcheck fixtures.
#include <cstdio>

#include "btc/autodiff.hpp"
#include "btc/model.hpp"
#include "btc/rng.hpp"
#include "btc/uap.hpp"

using namespace btc;

static Tensor rnd(const Shape& s, std::uint64_t seed, float lo, float hi) {
  Rng r(seed);
  Tensor t(s);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = r.uniform(lo, hi);
  return t;
}

int main() {
  // 1. smooth conv-only case
  printf("== conv-only (smooth) ==\n");
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    Tensor input = rnd({2, 8, 8}, seed * 3 + 1, -1.0f, 1.0f);
    Tensor kernels = rnd({4, 2, 3, 3}, seed * 3 + 2, -0.5f, 0.5f);
    Tensor target = rnd({4, 6, 6}, seed * 3 + 3, -1.0f, 1.0f);
    auto loss = [&](const Tensor& p) {
      ad::Tape t;
      ad::Value x = t.leaf(p, true);
      ad::Value s = t.cosine_similarity(t.conv2d(x, t.leaf(kernels), 1), t.leaf(target));
      t.backward(s);
      return std::make_pair(t.scalar_value(s), t.grad(x));
    };
    printf("seed %llu: %.3e\n", (unsigned long long)seed, ad::finite_difference_check(loss, input));
  }

  // 2. composite with relu
  printf("== composite conv-relu-pool-cosine ==\n");
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    Tensor kernels = rnd({3, 2, 3, 3}, seed * 7 + 1, -0.4f, 0.4f);
    Tensor target = rnd({3, 3, 3}, seed * 7 + 2, -1.0f, 1.0f);
    Tensor point = rnd({2, 6, 6}, seed * 7 + 3, -1.0f, 1.0f);
    auto loss = [&](const Tensor& p) {
      ad::Tape t;
      ad::Value x = t.leaf(p, true);
      ad::Value f = t.avgpool2d(t.relu(t.conv2d(t.zero_pad2d(x, 1), t.leaf(kernels), 1)), 2);
      ad::Value s = t.cosine_similarity(f, t.leaf(target));
      t.backward(s);
      return std::make_pair(t.scalar_value(s), t.grad(x));
    };
    printf("seed %llu: %.3e\n", (unsigned long long)seed, ad::finite_difference_check(loss, point));
  }

  // 3. L_BTC on the acceptance-criterion fixture: 2-block, 3x8x8, N=4, K=2, J={-1,1}
  printf("== L_BTC acceptance fixture ==\n");
  for (std::uint64_t seed = 1; seed <= 16; ++seed) {
    FeatureExtractorSpec spec =
        build_feature_extractor(seed * 11 + 1, {3, 8, 8}, {{4, 3, 1, 1, 2}, {8, 3, 1, 1, 2}});
    BtcConfig cfg;
    cfg.noise_count = 2;
    cfg.offsets = {-1, 1};
    cfg.layer = 2;
    cfg.frames = 4;
    cfg.seed = seed;
    Tensor image = rnd({3, 8, 8}, seed * 11 + 2, 0.0f, 1.0f);
    Rng noise_rng(seed * 11 + 3);
    std::vector<Tensor> noises = sample_noise(noise_rng, cfg.epsilon, {3, 8, 8}, cfg.noise_count);
    Tensor point(Shape{4, 3, 8, 8});
    Rng drng(seed * 11 + 4);
    for (std::size_t i = 0; i < point.numel(); ++i) point[i] = drng.uniform(-cfg.epsilon, cfg.epsilon);
    auto lossf = [&](const Tensor& d) {
      UapState probe = init_uap(cfg, {3, 8, 8});
      probe.delta = d;
      LossResult r = btc_loss(image, 2, probe, spec, cfg, noises, true);
      return std::make_pair(r.total, r.grad);
    };
    double a = ad::finite_difference_check(lossf, point);
    auto lossadv = [&](const Tensor& d) {
      UapState probe = init_uap(cfg, {3, 8, 8});
      probe.delta = d;
      LossResult r = adversarial_loss(image, 2, probe, spec, cfg, noises, true);
      return std::make_pair(r.total, r.grad);
    };
    double b = ad::finite_difference_check(lossadv, point);
    auto losstmp = [&](const Tensor& d) {
      UapState probe = init_uap(cfg, {3, 8, 8});
      probe.delta = d;
      LossResult r = temporal_similarity_loss(image, 2, probe, spec, cfg, true);
      return std::make_pair(r.total, r.grad);
    };
    double c = ad::finite_difference_check(losstmp, point);
    printf("seed %llu: btc %.3e adv %.3e temp %.3e\n", (unsigned long long)seed, a, b, c);
  }

  // 4. model feature-shift fixture
  printf("== feature shift similarity ==\n");
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    FeatureExtractorSpec spec =
        build_feature_extractor(seed * 13 + 1, {3, 8, 8}, {{4, 3, 1, 1, 2}, {8, 3, 1, 1, 2}});
    Tensor x = rnd({3, 8, 8}, seed * 13 + 2, 0.0f, 1.0f);
    Tensor d = rnd({3, 8, 8}, seed * 13 + 3, -0.05f, 0.05f);
    auto loss = [&](const Tensor& dd) {
      ad::Tape tape;
      ad::Value xv = tape.leaf(x);
      ad::Value dv = tape.leaf(dd, true);
      ad::Value clean = forward_features(tape, spec, xv, 2);
      ad::Value adv = forward_features(tape, spec, tape.add(xv, dv), 2);
      ad::Value sim = tape.cosine_similarity(clean, adv);
      tape.backward(sim);
      return std::make_pair(tape.scalar_value(sim), tape.grad(dv));
    };
    printf("seed %llu: %.3e\n", (unsigned long long)seed, ad::finite_difference_check(loss, d));
  }
  return 0;
}
