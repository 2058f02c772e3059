#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "btc/model.hpp"
#include "btc/rng.hpp"
#include "test_util.hpp"

using namespace btc;
using btc_test::TempDir;

namespace {

FeatureExtractorSpec small_extractor(std::uint64_t seed) {
  return build_feature_extractor(seed, {3, 8, 8}, {{4, 3, 1, 1, 2}, {8, 3, 1, 1, 2}});
}

Tensor random_image(const Shape& shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(shape);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.next_float();
  return t;
}

}  // namespace

TEST_CASE("extractor weights are a pure function of the seed", "[models]") {
  FeatureExtractorSpec a = build_feature_extractor(7, {3, 32, 32});
  FeatureExtractorSpec b = build_feature_extractor(7, {3, 32, 32});
  REQUIRE(a.weights.size() == b.weights.size());
  for (std::size_t i = 0; i < a.weights.size(); ++i) REQUIRE(a.weights[i] == b.weights[i]);

  FeatureExtractorSpec c = build_feature_extractor(8, {3, 32, 32});
  bool any_differ = false;
  for (std::size_t i = 0; i < a.weights.size(); ++i)
    if (!(a.weights[i] == c.weights[i])) any_differ = true;
  CHECK(any_differ);
}

TEST_CASE("default architecture maps 3x32x32 to 32x4x4", "[models]") {
  FeatureExtractorSpec spec = build_feature_extractor(1, {3, 32, 32});
  CHECK(feature_shape(spec, 3) == Shape{32, 4, 4});
  CHECK(feature_shape(spec, 2) == Shape{16, 8, 8});
  CHECK(feature_shape(spec, 1) == Shape{8, 16, 16});
  Tensor x = random_image({3, 32, 32}, 2);
  CHECK(extract_features(spec, x, 3).shape() == Shape{32, 4, 4});
}

TEST_CASE("zero input yields zero features through bias-free blocks", "[models]") {
  FeatureExtractorSpec spec = build_feature_extractor(3, {3, 32, 32});
  Tensor feat = extract_features(spec, Tensor({3, 32, 32}), spec.block_count());
  for (std::size_t i = 0; i < feat.numel(); ++i) REQUIRE(feat[i] == 0.0f);
}

TEST_CASE("feature extraction is deterministic and layer-checked", "[models]") {
  FeatureExtractorSpec spec = small_extractor(5);
  Tensor x = random_image({3, 8, 8}, 6);
  CHECK(extract_features(spec, x, 2) == extract_features(spec, x, 2));
  CHECK_THROWS_AS(extract_features(spec, x, 0), std::invalid_argument);
  CHECK_THROWS_AS(extract_features(spec, x, 3), std::invalid_argument);
  CHECK_THROWS_AS(extract_features(spec, Tensor({3, 9, 9}), 1), std::invalid_argument);
}

TEST_CASE("feature-shift similarity gradient matches finite differences", "[models]") {
  FeatureExtractorSpec spec = small_extractor(9);
  const Tensor x = random_image({3, 8, 8}, 10);
  auto loss = [&](const Tensor& d) {
    ad::Tape tape;
    ad::Value xv = tape.leaf(x);
    ad::Value dv = tape.leaf(d, true);
    ad::Value clean = forward_features(tape, spec, xv, 2);
    ad::Value adv = forward_features(tape, spec, tape.add(xv, dv), 2);
    ad::Value sim = tape.cosine_similarity(clean, adv);
    tape.backward(sim);
    return std::make_pair(tape.scalar_value(sim), tape.grad(dv));
  };
  Rng rng(11);
  Tensor d({3, 8, 8});
  for (std::size_t i = 0; i < d.numel(); ++i) d[i] = rng.uniform(-0.05f, 0.05f);
  CHECK(ad::finite_difference_check(loss, d) < 1e-3);
}

TEST_CASE("zero head weights give uniform probabilities and label 0", "[models]") {
  VideoClassifierModel model;
  model.extractor = small_extractor(12);
  model.class_count = 4;
  model.head_weights = Tensor({4, static_cast<int>(2 * model.feature_dim())});
  Tensor frames({3, 3, 8, 8});
  for (int t = 0; t < 3; ++t) frames.assign_frame(t, random_image({3, 8, 8}, 13 + t));
  Classification c = classify_video(model, frames);
  CHECK(c.label == 0);
  double sum = 0.0;
  for (float p : c.probabilities) {
    CHECK_THAT(p, Catch::Matchers::WithinAbs(0.25, 1e-6));
    CHECK(p >= 0.0f);
    CHECK(p <= 1.0f);
    sum += p;
  }
  CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-5));
}

TEST_CASE("static clips have an exactly zero temporal pooled half", "[models]") {
  FeatureExtractorSpec spec = small_extractor(20);
  Tensor frame = random_image({3, 8, 8}, 21);
  Tensor frames({5, 3, 8, 8});
  for (int t = 0; t < 5; ++t) frames.assign_frame(t, frame);
  std::vector<float> pooled = pooled_clip_features(spec, frames);
  const std::size_t dim = pooled.size() / 2;
  for (std::size_t i = dim; i < pooled.size(); ++i) REQUIRE(pooled[i] == 0.0f);
}

TEST_CASE("softmax output is a probability vector on random logits", "[models]") {
  Rng rng(30);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<float> logits(8);
    for (float& l : logits) l = rng.uniform(-20.0f, 20.0f);
    std::vector<float> p = softmax(logits);
    double sum = 0.0;
    for (float v : p) {
      REQUIRE(v >= 0.0f);
      REQUIRE(v <= 1.0f);
      sum += v;
    }
    REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-5));
  }
}

TEST_CASE("model save/load round-trips every tensor bit-exactly", "[models]") {
  TempDir dir("model");
  VideoClassifierModel model;
  model.extractor = small_extractor(40);
  model.class_count = 3;
  model.head_weights = random_image({3, static_cast<int>(2 * model.feature_dim())}, 41);
  save_model(model, dir.str("m.btca"));
  VideoClassifierModel loaded = load_model(dir.str("m.btca"));
  CHECK(loaded.class_count == 3);
  CHECK(loaded.extractor.seed == model.extractor.seed);
  CHECK(loaded.extractor.input_shape == model.extractor.input_shape);
  REQUIRE(loaded.extractor.weights.size() == model.extractor.weights.size());
  for (std::size_t i = 0; i < model.extractor.weights.size(); ++i)
    REQUIRE(loaded.extractor.weights[i] == model.extractor.weights[i]);
  CHECK(loaded.head_weights == model.head_weights);

  // behavioral equivalence after reload
  Tensor frames({4, 3, 8, 8});
  for (int t = 0; t < 4; ++t) frames.assign_frame(t, random_image({3, 8, 8}, 50 + t));
  CHECK(classify_video(model, frames).label == classify_video(loaded, frames).label);
}

TEST_CASE("corrupt model files fail with named errors, not crashes", "[models]") {
  TempDir dir("model");
  VideoClassifierModel model;
  model.extractor = small_extractor(60);
  model.class_count = 2;
  model.head_weights = Tensor({2, static_cast<int>(2 * model.feature_dim())});
  save_model(model, dir.str("m.btca"));

  std::ifstream in(dir.str("m.btca"), std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();

  SECTION("truncated file") {
    std::ofstream out(dir.str("trunc.btca"), std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    CHECK_THROWS_AS(load_model(dir.str("trunc.btca")), SerializationError);
  }
  SECTION("bad magic") {
    bytes[0] = 'Z';
    std::ofstream out(dir.str("magic.btca"), std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    CHECK_THROWS_WITH(load_model(dir.str("magic.btca")), Catch::Matchers::ContainsSubstring("bad magic"));
  }
  SECTION("unsupported version in an inner record") {
    // first entry: u16 name length + name, then BTCT record; version starts 4 bytes in
    const std::size_t name_len = 2 + std::string("class_count").size();
    bytes[4 + name_len + 4] = 9;
    std::ofstream out(dir.str("ver.btca"), std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    CHECK_THROWS_WITH(load_model(dir.str("ver.btca")), Catch::Matchers::ContainsSubstring("unsupported version"));
  }
}
