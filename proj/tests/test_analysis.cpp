#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include <json.hpp>

#include "btc/analysis.hpp"
#include "btc/dataset.hpp"
#include "btc/model.hpp"
#include "btc/rng.hpp"
#include "test_util.hpp"

using namespace btc;
using btc_test::TempDir;

namespace {

FeatureExtractorSpec tiny_extractor(std::uint64_t seed = 3) {
  return build_feature_extractor(seed, {3, 8, 8}, {{4, 3, 1, 1, 2}, {8, 3, 1, 1, 2}});
}

VideoClip random_clip(int frames, std::uint64_t seed) {
  VideoClip clip;
  clip.frames = Tensor({frames, 3, 8, 8});
  Rng rng(seed);
  for (std::size_t i = 0; i < clip.frames.numel(); ++i) clip.frames[i] = rng.next_float();
  clip.label = static_cast<int>(seed % 2);
  clip.clip_id = "clip" + std::to_string(seed);
  return clip;
}

VideoClassifierModel random_model(std::uint64_t seed, int classes = 2) {
  VideoClassifierModel model;
  model.extractor = tiny_extractor(seed);
  model.class_count = classes;
  model.head_weights = Tensor({classes, static_cast<int>(2 * model.feature_dim())});
  Rng rng(seed + 100);
  for (std::size_t i = 0; i < model.head_weights.numel(); ++i) model.head_weights[i] = rng.uniform(-1.0f, 1.0f);
  return model;
}

}  // namespace

TEST_CASE("similarity matrices have unit diagonal and symmetry", "[analysis]") {
  FeatureExtractorSpec spec = tiny_extractor();
  VideoClip clip = random_clip(6, 4);
  SimilarityMatrix m = similarity_matrix(clip, spec, 2);
  CHECK(m.subject == "clean");
  for (int i = 0; i < 6; ++i) {
    CHECK_THAT(m.at(i, i), Catch::Matchers::WithinAbs(1.0, 1e-5));
    for (int j = 0; j < 6; ++j) REQUIRE_THAT(m.at(i, j), Catch::Matchers::WithinAbs(m.at(j, i), 1e-6));
  }
}

TEST_CASE("a static clip is maximally self-similar", "[analysis]") {
  FeatureExtractorSpec spec = tiny_extractor();
  VideoClip clip;
  clip.frames = Tensor({4, 3, 8, 8});
  Tensor frame = random_clip(1, 5).frames.slice_frame(0);
  for (int t = 0; t < 4; ++t) clip.frames.assign_frame(t, frame);
  SimilarityMatrix m = similarity_matrix(clip, spec, 2);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) REQUIRE_THAT(m.at(i, j), Catch::Matchers::WithinAbs(1.0, 1e-6));
  CHECK_THAT(mean_neighbor_similarity(m), Catch::Matchers::WithinAbs(1.0, 1e-6));
}

TEST_CASE("mean similarity matrix averages elementwise and checks T", "[analysis]") {
  FeatureExtractorSpec spec = tiny_extractor();
  SimilarityMatrix a = similarity_matrix(random_clip(4, 6), spec, 2);
  SimilarityMatrix b = similarity_matrix(random_clip(4, 7), spec, 2);
  SimilarityMatrix mean = mean_similarity_matrix({a, b});
  CHECK_THAT(mean.at(0, 1), Catch::Matchers::WithinAbs((a.at(0, 1) + b.at(0, 1)) / 2.0, 1e-6));
  SimilarityMatrix c = similarity_matrix(random_clip(5, 8), spec, 2);
  CHECK_THROWS_AS(mean_similarity_matrix({a, c}), std::invalid_argument);
}

TEST_CASE("zero UAP makes ASR the exact complement of clean accuracy", "[analysis]") {
  VideoClassifierModel model = random_model(10);
  std::vector<VideoClip> clips;
  for (int i = 0; i < 8; ++i) clips.push_back(random_clip(4, 20 + i));
  BtcConfig cfg;
  cfg.frames = 4;
  UapState zero = init_uap(cfg, {3, 8, 8});
  zero.delta.fill(0.0f);
  AttackReport rep = attack_success_rate(model, clips, zero, 0);
  CHECK(rep.asr == 1.0 - rep.clean_accuracy);
  CHECK(rep.clips_evaluated == 8);
}

TEST_CASE("asr is the independent count of misclassified adversarial clips", "[analysis]") {
  VideoClassifierModel model = random_model(11);
  std::vector<VideoClip> clips;
  for (int i = 0; i < 4; ++i) clips.push_back(random_clip(4, 40 + i));
  UapState uap = init_uap(BtcConfig{.frames = 4}, {3, 8, 8});
  Rng rng(12);
  for (std::size_t i = 0; i < uap.delta.numel(); ++i) uap.delta[i] = rng.uniform(-0.06f, 0.06f);

  AttackReport rep = attack_success_rate(model, clips, uap, 0);
  AppliedPerturbation pert = repeat_uap(uap, 4);
  int wrong = 0;
  for (const auto& clip : clips)
    if (classify_video(model, apply_uap(clip, pert).frames).label != clip.label) ++wrong;
  CHECK(rep.asr == static_cast<double>(wrong) / 4.0);
  REQUIRE(rep.per_class_asr.size() == 2);
}

TEST_CASE("single-shift sweep reduces to a plain attack report", "[analysis]") {
  VideoClassifierModel model = random_model(13);
  std::vector<VideoClip> clips;
  for (int i = 0; i < 5; ++i) clips.push_back(random_clip(4, 60 + i));
  UapState uap = init_uap(BtcConfig{.frames = 4}, {3, 8, 8});
  Rng rng(14);
  for (std::size_t i = 0; i < uap.delta.numel(); ++i) uap.delta[i] = rng.uniform(-0.06f, 0.06f);

  ShiftSweepResult sweep = shift_invariance_sweep(model, clips, uap, {0});
  AttackReport direct = attack_success_rate(model, clips, uap, 0);
  REQUIRE(sweep.reports.size() == 1);
  CHECK(sweep.reports[0].asr == direct.asr);
  CHECK(sweep.spread == 0.0);

  // zero UAP: every shift yields the identical report
  uap.delta.fill(0.0f);
  ShiftSweepResult zero_sweep = shift_invariance_sweep(model, clips, uap, {0, 1, 2, 3});
  for (const auto& r : zero_sweep.reports) REQUIRE(r.asr == zero_sweep.reports[0].asr);
  CHECK(zero_sweep.spread == 0.0);
}

TEST_CASE("attack report JSON re-parses exactly", "[analysis]") {
  TempDir dir("an");
  AttackReport rep;
  rep.asr = 0.625;
  rep.clean_accuracy = 0.9375;
  rep.clips_evaluated = 16;
  rep.shift = 3;
  rep.per_class_asr = {0.5, 0.75};
  rep.model_id = "model.btca";
  rep.uap_id = "uap.btca";
  rep.config["videos"] = "eval/manifest.txt";
  write_report_json(rep, dir.path / "r.json");
  std::ifstream in(dir.path / "r.json");
  nlohmann::json parsed = nlohmann::json::parse(in);
  CHECK(parsed["asr"].get<double>() == 0.625);
  CHECK(parsed["clean_accuracy"].get<double>() == 0.9375);
  CHECK(parsed["shift"].get<int>() == 3);
  CHECK(parsed["per_class_asr"].size() == 2);
  CHECK(parsed["config"]["videos"] == "eval/manifest.txt");
}

TEST_CASE("pgm heatmaps use the documented byte mapping", "[analysis]") {
  TempDir dir("an");
  SimilarityMatrix m;
  m.layer = 2;
  m.subject = "clean";
  m.values = Tensor({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
  write_matrix_pgm(m, dir.path / "m.pgm");
  std::ifstream in(dir.path / "m.pgm", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  REQUIRE(bytes.substr(0, 3) == "P5\n");
  const std::string expected_header = "P5\n2 2\n255\n";
  REQUIRE(bytes.size() == expected_header.size() + 4);
  CHECK(static_cast<unsigned char>(bytes[expected_header.size() + 0]) == 255);
  CHECK(static_cast<unsigned char>(bytes[expected_header.size() + 1]) == 128);  // round(255 * 0.5)
  CHECK(static_cast<unsigned char>(bytes[expected_header.size() + 2]) == 128);
  CHECK(static_cast<unsigned char>(bytes[expected_header.size() + 3]) == 255);
}

TEST_CASE("matrix CSV is row-major with six decimals", "[analysis]") {
  SimilarityMatrix m;
  m.values = Tensor({3, 3}, {1, 0.5f, 0, 0.5f, 1, -0.25f, 0, -0.25f, 1});
  std::string csv = matrix_to_csv(m);
  std::istringstream is(csv);
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) {
    ++lines;
    CHECK(std::count(line.begin(), line.end(), ',') == 2);
  }
  CHECK(lines == 3);
  CHECK(csv.find("1.000000,0.500000,0.000000") == 0);
  CHECK(csv.find("-0.250000") != std::string::npos);
}

TEST_CASE("ablation rows match direct runs and emit CSV", "[analysis]") {
  TempDir dir("an");
  FeatureExtractorSpec spec = tiny_extractor(21);
  VideoClassifierModel model = random_model(22);
  std::vector<VideoClip> clips;
  for (int i = 0; i < 4; ++i) clips.push_back(random_clip(4, 80 + i));
  std::vector<Tensor> images;
  for (int i = 0; i < 3; ++i) images.push_back(random_clip(1, 90 + i).frames.slice_frame(0));

  BtcConfig base;
  base.noise_count = 1;
  base.offsets = {-1, 1};
  base.layer = 2;
  base.frames = 2;
  base.epochs = 1;
  base.seed = 5;
  base.offsets = clamp_offsets(base.offsets, base.frames);

  SECTION("one-cell grid equals a direct run") {
    std::vector<AblationRow> rows = ablation_run(SweepKind::K, {1}, base, images, spec, model, clips);
    REQUIRE(rows.size() == 1);
    OptimizeResult direct = optimize_uap(images, spec, base);
    AttackReport rep = attack_success_rate(model, clips, direct.state, 0);
    CHECK(rows[0].asr == rep.asr);
    CHECK(rows[0].final_mean_loss == direct.epoch_mean_loss.back());
  }
  SECTION("temporal sweep produces the method and the baseline rows") {
    std::vector<AblationRow> rows = ablation_run(SweepKind::Temporal, {1, 0}, base, images, spec, model, clips);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].temporal);
    CHECK_FALSE(rows[1].temporal);
    write_ablation_csv(rows, dir.path / "t.csv");
    std::ifstream in(dir.path / "t.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "sweep,setting,k,j,n,shift,temporal,final_mean_loss,asr,clean_accuracy");
    int data_lines = 0;
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) ++data_lines;
    CHECK(data_lines == 2);
  }
  SECTION("sweeps are deterministic across runs") {
    std::vector<AblationRow> a = ablation_run(SweepKind::N, {2, 4}, base, images, spec, model, clips);
    std::vector<AblationRow> b = ablation_run(SweepKind::N, {2, 4}, base, images, spec, model, clips);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      REQUIRE(a[i].asr == b[i].asr);
      REQUIRE(a[i].final_mean_loss == b[i].final_mean_loss);
    }
  }
  SECTION("empty grid is rejected") {
    CHECK_THROWS_AS(ablation_run(SweepKind::K, {}, base, images, spec, model, clips), std::invalid_argument);
  }
}
