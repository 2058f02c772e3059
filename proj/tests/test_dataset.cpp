#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "btc/analysis.hpp"
#include "btc/dataset.hpp"
#include "btc/model.hpp"
#include "test_util.hpp"

using namespace btc;
using btc_test::TempDir;

namespace {

GenerationParams small_params() {
  GenerationParams gp;
  gp.classes = 3;
  gp.clips_per_class = 2;
  gp.frames = 8;
  gp.height = 16;
  gp.width = 16;
  return gp;
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("generation counts clips and images per the manifest", "[data]") {
  TempDir dir("data");
  DatasetManifest m = generate_dataset(small_params(), 42, dir.path);
  CHECK(m.clips().size() == 6);
  CHECK(m.images().size() == 6);
  CHECK(m.class_count() == 3);
  CHECK(std::filesystem::exists(dir.path / "manifest.txt"));
}

TEST_CASE("generated pixels stay in range and frames stay close", "[data]") {
  TempDir dir("data");
  DatasetManifest m = generate_dataset(small_params(), 7, dir.path);
  for (const auto& clip : load_clips(m)) {
    for (std::size_t i = 0; i < clip.frames.numel(); ++i) {
      REQUIRE(clip.frames[i] >= 0.0f);
      REQUIRE(clip.frames[i] <= 1.0f);
    }
    REQUIRE(clip.frames.dim(0) >= 2);
    REQUIRE(mean_abs_neighbor_diff(clip.frames) < 0.2f);
  }
}

TEST_CASE("generation is bit-deterministic in the seed", "[data]") {
  TempDir a("data"), b("data"), c("data");
  generate_dataset(small_params(), 5, a.path);
  generate_dataset(small_params(), 5, b.path);
  generate_dataset(small_params(), 6, c.path);
  CHECK(file_bytes(a.path / "manifest.txt") == file_bytes(b.path / "manifest.txt"));
  CHECK(file_bytes(a.path / "clips/c0_k0.btct") == file_bytes(b.path / "clips/c0_k0.btct"));
  CHECK(file_bytes(a.path / "images/c2_k1.btct") == file_bytes(b.path / "images/c2_k1.btct"));
  CHECK(file_bytes(a.path / "clips/c0_k0.btct") != file_bytes(c.path / "clips/c0_k0.btct"));
}

TEST_CASE("generated clips have the high neighbor-frame feature similarity premise", "[data]") {
  TempDir dir("data");
  GenerationParams gp = small_params();
  gp.clips_per_class = 3;
  DatasetManifest m = generate_dataset(gp, 11, dir.path);
  FeatureExtractorSpec spec = build_feature_extractor(1, {3, gp.height, gp.width});
  double acc = 0.0;
  int count = 0;
  for (const auto& clip : load_clips(m)) {
    acc += mean_neighbor_similarity(similarity_matrix(clip, spec, 2));
    ++count;
  }
  CHECK(acc / count > 0.8);
}

TEST_CASE("manifest loading validates structure line by line", "[data]") {
  TempDir dir("data");
  serialize_tensor(Tensor({2, 3, 4, 4}, 0.5f), dir.str("clip.btct"));

  auto write_manifest = [&](const std::string& text) {
    std::ofstream os(dir.str("manifest.txt"), std::ios::binary);
    os << text;
  };

  SECTION("valid manifest parses with params") {
    write_manifest("#btc-manifest v1\n#param seed 9\n#param classes 2\nclip.btct\t1\tclip\n");
    DatasetManifest m = load_manifest(dir.str("manifest.txt"));
    REQUIRE(m.entries.size() == 1);
    CHECK(m.seed == 9);
    CHECK(m.params.at("classes") == "2");
    CHECK(m.entries[0].label == 1);
    CHECK(m.entries[0].kind == "clip");
  }
  SECTION("missing header") {
    write_manifest("clip.btct\t1\tclip\n");
    CHECK_THROWS_WITH(load_manifest(dir.str("manifest.txt")), Catch::Matchers::ContainsSubstring("header"));
  }
  SECTION("empty dataset") {
    write_manifest("#btc-manifest v1\n");
    CHECK_THROWS_WITH(load_manifest(dir.str("manifest.txt")), Catch::Matchers::ContainsSubstring("empty dataset"));
  }
  SECTION("non-integer label carries the line number") {
    write_manifest("#btc-manifest v1\nclip.btct\tx\tclip\n");
    CHECK_THROWS_WITH(load_manifest(dir.str("manifest.txt")), Catch::Matchers::ContainsSubstring(":2:"));
  }
  SECTION("bad kind") {
    write_manifest("#btc-manifest v1\nclip.btct\t0\tvideo\n");
    CHECK_THROWS_WITH(load_manifest(dir.str("manifest.txt")), Catch::Matchers::ContainsSubstring("bad kind"));
  }
  SECTION("missing tab separators") {
    write_manifest("#btc-manifest v1\nclip.btct 0 clip\n");
    CHECK_THROWS_WITH(load_manifest(dir.str("manifest.txt")), Catch::Matchers::ContainsSubstring("TAB"));
  }
  SECTION("missing files are reported with their paths") {
    write_manifest("#btc-manifest v1\nghost.btct\t0\tclip\n");
    CHECK_THROWS_WITH(load_manifest(dir.str("manifest.txt")), Catch::Matchers::ContainsSubstring("ghost.btct"));
  }
}

TEST_CASE("generation rejects invalid parameters", "[data]") {
  TempDir dir("data");
  GenerationParams gp = small_params();
  gp.classes = 1;
  CHECK_THROWS_AS(generate_dataset(gp, 1, dir.path), std::invalid_argument);
  gp = small_params();
  gp.frames = 3;
  CHECK_THROWS_AS(generate_dataset(gp, 1, dir.path), std::invalid_argument);
}
