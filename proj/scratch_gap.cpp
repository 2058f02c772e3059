// Scratch: baseline-vs-btc neighbor-similarity gap: epochs and layer effects.
#include <cstdio>
#include "btc/analysis.hpp"
#include "btc/dataset.hpp"
#include "btc/model.hpp"
#include "btc/uap.hpp"
#include "btc/video.hpp"
using namespace btc;

int main(int argc, char** argv) {
  const int epochs = std::atoi(argv[1]);
  GenerationParams gp;  // default scale 0.35
  std::filesystem::path root = "/tmp/btc-gap";
  std::filesystem::remove_all(root);
  DatasetManifest train_m = generate_dataset(gp, 42, root / "train");
  DatasetManifest eval16 = generate_dataset(gp, 43, root / "eval16");
  std::vector<Tensor> images = load_images(train_m);
  FeatureExtractorSpec attacker = build_feature_extractor(1, {3, 32, 32});

  BtcConfig cfg; cfg.epochs = epochs; cfg.seed = 1;
  OptimizeResult btc = optimize_uap(images, attacker, cfg);
  BtcConfig bcfg = cfg; bcfg.temporal_enabled = false;
  OptimizeResult base = optimize_uap(images, attacker, bcfg);
  printf("epochs %d: btc loss %.4f (adv~%.4f) base loss %.4f\n", epochs, btc.epoch_mean_loss.back(),
         btc.epoch_mean_loss.back() - 4.0, base.epoch_mean_loss.back());

  std::vector<VideoClip> clips = load_clips(eval16);
  for (int layer : {1, 2}) {
    double c = 0, b = 0, t = 0;
    int n = 0;
    for (const auto& clip : clips) {
      AppliedPerturbation pb = repeat_uap(base.state, clip.frames.dim(0));
      AppliedPerturbation pt = repeat_uap(btc.state, clip.frames.dim(0));
      c += mean_neighbor_similarity(similarity_matrix(clip, attacker, layer));
      b += mean_neighbor_similarity(similarity_matrix(clip, attacker, layer, &pb));
      t += mean_neighbor_similarity(similarity_matrix(clip, attacker, layer, &pt));
      if (++n >= 60) break;
    }
    printf("  l=%d: clean %.4f base %.4f btc %.4f | c-t %.4f b-t %.4f\n", layer, c / n, b / n, t / n, (c - t) / n,
           (b - t) / n);
  }
  return 0;
}
