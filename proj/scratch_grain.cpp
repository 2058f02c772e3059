#include <cstdio>
#include "btc/analysis.hpp"
#include "btc/dataset.hpp"
#include "btc/model.hpp"
#include "btc/train.hpp"
#include "btc/uap.hpp"
#include "btc/video.hpp"
using namespace btc;
int main(int argc, char** argv) {
  GenerationParams gp;
  gp.pixel_scale = std::atof(argv[1]);
  gp.background_grain = std::atof(argv[2]);
  const int epochs = argc > 3 ? std::atoi(argv[3]) : 40;
  std::filesystem::path root = "/tmp/btc-grain";
  std::filesystem::remove_all(root);
  DatasetManifest train_m = generate_dataset(gp, 42, root / "train");
  DatasetManifest eval16 = generate_dataset(gp, 43, root / "eval16");
  TrainReport rep = train_classifier(train_m, 30, 7);
  std::vector<Tensor> images = load_images(train_m);
  FeatureExtractorSpec attacker = build_feature_extractor(1, {3, 32, 32});
  BtcConfig cfg; cfg.epochs = epochs; cfg.seed = 1;
  OptimizeResult btc = optimize_uap(images, attacker, cfg);
  BtcConfig bcfg = cfg; bcfg.temporal_enabled = false;
  OptimizeResult base = optimize_uap(images, attacker, bcfg);
  UapState noise = make_noise_uap(cfg, {3, 32, 32});
  std::vector<VideoClip> clips = load_clips(eval16);
  AttackReport r_btc = attack_success_rate(rep.model, clips, btc.state, 0);
  AttackReport r_base = attack_success_rate(rep.model, clips, base.state, 0);
  AttackReport r_noise = attack_success_rate(rep.model, clips, noise, 0);
  double c = 0, b = 0, t = 0; int n = 0;
  for (const auto& clip : clips) {
    AppliedPerturbation pb = repeat_uap(base.state, clip.frames.dim(0));
    AppliedPerturbation pt = repeat_uap(btc.state, clip.frames.dim(0));
    c += mean_neighbor_similarity(similarity_matrix(clip, attacker, 2));
    b += mean_neighbor_similarity(similarity_matrix(clip, attacker, 2, &pb));
    t += mean_neighbor_similarity(similarity_matrix(clip, attacker, 2, &pt));
    if (++n >= 80) break;
  }
  printf("scale %.2f grain %.2f ep %d: val %.2f acc %.3f | ASR b %.3f bs %.3f n %.3f (b-n %+.3f) | "
         "sims %.4f/%.4f/%.4f c-t %.4f b-t %.4f\n",
         gp.pixel_scale, gp.background_grain, epochs, rep.val_accuracy, r_btc.clean_accuracy, r_btc.asr,
         r_base.asr, r_noise.asr, r_btc.asr - r_noise.asr, c / n, b / n, t / n, (c - t) / n, (b - t) / n);
  return 0;
}
