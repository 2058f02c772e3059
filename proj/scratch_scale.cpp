// Scratch: corpus pixel-scale sweep; watch accuracy, ASR margins, gaps.
#include <cstdio>

#include "btc/analysis.hpp"
#include "btc/dataset.hpp"
#include "btc/model.hpp"
#include "btc/train.hpp"
#include "btc/uap.hpp"
#include "btc/video.hpp"

using namespace btc;

int main(int argc, char** argv) {
  const float scale = argc > 1 ? std::atof(argv[1]) : 0.28f;
  const int epochs = argc > 2 ? std::atoi(argv[2]) : 40;
  GenerationParams gp;
  gp.pixel_scale = scale;
  std::filesystem::path root = "/tmp/btc-scale";
  std::filesystem::remove_all(root);
  DatasetManifest train_m = generate_dataset(gp, 42, root / "train");
  DatasetManifest eval16 = generate_dataset(gp, 43, root / "eval16");

  TrainReport rep = train_classifier(train_m, 30, 7);
  std::vector<Tensor> images = load_images(train_m);
  FeatureExtractorSpec attacker = build_feature_extractor(1, {3, 32, 32});

  BtcConfig cfg;
  cfg.epochs = epochs;
  cfg.seed = 1;
  OptimizeResult btc = optimize_uap(images, attacker, cfg);
  BtcConfig bcfg = cfg;
  bcfg.temporal_enabled = false;
  OptimizeResult base = optimize_uap(images, attacker, bcfg);
  UapState noise = make_noise_uap(cfg, {3, 32, 32});

  std::vector<VideoClip> clips16 = load_clips(eval16);
  AttackReport r_btc = attack_success_rate(rep.model, clips16, btc.state, 0);
  AttackReport r_base = attack_success_rate(rep.model, clips16, base.state, 0);
  AttackReport r_noise = attack_success_rate(rep.model, clips16, noise, 0);

  double c_acc = 0, b_acc = 0, t_acc = 0;
  int count = 0;
  for (const auto& clip : clips16) {
    AppliedPerturbation p_btc = repeat_uap(btc.state, clip.frames.dim(0));
    AppliedPerturbation p_base = repeat_uap(base.state, clip.frames.dim(0));
    c_acc += mean_neighbor_similarity(similarity_matrix(clip, attacker, 2));
    b_acc += mean_neighbor_similarity(similarity_matrix(clip, attacker, 2, &p_base));
    t_acc += mean_neighbor_similarity(similarity_matrix(clip, attacker, 2, &p_btc));
    if (++count >= 80) break;
  }
  printf("scale %.2f: val %.3f | evalacc %.3f | ASR btc %.3f base %.3f noise %.3f | btc-noise %+.3f btc-base %+.3f\n",
         scale, rep.val_accuracy, r_btc.clean_accuracy, r_btc.asr, r_base.asr, r_noise.asr, r_btc.asr - r_noise.asr,
         r_btc.asr - r_base.asr);
  printf("          sims clean %.4f base %.4f btc %.4f | gaps c-b %.4f (>=0.10) b-b %.4f (>=0.05) | loss %.3f/%.3f\n",
         c_acc / count, b_acc / count, t_acc / count, (c_acc - t_acc) / count, (b_acc - t_acc) / count,
         btc.epoch_mean_loss.back(), base.epoch_mean_loss.back());
  return 0;
}
