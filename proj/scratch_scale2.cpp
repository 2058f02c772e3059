// Scratch: scale + lr sweep with freq-x-speed classes and abs-diff pooling.
#include <cstdio>
#include "btc/analysis.hpp"
#include "btc/dataset.hpp"
#include "btc/model.hpp"
#include "btc/train.hpp"
#include "btc/uap.hpp"
#include "btc/video.hpp"
using namespace btc;

int main(int argc, char** argv) {
  const float scale = std::atof(argv[1]);
  const float lr = std::atof(argv[2]);
  const int epochs = argc > 3 ? std::atoi(argv[3]) : 40;
  GenerationParams gp;
  gp.pixel_scale = scale;
  std::filesystem::path root = "/tmp/btc-scale2";
  std::filesystem::remove_all(root);
  DatasetManifest train_m = generate_dataset(gp, 42, root / "train");
  DatasetManifest eval16 = generate_dataset(gp, 43, root / "eval16");
  GenerationParams gp32 = gp; gp32.frames = 32;
  GenerationParams gp64 = gp; gp64.frames = 64;
  DatasetManifest eval32 = generate_dataset(gp32, 43, root / "eval32");
  DatasetManifest eval64 = generate_dataset(gp64, 43, root / "eval64");

  TrainReport rep = train_classifier(train_m, 30, 7, lr);
  std::vector<Tensor> images = load_images(train_m);
  FeatureExtractorSpec attacker = build_feature_extractor(1, {3, 32, 32});

  BtcConfig cfg; cfg.epochs = epochs; cfg.seed = 1;
  OptimizeResult btc = optimize_uap(images, attacker, cfg);
  BtcConfig bcfg = cfg; bcfg.temporal_enabled = false;
  OptimizeResult base = optimize_uap(images, attacker, bcfg);
  UapState noise = make_noise_uap(cfg, {3, 32, 32});

  std::vector<VideoClip> clips16 = load_clips(eval16);
  AttackReport r_btc = attack_success_rate(rep.model, clips16, btc.state, 0);
  AttackReport r_base = attack_success_rate(rep.model, clips16, base.state, 0);
  AttackReport r_noise = attack_success_rate(rep.model, clips16, noise, 0);

  std::vector<VideoClip> clips32 = load_clips(eval32);
  std::vector<VideoClip> clips64 = load_clips(eval64);
  AttackReport r32 = attack_success_rate(rep.model, clips32, btc.state, 0);
  AttackReport r64 = attack_success_rate(rep.model, clips64, btc.state, 0);

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
  printf("scale %.2f lr %.2f: val %.3f evalacc %.3f | ASR btc %.3f base %.3f noise %.3f | b-n %+.3f b-b %+.3f\n",
         scale, lr, rep.val_accuracy, r_btc.clean_accuracy, r_btc.asr, r_base.asr, r_noise.asr,
         r_btc.asr - r_noise.asr, r_btc.asr - r_base.asr);
  printf("   sims c %.4f b %.4f t %.4f | gaps c-t %.4f b-t %.4f | T32 %.3f(%.3f) T64 %.3f(%.3f) d %.3f | sh0..7",
         c_acc / count, b_acc / count, t_acc / count, (c_acc - t_acc) / count, (b_acc - t_acc) / count, r32.asr,
         r32.clean_accuracy, r64.asr, r64.clean_accuracy, std::abs(r32.asr - r64.asr));
  ShiftSweepResult sweep = shift_invariance_sweep(rep.model, clips16, btc.state, {0, 1, 2, 3, 4, 5, 6, 7});
  printf(" spread %.3f\n", sweep.spread);
  return 0;
}
