// Scratch: how strong can the UAP get with more optimization passes?
#include <chrono>
#include <cstdio>

#include "btc/analysis.hpp"
#include "btc/dataset.hpp"
#include "btc/model.hpp"
#include "btc/train.hpp"
#include "btc/uap.hpp"
#include "btc/video.hpp"

using namespace btc;
using Clock = std::chrono::steady_clock;

static double secs(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

int main(int argc, char** argv) {
  const int epochs = argc > 1 ? std::atoi(argv[1]) : 40;
  std::filesystem::path root = "/tmp/btc-pipe";  // reuse corpora from the pipeline run
  DatasetManifest train_m = load_manifest(root / "train/manifest.txt");
  DatasetManifest eval16 = load_manifest(root / "eval16/manifest.txt");
  std::vector<Tensor> images = load_images(train_m);
  FeatureExtractorSpec attacker = build_feature_extractor(1, {3, 32, 32});

  TrainReport rep = train_classifier(train_m, 30, 7);
  printf("val acc %.3f\n", rep.val_accuracy);

  BtcConfig cfg;
  cfg.seed = 1;
  cfg.epochs = epochs;
  auto t0 = Clock::now();
  OptimizeResult btc = optimize_uap(images, attacker, cfg);
  auto t1 = Clock::now();
  printf("btc %d epochs (%.1fs): first %.3f last %.3f\n", epochs, secs(t0, t1), btc.epoch_mean_loss.front(),
         btc.epoch_mean_loss.back());

  BtcConfig bcfg = cfg;
  bcfg.temporal_enabled = false;
  OptimizeResult base = optimize_uap(images, attacker, bcfg);
  printf("base: first %.3f last %.3f\n", base.epoch_mean_loss.front(), base.epoch_mean_loss.back());

  // saturation: fraction of |delta| at >= 95% of budget
  auto saturation = [&](const UapState& st) {
    std::size_t sat = 0;
    double mean = 0.0;
    for (std::size_t i = 0; i < st.delta.numel(); ++i) {
      mean += std::abs(st.delta[i]);
      if (std::abs(st.delta[i]) >= 0.95f * cfg.epsilon) ++sat;
    }
    return std::make_pair(mean / st.delta.numel() / cfg.epsilon,
                          static_cast<double>(sat) / st.delta.numel());
  };
  auto [m1, s1] = saturation(btc.state);
  auto [m2, s2] = saturation(base.state);
  printf("btc delta: mean|d|/eps %.3f frac@95%% %.3f | base: %.3f %.3f\n", m1, s1, m2, s2);

  // pseudo-video neighbor cosine on one training image, attacker extractor l=2
  Tensor x = images[0];
  double adv_pair = 0.0, clean_adv = 0.0;
  for (int n = 0; n + 1 < 8; ++n) {
    Tensor a = (x + btc.state.delta.slice_frame(n)).clamp_(0, 1);
    Tensor b = (x + btc.state.delta.slice_frame(n + 1)).clamp_(0, 1);
    adv_pair += cosine_flat(extract_features(attacker, a, 2), extract_features(attacker, b, 2));
    clean_adv += cosine_flat(extract_features(attacker, x, 2), extract_features(attacker, a, 2));
  }
  printf("pseudo neighbor cos %.4f, clean-vs-adv cos %.4f (train image)\n", adv_pair / 7.0, clean_adv / 7.0);

  std::vector<VideoClip> clips16 = load_clips(eval16);
  UapState noise = make_noise_uap(cfg, {3, 32, 32});
  AttackReport r_btc = attack_success_rate(rep.model, clips16, btc.state, 0);
  AttackReport r_base = attack_success_rate(rep.model, clips16, base.state, 0);
  AttackReport r_noise = attack_success_rate(rep.model, clips16, noise, 0);
  printf("T=16: clean acc %.3f | ASR btc %.3f base %.3f noise %.3f\n", r_btc.clean_accuracy, r_btc.asr, r_base.asr,
         r_noise.asr);

  double c_acc = 0, b_acc = 0, t_acc = 0;
  int count = 0;
  for (const auto& clip : clips16) {
    AppliedPerturbation p_btc = repeat_uap(btc.state, clip.frames.dim(0));
    AppliedPerturbation p_base = repeat_uap(base.state, clip.frames.dim(0));
    c_acc += mean_neighbor_similarity(similarity_matrix(clip, attacker, 2));
    b_acc += mean_neighbor_similarity(similarity_matrix(clip, attacker, 2, &p_base));
    t_acc += mean_neighbor_similarity(similarity_matrix(clip, attacker, 2, &p_btc));
    if (++count >= 60) break;
  }
  printf("similarity over %d clips: clean %.4f base %.4f btc %.4f | gaps c-b %.4f b-b %.4f\n", count, c_acc / count,
         b_acc / count, t_acc / count, (c_acc - t_acc) / count, (b_acc - t_acc) / count);
  return 0;
}
