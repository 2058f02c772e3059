// Scratch: full-pipeline dry run at acceptance scale, with timings.
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

int main() {
  auto t0 = Clock::now();
  GenerationParams gp;  // 8 classes x 20 clips, T=16, 32x32
  std::filesystem::path root = "/tmp/btc-pipe";
  std::filesystem::remove_all(root);
  DatasetManifest train_m = generate_dataset(gp, 42, root / "train");
  DatasetManifest eval16 = generate_dataset(gp, 43, root / "eval16");
  GenerationParams gp32 = gp;
  gp32.frames = 32;
  DatasetManifest eval32 = generate_dataset(gp32, 43, root / "eval32");
  GenerationParams gp64 = gp;
  gp64.frames = 64;
  DatasetManifest eval64 = generate_dataset(gp64, 43, root / "eval64");
  auto t1 = Clock::now();
  printf("[%6.1fs] corpora generated\n", secs(t0, t1));

  TrainReport rep = train_classifier(train_m, 30, 7);
  auto t2 = Clock::now();
  printf("[%6.1fs] classifier: train acc %.3f val acc %.3f (%d/%d clips)\n", secs(t1, t2), rep.train_accuracy,
         rep.val_accuracy, rep.train_count, rep.val_count);

  std::vector<Tensor> images = load_images(train_m);
  FeatureExtractorSpec attacker = build_feature_extractor(1, {3, 32, 32});

  BtcConfig cfg;  // paper defaults
  cfg.epochs = 40;
  cfg.seed = 1;
  OptimizeResult btc = optimize_uap(images, attacker, cfg);
  auto t3 = Clock::now();
  printf("[%6.1fs] BTC-UAP optimized, %zu steps, losses:", secs(t2, t3), btc.steps);
  for (double l : btc.epoch_mean_loss) printf(" %.3f", l);
  printf("\n");

  BtcConfig base_cfg = cfg;
  base_cfg.temporal_enabled = false;
  OptimizeResult baseline = optimize_uap(images, attacker, base_cfg);
  auto t4 = Clock::now();
  printf("[%6.1fs] baseline (no-temporal) optimized, losses:", secs(t3, t4));
  for (double l : baseline.epoch_mean_loss) printf(" %.3f", l);
  printf("\n");

  UapState noise = make_noise_uap(cfg, {3, 32, 32});

  std::vector<VideoClip> clips16 = load_clips(eval16);
  AttackReport r_btc = attack_success_rate(rep.model, clips16, btc.state, 0);
  AttackReport r_base = attack_success_rate(rep.model, clips16, baseline.state, 0);
  AttackReport r_noise = attack_success_rate(rep.model, clips16, noise, 0);
  auto t5 = Clock::now();
  printf("[%6.1fs] T=16 eval: clean acc %.3f | ASR btc %.3f base %.3f noise %.3f\n", secs(t4, t5),
         r_btc.clean_accuracy, r_btc.asr, r_base.asr, r_noise.asr);

  // criterion 6: N=32 UAP on T=32 vs T=64
  std::vector<VideoClip> clips32 = load_clips(eval32);
  std::vector<VideoClip> clips64 = load_clips(eval64);
  AttackReport r32 = attack_success_rate(rep.model, clips32, btc.state, 0);
  AttackReport r64 = attack_success_rate(rep.model, clips64, btc.state, 0);
  auto t6 = Clock::now();
  printf("[%6.1fs] length: T=32 asr %.3f (clean %.3f) T=64 asr %.3f (clean %.3f) |diff| %.3f\n", secs(t5, t6),
         r32.asr, r32.clean_accuracy, r64.asr, r64.clean_accuracy, std::abs(r32.asr - r64.asr));

  // criterion 7: shifts 0..7
  ShiftSweepResult sweep = shift_invariance_sweep(rep.model, clips16, btc.state, {0, 1, 2, 3, 4, 5, 6, 7});
  auto t7 = Clock::now();
  printf("[%6.1fs] shifts:", secs(t6, t7));
  for (const auto& r : sweep.reports) printf(" %.3f", r.asr);
  printf("  spread %.3f stddev %.3f\n", sweep.spread, sweep.stddev);

  // criterion 4: similarity trichotomy on held-out clips, attacker's extractor, l=2
  double clean_acc = 0.0, base_acc = 0.0, btc_acc = 0.0;
  int count = 0;
  for (const auto& clip : clips16) {
    AppliedPerturbation p_btc = repeat_uap(btc.state, clip.frames.dim(0));
    AppliedPerturbation p_base = repeat_uap(baseline.state, clip.frames.dim(0));
    clean_acc += mean_neighbor_similarity(similarity_matrix(clip, attacker, 2));
    base_acc += mean_neighbor_similarity(similarity_matrix(clip, attacker, 2, &p_base));
    btc_acc += mean_neighbor_similarity(similarity_matrix(clip, attacker, 2, &p_btc));
    ++count;
  }
  auto t8 = Clock::now();
  printf("[%6.1fs] neighbor similarity over %d clips: clean %.4f baseline %.4f btc %.4f\n", secs(t7, t8), count,
         clean_acc / count, base_acc / count, btc_acc / count);
  printf("          gaps: clean-btc %.4f (need >=0.10) base-btc %.4f (need >=0.05)\n",
         (clean_acc - btc_acc) / count, (base_acc - btc_acc) / count);

  // pattern reversal rate on pseudo-videos (uap invariant)
  int reversed = 0, total = 0;
  for (const auto& clip : clips16) {
    Tensor x = clip.frames.slice_frame(0);
    // pseudo video similarities via clip of x+delta frames
    VideoClip pseudo_adv, pseudo_clean;
    const int n = btc.state.frame_count();
    pseudo_adv.frames = Tensor({n, 3, 32, 32});
    pseudo_clean.frames = Tensor({n, 3, 32, 32});
    for (int i = 0; i < n; ++i) {
      Tensor f = x + btc.state.delta.slice_frame(i);
      pseudo_adv.frames.assign_frame(i, f.clamp_(0.0f, 1.0f));
      pseudo_clean.frames.assign_frame(i, x);
    }
    double adv_sim = mean_neighbor_similarity(similarity_matrix(pseudo_adv, attacker, 2));
    double clean_sim = mean_neighbor_similarity(similarity_matrix(pseudo_clean, attacker, 2));
    if (adv_sim < clean_sim) ++reversed;
    ++total;
    if (total >= 40) break;
  }
  auto t9 = Clock::now();
  printf("[%6.1fs] pseudo-video reversal: %d/%d\n", secs(t8, t9), reversed, total);
  printf("total %.1fs\n", secs(t0, t9));
  return 0;
}
