// Scratch: where does the attack lose its punch - transfer or pooling?
#include <cstdio>

#include "btc/analysis.hpp"
#include "btc/dataset.hpp"
#include "btc/model.hpp"
#include "btc/train.hpp"
#include "btc/uap.hpp"
#include "btc/video.hpp"

using namespace btc;

int main() {
  std::filesystem::path root = "/tmp/btc-pipe";
  DatasetManifest train_m = load_manifest(root / "train/manifest.txt");
  DatasetManifest eval16 = load_manifest(root / "eval16/manifest.txt");
  std::vector<Tensor> images = load_images(train_m);
  TrainReport rep = train_classifier(train_m, 30, 7);
  printf("val acc %.3f\n", rep.val_accuracy);

  FeatureExtractorSpec attacker = build_feature_extractor(1, {3, 32, 32});
  const FeatureExtractorSpec& target = rep.model.extractor;  // seed 7

  BtcConfig cfg;
  cfg.epochs = 40;
  cfg.seed = 1;

  auto probe = [&](const char* name, const UapState& st) {
    // per-frame displacement on attacker (l=2) and target (l=3) extractors
    double catt = 0, ctgt = 0;
    int cnt = 0;
    std::vector<VideoClip> clips = load_clips(eval16);
    for (int i = 0; i < 20; ++i) {
      Tensor x = clips[i * 8 % clips.size()].frames.slice_frame(0);
      Tensor d = st.delta.slice_frame(i % st.frame_count());
      Tensor xa = (x + d);
      xa.clamp_(0.0f, 1.0f);
      catt += cosine_flat(extract_features(attacker, x, 2), extract_features(attacker, xa, 2));
      ctgt += cosine_flat(extract_features(target, x, 3), extract_features(target, xa, 3));
      ++cnt;
    }
    // pooled-feature displacement on the target model
    double pooled_shift = 0, pooled_norm = 0;
    for (int i = 0; i < 10; ++i) {
      const VideoClip& clip = clips[i * 16 % clips.size()];
      AppliedPerturbation pert = repeat_uap(st, clip.frames.dim(0));
      std::vector<float> pc = pooled_clip_features(target, clip.frames);
      std::vector<float> pa = pooled_clip_features(target, apply_uap(clip, pert).frames);
      double sh = 0, no = 0;
      for (std::size_t j = 0; j < pc.size(); ++j) {
        sh += (pa[j] - pc[j]) * (pa[j] - pc[j]);
        no += pc[j] * pc[j];
      }
      pooled_shift += std::sqrt(sh);
      pooled_norm += std::sqrt(no);
    }
    AttackReport r = attack_success_rate(rep.model, clips, st, 0);
    printf("%-10s att-l2 cos %.4f | tgt-l3 cos %.4f | pooled shift/norm %.4f | ASR %.3f (clean %.3f)\n", name,
           catt / cnt, ctgt / cnt, pooled_shift / pooled_norm, r.asr, r.clean_accuracy);
  };

  OptimizeResult btc = optimize_uap(images, attacker, cfg);
  probe("btc", btc.state);

  BtcConfig bcfg = cfg;
  bcfg.temporal_enabled = false;
  OptimizeResult base = optimize_uap(images, attacker, bcfg);
  probe("baseline", base.state);

  probe("noise", make_noise_uap(cfg, {3, 32, 32}));

  // white-box: optimize against the target's own extractor (seed 7)
  BtcConfig wcfg = cfg;
  OptimizeResult wb = optimize_uap(images, target, wcfg);
  probe("whitebox", wb.state);
  return 0;
}
