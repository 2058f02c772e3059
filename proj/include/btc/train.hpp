#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <vector>

#include "btc/dataset.hpp"
#include "btc/model.hpp"
#include "btc/optim.hpp"
#include "btc/parallel.hpp"
#include "btc/rng.hpp"

namespace btc {

struct TrainReport {
  VideoClassifierModel model;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  int train_count = 0;
  int val_count = 0;
  std::vector<double> epoch_loss;
};

// Frozen seeded extractor, linear head trained with full-batch Adam on
// cross-entropy. Pooled clip features are computed once up front. The split
// is stratified per class and seeded.
inline TrainReport train_classifier(const DatasetManifest& data, int epochs, std::uint64_t seed,
                                    float learning_rate = 0.05f, float val_fraction = 0.25f) {
  const auto clip_entries = data.clips();
  if (clip_entries.empty()) throw std::invalid_argument("train_classifier: empty dataset");
  const int classes = data.class_count();
  if (classes < 2) throw std::invalid_argument("train_classifier: need at least 2 classes");

  VideoClip first = load_clip(data, clip_entries.front());
  Shape input_shape = {first.frames.dim(1), first.frames.dim(2), first.frames.dim(3)};

  TrainReport report;
  report.model.extractor = build_feature_extractor(seed, input_shape);
  report.model.class_count = classes;

  std::vector<std::vector<float>> pooled(clip_entries.size());
  std::vector<int> labels(clip_entries.size());
  parallel_for(clip_entries.size(), [&](std::size_t i) {
    VideoClip clip = load_clip(data, clip_entries[i]);
    pooled[i] = pooled_clip_features(report.model.extractor, clip.frames);
    labels[i] = clip.label;
  });
  const std::size_t dim = pooled.front().size();

  // stratified seeded split
  Rng split_rng = Rng(seed).fork(11);
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::vector<std::size_t> train_idx, val_idx;
  for (auto& [label, idxs] : by_class) {
    seeded_shuffle(idxs, split_rng);
    std::size_t n_val = static_cast<std::size_t>(static_cast<float>(idxs.size()) * val_fraction);
    if (val_fraction > 0.0f && idxs.size() > 1 && n_val == 0) n_val = 1;
    for (std::size_t i = 0; i < idxs.size(); ++i) (i < n_val ? val_idx : train_idx).push_back(idxs[i]);
  }
  report.train_count = static_cast<int>(train_idx.size());
  report.val_count = static_cast<int>(val_idx.size());

  // Scalar feature standardization fitted on the training split; keeps the
  // head optimization conditioned identically at any corpus pixel scale.
  double norm_acc = 0.0;
  for (std::size_t s : train_idx) {
    double sq = 0.0;
    for (float v : pooled[s]) sq += static_cast<double>(v) * v;
    norm_acc += std::sqrt(sq);
  }
  const float sigma = std::max(static_cast<float>(norm_acc / train_idx.size()), 1e-12f);
  report.model.feature_scale = sigma;
  for (auto& phi : pooled)
    for (float& v : phi) v /= sigma;

  Tensor head({classes, static_cast<int>(dim)});  // zero initialization
  AdamState adam = make_adam_state(head.shape());

  auto logits_of = [&](std::size_t sample) {
    std::vector<double> logits(classes, 0.0);
    const std::vector<float>& phi = pooled[sample];
    for (int c = 0; c < classes; ++c) {
      const float* row = head.data() + static_cast<std::size_t>(c) * dim;
      double acc = 0.0;
      for (std::size_t i = 0; i < dim; ++i) acc += static_cast<double>(row[i]) * phi[i];
      logits[c] = acc;
    }
    return logits;
  };

  for (int epoch = 0; epoch < epochs; ++epoch) {
    Tensor grad(head.shape());
    double loss_sum = 0.0;
    for (std::size_t s : train_idx) {
      std::vector<double> logits = logits_of(s);
      const double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (double& l : logits) {
        l = std::exp(l - mx);
        z += l;
      }
      loss_sum += -std::log(std::max(logits[labels[s]] / z, 1e-30));
      for (int c = 0; c < classes; ++c) {
        const double coef = logits[c] / z - (c == labels[s] ? 1.0 : 0.0);
        float* row = grad.data() + static_cast<std::size_t>(c) * dim;
        const std::vector<float>& phi = pooled[s];
        for (std::size_t i = 0; i < dim; ++i) row[i] += static_cast<float>(coef * phi[i]);
      }
    }
    const float inv = 1.0f / static_cast<float>(train_idx.size());
    for (std::size_t i = 0; i < grad.numel(); ++i) grad[i] *= inv;
    Tensor update = adam_step(adam, grad, learning_rate);
    for (std::size_t i = 0; i < head.numel(); ++i) head[i] += update[i];
    report.epoch_loss.push_back(loss_sum / static_cast<double>(train_idx.size()));
  }
  report.model.head_weights = std::move(head);

  auto accuracy_on = [&](const std::vector<std::size_t>& idxs) {
    if (idxs.empty()) return 0.0;
    int correct = 0;
    for (std::size_t s : idxs)
      if (classify_pooled(report.model, pooled[s]).label == labels[s]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(idxs.size());
  };
  report.train_accuracy = accuracy_on(train_idx);
  report.val_accuracy = accuracy_on(val_idx);
  return report;
}

}  // namespace btc
