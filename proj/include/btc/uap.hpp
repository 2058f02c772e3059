#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "btc/autodiff.hpp"
#include "btc/dataset.hpp"
#include "btc/model.hpp"
#include "btc/optim.hpp"
#include "btc/rng.hpp"
#include "btc/serialize.hpp"
#include "btc/tensor.hpp"

namespace btc {

struct BtcConfig {
  int noise_count = 4;                      // K
  std::vector<int> offsets = {-2, -1, 1, 2};  // J
  int layer = 2;                            // feature tap l
  float alpha = 0.004f;
  float epsilon = 16.0f / 255.0f;
  int frames = 32;  // N
  int epochs = 5;
  std::uint64_t seed = 1;
  bool temporal_enabled = true;
  bool update_neighbors = false;

  void validate() const {
    if (noise_count < 0) throw std::invalid_argument("noise count K must be >= 0");
    if (frames < 1) throw std::invalid_argument("frame count N must be >= 1");
    if (alpha <= 0.0f) throw std::invalid_argument("step size alpha must be positive");
    if (epsilon <= 0.0f || epsilon > 1.0f) throw std::invalid_argument("epsilon must lie in (0, 1]");
    if (layer < 1) throw std::invalid_argument("layer must be >= 1");
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    for (int j : offsets) {
      if (j == 0) throw std::invalid_argument("offset 0 is not allowed in J");
      if (std::abs(j) >= frames)
        throw std::invalid_argument("offset " + std::to_string(j) + " out of range for N = " +
                                    std::to_string(frames));
    }
  }
};

inline std::vector<int> symmetric_offsets(int j_max) {
  if (j_max < 1) throw std::invalid_argument("j-max must be >= 1");
  std::vector<int> out;
  for (int j = -j_max; j <= j_max; ++j)
    if (j != 0) out.push_back(j);
  return out;
}

// Drop offsets that cannot exist for a given N (used by N sweeps).
inline std::vector<int> clamp_offsets(const std::vector<int>& offsets, int frames) {
  std::vector<int> out;
  for (int j : offsets)
    if (j != 0 && std::abs(j) < frames) out.push_back(j);
  return out;
}

struct UapState {
  Tensor delta;  // N x C x H x W
  float epsilon = 0.0f;
  std::vector<AdamState> adam;  // one per frame
  int cursor = 1;               // next frame to update, 1-based

  int frame_count() const { return delta.dim(0); }
};

// 1-based cyclic neighbor index: frame N's successor under Eq.-style
// repetition is frame 1.
inline int neighbor_frame_index(int n, int j, int frames) {
  if (n < 1 || n > frames) throw std::invalid_argument("frame index " + std::to_string(n) + " out of range");
  if (j == 0 || std::abs(j) >= frames)
    throw std::invalid_argument("offset " + std::to_string(j) + " must satisfy 0 < |j| < N = " +
                                std::to_string(frames));
  int idx = (n - 1 + j) % frames;
  if (idx < 0) idx += frames;
  return idx + 1;
}

inline UapState init_uap(const BtcConfig& cfg, const Shape& frame_shape) {
  cfg.validate();
  if (frame_shape.size() != 3) throw std::invalid_argument("frame shape must be C x H x W");
  UapState st;
  st.delta = Tensor({cfg.frames, frame_shape[0], frame_shape[1], frame_shape[2]}, 0.01f / 255.0f);
  st.epsilon = cfg.epsilon;
  for (int n = 0; n < cfg.frames; ++n) st.adam.push_back(make_adam_state(frame_shape));
  st.cursor = 1;
  return st;
}

inline std::vector<Tensor> sample_noise(Rng& rng, float epsilon, const Shape& shape, int count) {
  std::vector<Tensor> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int k = 0; k < count; ++k) {
    Tensor noise(shape);
    for (std::size_t i = 0; i < noise.numel(); ++i) noise[i] = rng.uniform(-epsilon, epsilon);
    out.push_back(std::move(noise));
  }
  return out;
}

inline Tensor clip_to_budget(Tensor frame, float epsilon) {
  if (epsilon <= 0.0f) throw std::invalid_argument("epsilon must be positive");
  return frame.clamp_(-epsilon, epsilon);
}

struct LossResult {
  double adversarial = 0.0;
  double temporal = 0.0;
  double total = 0.0;
  Tensor grad;  // d total / d delta, full N x C x H x W (when requested)
};

namespace detail {

// One combined computation record for Eq.-4/5/6-style losses. Gradient flows
// through delta only; the noise branches are constants.
inline LossResult btc_loss_impl(const Tensor& image, int n, const Tensor& delta,
                                const FeatureExtractorSpec& spec, const BtcConfig& cfg,
                                const std::vector<Tensor>& noises, bool adversarial_part, bool temporal_part,
                                bool want_grad) {
  if (delta.rank() != 4) throw std::invalid_argument("delta must be N x C x H x W");
  const int frames = delta.dim(0);
  if (n < 1 || n > frames) throw std::invalid_argument("frame index " + std::to_string(n) + " out of range");
  Shape frame_shape = {delta.dim(1), delta.dim(2), delta.dim(3)};
  if (image.shape() != frame_shape)
    throw std::invalid_argument("image shape " + shape_str(image.shape()) + " does not match delta frames " +
                                shape_str(frame_shape));

  ad::Tape tape;
  ad::Value x = tape.leaf(image);
  std::map<int, ad::Value> frame_leaves;  // 1-based frame index -> leaf
  auto frame_leaf = [&](int idx) {
    auto it = frame_leaves.find(idx);
    if (it != frame_leaves.end()) return it->second;
    ad::Value leaf = tape.leaf(delta.slice_frame(idx - 1), want_grad);
    frame_leaves.emplace(idx, leaf);
    return leaf;
  };

  ad::Value adv_feat = forward_features(tape, spec, tape.add(x, frame_leaf(n)), cfg.layer);

  LossResult res;
  ad::Value total{-1};
  auto add_term = [&](ad::Value term) { total = total.valid() ? tape.add(total, term) : term; };

  if (adversarial_part) {
    for (const Tensor& noise : noises) {
      ad::Value noisy = tape.leaf(image + noise);
      ad::Value clean_feat = forward_features(tape, spec, noisy, cfg.layer);
      ad::Value sim = tape.cosine_similarity(clean_feat, adv_feat);
      res.adversarial += tape.scalar_value(sim);
      add_term(sim);
    }
  }
  if (temporal_part && cfg.temporal_enabled) {
    std::map<int, ad::Value> neighbor_feats;
    for (int j : cfg.offsets) {
      const int idx = neighbor_frame_index(n, j, frames);
      auto it = neighbor_feats.find(idx);
      if (it == neighbor_feats.end()) {
        ad::Value feat = forward_features(tape, spec, tape.add(x, frame_leaf(idx)), cfg.layer);
        it = neighbor_feats.emplace(idx, feat).first;
      }
      ad::Value sim = tape.cosine_similarity(adv_feat, it->second);
      res.temporal += tape.scalar_value(sim);
      add_term(sim);
    }
  }
  res.total = res.adversarial + res.temporal;

  if (want_grad) {
    res.grad = Tensor(delta.shape());
    if (total.valid()) {
      tape.backward(total);
      const std::size_t stride = shape_numel(frame_shape);
      for (const auto& [idx, leaf] : frame_leaves) {
        const Tensor& g = tape.grad(leaf);
        float* dst = res.grad.data() + static_cast<std::size_t>(idx - 1) * stride;
        for (std::size_t i = 0; i < stride; ++i) dst[i] += g[i];
      }
    }
  }
  return res;
}

}  // namespace detail

// Sum over K noise draws of Sim(F_l(x + eta_k), F_l(x + delta^n)).
inline LossResult adversarial_loss(const Tensor& image, int n, const UapState& state,
                                   const FeatureExtractorSpec& spec, const BtcConfig& cfg,
                                   const std::vector<Tensor>& noises, bool want_grad = true) {
  return detail::btc_loss_impl(image, n, state.delta, spec, cfg, noises, true, false, want_grad);
}

// Sum over j in J of Sim(F_l(x + delta^n), F_l(x + delta^{n+j})), cyclic in
// the frame index. Zero when the temporal term is disabled.
inline LossResult temporal_similarity_loss(const Tensor& image, int n, const UapState& state,
                                           const FeatureExtractorSpec& spec, const BtcConfig& cfg,
                                           bool want_grad = true) {
  if (!cfg.temporal_enabled) {
    LossResult res;
    if (want_grad) res.grad = Tensor(state.delta.shape());
    return res;
  }
  return detail::btc_loss_impl(image, n, state.delta, spec, cfg, {}, false, true, want_grad);
}

inline LossResult btc_loss(const Tensor& image, int n, const UapState& state, const FeatureExtractorSpec& spec,
                           const BtcConfig& cfg, const std::vector<Tensor>& noises, bool want_grad = true) {
  return detail::btc_loss_impl(image, n, state.delta, spec, cfg, noises, true, true, want_grad);
}

struct OptimizeResult {
  UapState state;
  std::vector<double> epoch_mean_loss;
  std::size_t steps = 0;
};

// step (1-based), frame updated, loss value, state after clipping.
using StepCallback = std::function<void(std::size_t, int, double, const UapState&)>;

// Full optimization loop: seeded shuffle per epoch, one Adam step on the
// cursor frame per image, budget clip, cyclic cursor advance.
inline OptimizeResult optimize_uap(const std::vector<Tensor>& images, const FeatureExtractorSpec& spec,
                                   const BtcConfig& cfg, const StepCallback& callback = nullptr) {
  cfg.validate();
  if (images.empty()) throw std::invalid_argument("optimize_uap: empty image set");
  if (cfg.noise_count < 1) throw std::invalid_argument("optimize_uap: K must be >= 1");
  Shape frame_shape = images.front().shape();

  OptimizeResult result;
  result.state = init_uap(cfg, frame_shape);
  UapState& st = result.state;

  Rng master(cfg.seed);
  Rng shuffle_rng = master.fork(1);
  Rng noise_rng = master.fork(2);

  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    seeded_shuffle(order, shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
      const Tensor& image = images[order[oi]];
      const int n = st.cursor;
      std::vector<Tensor> noises = sample_noise(noise_rng, cfg.epsilon, frame_shape, cfg.noise_count);
      LossResult loss = btc_loss(image, n, st, spec, cfg, noises, true);
      loss_sum += loss.total;

      const std::size_t stride = shape_numel(frame_shape);
      auto frame_grad = [&](int idx) {
        Tensor g(frame_shape);
        const float* src = loss.grad.data() + static_cast<std::size_t>(idx - 1) * stride;
        for (std::size_t i = 0; i < stride; ++i) g[i] = src[i];
        return g;
      };
      auto apply_update = [&](int idx) {
        Tensor update = adam_step(st.adam[idx - 1], frame_grad(idx), cfg.alpha);
        Tensor frame = st.delta.slice_frame(idx - 1);
        for (std::size_t i = 0; i < stride; ++i) frame[i] += update[i];
        st.delta.assign_frame(idx - 1, clip_to_budget(std::move(frame), cfg.epsilon));
      };

      apply_update(n);
      if (cfg.update_neighbors && cfg.temporal_enabled) {
        std::vector<int> touched;
        for (int j : cfg.offsets) {
          const int idx = neighbor_frame_index(n, j, cfg.frames);
          if (idx != n && std::find(touched.begin(), touched.end(), idx) == touched.end()) touched.push_back(idx);
        }
        std::sort(touched.begin(), touched.end());
        for (int idx : touched) apply_update(idx);
      }

      result.steps += 1;
      st.cursor = (st.cursor % cfg.frames) + 1;
      if (callback) callback(result.steps, n, loss.total, st);
    }
    result.epoch_mean_loss.push_back(loss_sum / static_cast<double>(order.size()));
  }
  return result;
}

inline OptimizeResult optimize_uap(const DatasetManifest& images, const FeatureExtractorSpec& spec,
                                   const BtcConfig& cfg, const StepCallback& callback = nullptr) {
  return optimize_uap(load_images(images), spec, cfg, callback);
}

// Equal-budget uniform noise perturbation, the reference point attacks are
// measured against.
inline UapState make_noise_uap(const BtcConfig& cfg, const Shape& frame_shape) {
  UapState st = init_uap(cfg, frame_shape);
  Rng rng = Rng(cfg.seed).fork(99);
  for (std::size_t i = 0; i < st.delta.numel(); ++i) st.delta[i] = rng.uniform(-cfg.epsilon, cfg.epsilon);
  return st;
}

// ---- persistence: BTCA archive plus `key = value` side record ----

inline std::string config_to_text(const BtcConfig& cfg) {
  std::ostringstream os;
  os << "k = " << cfg.noise_count << "\n";
  os << "j = ";
  for (std::size_t i = 0; i < cfg.offsets.size(); ++i) os << (i ? "," : "") << cfg.offsets[i];
  os << "\n";
  os << "layer = " << cfg.layer << "\n";
  os << "alpha = " << cfg.alpha << "\n";
  os << "epsilon = " << cfg.epsilon << "\n";
  os << "frames = " << cfg.frames << "\n";
  os << "epochs = " << cfg.epochs << "\n";
  os << "seed = " << cfg.seed << "\n";
  os << "temporal_enabled = " << (cfg.temporal_enabled ? 1 : 0) << "\n";
  os << "update_neighbors = " << (cfg.update_neighbors ? 1 : 0) << "\n";
  return os.str();
}

inline void save_uap(const UapState& state, const BtcConfig& cfg, const std::string& path) {
  NamedTensors entries;
  entries.emplace_back("delta", state.delta);
  entries.emplace_back("epsilon", Tensor::scalar(state.epsilon));
  entries.emplace_back("n_frames", Tensor::scalar(static_cast<float>(state.frame_count())));
  save_archive(entries, path);
  std::ofstream side(path + ".cfg", std::ios::binary);
  if (!side) throw SerializationError("cannot write side record: " + path + ".cfg");
  side << config_to_text(cfg);
}

inline UapState load_uap(const std::string& path) {
  NamedTensors entries = load_archive(path);
  UapState st;
  st.delta = archive_get(entries, "delta");
  if (st.delta.rank() != 4) throw SerializationError("delta must be rank 4 in " + path);
  st.epsilon = archive_get(entries, "epsilon")[0];
  const int n = static_cast<int>(archive_get(entries, "n_frames")[0]);
  if (n != st.delta.dim(0)) throw SerializationError("n_frames disagrees with delta shape in " + path);
  Shape frame_shape = {st.delta.dim(1), st.delta.dim(2), st.delta.dim(3)};
  for (int i = 0; i < n; ++i) st.adam.push_back(make_adam_state(frame_shape));
  st.cursor = 1;
  return st;
}

}  // namespace btc
