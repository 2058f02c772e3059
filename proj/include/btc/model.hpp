#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "btc/autodiff.hpp"
#include "btc/rng.hpp"
#include "btc/serialize.hpp"
#include "btc/tensor.hpp"

namespace btc {

struct ConvBlockDef {
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 1;
  int pool_window = 2;
};

// Seeded convolutional image model f(.). Weights are a pure function of
// (seed, blocks, input_shape); any block boundary is a feature tap.
struct FeatureExtractorSpec {
  std::uint64_t seed = 0;
  Shape input_shape;  // C,H,W
  std::vector<ConvBlockDef> blocks;
  std::vector<Tensor> weights;  // one kernel tensor per block

  int block_count() const { return static_cast<int>(blocks.size()); }
};

inline std::vector<ConvBlockDef> default_extractor_blocks() {
  return {{8, 3, 1, 1, 2}, {16, 3, 1, 1, 2}, {32, 3, 1, 1, 2}};
}

inline FeatureExtractorSpec build_feature_extractor(std::uint64_t seed, Shape input_shape,
                                                    std::vector<ConvBlockDef> blocks = default_extractor_blocks()) {
  if (input_shape.size() != 3) throw std::invalid_argument("extractor input shape must be C x H x W");
  FeatureExtractorSpec spec;
  spec.seed = seed;
  spec.input_shape = std::move(input_shape);
  spec.blocks = std::move(blocks);
  Rng master(seed);
  int c_in = spec.input_shape[0];
  int h = spec.input_shape[1], w = spec.input_shape[2];
  for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
    const ConvBlockDef& def = spec.blocks[b];
    Rng rng = master.fork(b + 1);
    const int fan_in = c_in * def.kernel * def.kernel;
    const float scale = 1.0f / std::sqrt(static_cast<float>(fan_in));
    Tensor kernel({def.out_channels, c_in, def.kernel, def.kernel});
    for (std::size_t i = 0; i < kernel.numel(); ++i) kernel[i] = rng.uniform(-scale, scale);
    spec.weights.push_back(std::move(kernel));
    // Track the shape chain so invalid block stacks fail at build time.
    h = (h + 2 * def.pad - def.kernel) / def.stride + 1;
    w = (w + 2 * def.pad - def.kernel) / def.stride + 1;
    if (h < 1 || w < 1) throw std::invalid_argument("block " + std::to_string(b + 1) + " shrinks input below 1x1");
    if (h % def.pool_window != 0 || w % def.pool_window != 0)
      throw std::invalid_argument("block " + std::to_string(b + 1) + " pool window " +
                                  std::to_string(def.pool_window) + " does not divide " + std::to_string(h) + "x" +
                                  std::to_string(w));
    h /= def.pool_window;
    w /= def.pool_window;
    c_in = def.out_channels;
  }
  return spec;
}

// Feature map shape at tap `layer` (1-based block index).
inline Shape feature_shape(const FeatureExtractorSpec& spec, int layer) {
  if (layer < 1 || layer > spec.block_count())
    throw std::invalid_argument("layer " + std::to_string(layer) + " out of range [1, " +
                                std::to_string(spec.block_count()) + "]");
  int c = spec.input_shape[0], h = spec.input_shape[1], w = spec.input_shape[2];
  for (int b = 0; b < layer; ++b) {
    const ConvBlockDef& def = spec.blocks[b];
    h = ((h + 2 * def.pad - def.kernel) / def.stride + 1) / def.pool_window;
    w = ((w + 2 * def.pad - def.kernel) / def.stride + 1) / def.pool_window;
    c = def.out_channels;
  }
  return {c, h, w};
}

// Record the forward pass of blocks 1..layer on the tape; differentiable
// w.r.t. whatever feeds `x`.
inline ad::Value forward_features(ad::Tape& tape, const FeatureExtractorSpec& spec, ad::Value x, int layer) {
  if (layer < 1 || layer > spec.block_count())
    throw std::invalid_argument("layer " + std::to_string(layer) + " out of range [1, " +
                                std::to_string(spec.block_count()) + "]");
  ad::Value cur = x;
  for (int b = 0; b < layer; ++b) {
    const ConvBlockDef& def = spec.blocks[b];
    if (def.pad > 0) cur = tape.zero_pad2d(cur, def.pad);
    ad::Value w = tape.leaf(spec.weights[b]);
    cur = tape.conv2d(cur, w, def.stride);
    cur = tape.relu(cur);
    cur = tape.avgpool2d(cur, def.pool_window);
  }
  return cur;
}

inline Tensor extract_features(const FeatureExtractorSpec& spec, const Tensor& x, int layer) {
  if (x.shape() != spec.input_shape)
    throw std::invalid_argument("input shape " + shape_str(x.shape()) + " does not match extractor input " +
                                shape_str(spec.input_shape));
  ad::Tape tape;
  return tape.value(forward_features(tape, spec, tape.leaf(x), layer));
}

inline std::vector<float> softmax(const std::vector<float>& logits) {
  float mx = logits[0];
  for (float v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  std::vector<float> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (float& v : out) v = static_cast<float>(v / sum);
  return out;
}

// Video recognition model g(.): frozen extractor, per-frame features at the
// last tap pooled as (mean over frames, mean magnitude of consecutive-frame
// feature differences), concatenated, then a trained linear head. The
// signed mean of differences telescopes to (F(V^T)-F(V^1))/(T-1), which is
// blind to everything between the endpoints; the magnitude mean is what
// makes frame-to-frame consistency visible to the head.
struct VideoClassifierModel {
  FeatureExtractorSpec extractor;
  Tensor head_weights;  // class_count x (2 * feature dim)
  int class_count = 0;
  // Scalar standardization of the pooled features, fitted on the training
  // split. logits = W (phi / scale), a reparametrization of W phi that keeps
  // head training well conditioned at any corpus pixel scale.
  float feature_scale = 1.0f;

  std::size_t feature_dim() const { return shape_numel(feature_shape(extractor, extractor.block_count())); }
};

// Pooled clip descriptor consumed by the head. The temporal half is the
// mean of |F(V^{t+1}) - F(V^t)| per element, exactly zero for a static clip.
inline std::vector<float> pooled_clip_features(const FeatureExtractorSpec& extractor, const Tensor& frames) {
  if (frames.rank() != 4) throw std::invalid_argument("clip frames must be T x C x H x W");
  const int t_count = frames.dim(0);
  if (t_count < 2) throw std::invalid_argument("clip needs at least 2 frames");
  const int layer = extractor.block_count();
  const std::size_t dim = shape_numel(feature_shape(extractor, layer));
  std::vector<double> mean_acc(dim, 0.0), diff_acc(dim, 0.0);
  Tensor prev;
  for (int t = 0; t < t_count; ++t) {
    Tensor feat = extract_features(extractor, frames.slice_frame(t), layer);
    for (std::size_t i = 0; i < dim; ++i) mean_acc[i] += feat[i];
    if (t > 0)
      for (std::size_t i = 0; i < dim; ++i) diff_acc[i] += std::abs(static_cast<double>(feat[i]) - prev[i]);
    prev = std::move(feat);
  }
  std::vector<float> pooled(2 * dim);
  for (std::size_t i = 0; i < dim; ++i) {
    pooled[i] = static_cast<float>(mean_acc[i] / t_count);
    pooled[dim + i] = static_cast<float>(diff_acc[i] / (t_count - 1));
  }
  return pooled;
}

struct Classification {
  int label = 0;
  std::vector<float> probabilities;
};

inline Classification classify_pooled(const VideoClassifierModel& model, const std::vector<float>& pooled) {
  const std::size_t in_dim = pooled.size();
  if (model.head_weights.rank() != 2 || static_cast<std::size_t>(model.head_weights.dim(1)) != in_dim)
    throw std::invalid_argument("head weights " + shape_str(model.head_weights.shape()) +
                                " do not accept pooled dim " + std::to_string(in_dim));
  if (model.feature_scale <= 0.0f) throw std::invalid_argument("feature_scale must be positive");
  std::vector<float> logits(model.class_count, 0.0f);
  for (int c = 0; c < model.class_count; ++c) {
    double acc = 0.0;
    const float* row = model.head_weights.data() + static_cast<std::size_t>(c) * in_dim;
    for (std::size_t i = 0; i < in_dim; ++i) acc += static_cast<double>(row[i]) * pooled[i];
    logits[c] = static_cast<float>(acc / model.feature_scale);
  }
  Classification out;
  out.probabilities = softmax(logits);
  out.label = 0;
  for (int c = 1; c < model.class_count; ++c)
    if (out.probabilities[c] > out.probabilities[out.label]) out.label = c;  // first index wins ties
  return out;
}

inline Classification classify_video(const VideoClassifierModel& model, const Tensor& frames) {
  Shape frame_shape = {frames.dim(1), frames.dim(2), frames.dim(3)};
  if (frame_shape != model.extractor.input_shape)
    throw std::invalid_argument("clip frame shape " + shape_str(frame_shape) + " does not match extractor input " +
                                shape_str(model.extractor.input_shape));
  return classify_pooled(model, pooled_clip_features(model.extractor, frames));
}

// ---- persistence (BTCA named-tensor archive) ----

inline Tensor seed_to_tensor(std::uint64_t seed) {
  Tensor t({8});
  for (int i = 0; i < 8; ++i) t[i] = static_cast<float>((seed >> (8 * i)) & 0xFF);
  return t;
}

inline std::uint64_t seed_from_tensor(const Tensor& t) {
  if (t.numel() != 8) throw SerializationError("seed record must have 8 bytes");
  std::uint64_t seed = 0;
  for (int i = 0; i < 8; ++i) seed |= static_cast<std::uint64_t>(static_cast<unsigned char>(t[i])) << (8 * i);
  return seed;
}

inline void save_model(const VideoClassifierModel& model, const std::string& path) {
  NamedTensors entries;
  entries.emplace_back("class_count", Tensor::scalar(static_cast<float>(model.class_count)));
  entries.emplace_back("extractor.seed", seed_to_tensor(model.extractor.seed));
  entries.emplace_back("extractor.input_shape",
                       Tensor({3}, {static_cast<float>(model.extractor.input_shape[0]),
                                    static_cast<float>(model.extractor.input_shape[1]),
                                    static_cast<float>(model.extractor.input_shape[2])}));
  Tensor blocks({model.extractor.block_count(), 5});
  for (int b = 0; b < model.extractor.block_count(); ++b) {
    const ConvBlockDef& def = model.extractor.blocks[b];
    blocks[b * 5 + 0] = static_cast<float>(def.out_channels);
    blocks[b * 5 + 1] = static_cast<float>(def.kernel);
    blocks[b * 5 + 2] = static_cast<float>(def.stride);
    blocks[b * 5 + 3] = static_cast<float>(def.pad);
    blocks[b * 5 + 4] = static_cast<float>(def.pool_window);
  }
  entries.emplace_back("extractor.blocks", std::move(blocks));
  for (int b = 0; b < model.extractor.block_count(); ++b)
    entries.emplace_back("extractor.block" + std::to_string(b) + ".kernel", model.extractor.weights[b]);
  entries.emplace_back("head.weights", model.head_weights);
  entries.emplace_back("head.feature_scale", Tensor::scalar(model.feature_scale));
  save_archive(entries, path);
}

inline VideoClassifierModel load_model(const std::string& path) {
  NamedTensors entries = load_archive(path);
  VideoClassifierModel model;
  model.class_count = static_cast<int>(archive_get(entries, "class_count")[0]);
  if (model.class_count < 2) throw SerializationError("class_count must be >= 2 in " + path);
  model.extractor.seed = seed_from_tensor(archive_get(entries, "extractor.seed"));
  const Tensor& ishape = archive_get(entries, "extractor.input_shape");
  if (ishape.numel() != 3) throw SerializationError("extractor.input_shape must have 3 entries");
  model.extractor.input_shape = {static_cast<int>(ishape[0]), static_cast<int>(ishape[1]),
                                 static_cast<int>(ishape[2])};
  const Tensor& blocks = archive_get(entries, "extractor.blocks");
  if (blocks.rank() != 2 || blocks.dim(1) != 5) throw SerializationError("extractor.blocks must be n x 5");
  for (int b = 0; b < blocks.dim(0); ++b) {
    ConvBlockDef def;
    def.out_channels = static_cast<int>(blocks[b * 5 + 0]);
    def.kernel = static_cast<int>(blocks[b * 5 + 1]);
    def.stride = static_cast<int>(blocks[b * 5 + 2]);
    def.pad = static_cast<int>(blocks[b * 5 + 3]);
    def.pool_window = static_cast<int>(blocks[b * 5 + 4]);
    model.extractor.blocks.push_back(def);
    model.extractor.weights.push_back(archive_get(entries, "extractor.block" + std::to_string(b) + ".kernel"));
  }
  model.head_weights = archive_get(entries, "head.weights");
  model.feature_scale = archive_get(entries, "head.feature_scale")[0];
  if (model.feature_scale <= 0.0f) throw SerializationError("head.feature_scale must be positive in " + path);
  return model;
}

}  // namespace btc
