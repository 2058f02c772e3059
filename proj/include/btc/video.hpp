#pragma once

#include <iostream>
#include <mutex>
#include <set>
#include <string>

#include "btc/dataset.hpp"
#include "btc/tensor.hpp"
#include "btc/uap.hpp"

namespace btc {

struct AppliedPerturbation {
  Tensor delta_t;  // T x C x H x W
  int source_frames = 0;
  int shift = 0;
};

namespace detail {
inline void warn_truncation_once(int n, int t) {
  static std::mutex mu;
  static std::set<std::pair<int, int>> seen;
  std::lock_guard<std::mutex> lock(mu);
  if (seen.emplace(n, t).second)
    std::cerr << "warning: UAP has " << n << " frames but video has " << t << "; truncating\n";
}
}  // namespace detail

// Tile the N-frame UAP along time until it covers T frames; N > T truncates.
inline AppliedPerturbation repeat_uap(const UapState& state, int t_frames) {
  if (t_frames < 1) throw std::invalid_argument("repeat_uap: T must be >= 1");
  const int n = state.frame_count();
  if (n > t_frames) detail::warn_truncation_once(n, t_frames);
  AppliedPerturbation pert;
  pert.source_frames = n;
  pert.shift = 0;
  pert.delta_t = Tensor({t_frames, state.delta.dim(1), state.delta.dim(2), state.delta.dim(3)});
  for (int t = 0; t < t_frames; ++t) pert.delta_t.assign_frame(t, state.delta.slice_frame(t % n));
  return pert;
}

// Cyclic rotation: new frame i holds old frame ((i-1+s) mod N)+1. Adam
// state travels with its frame.
inline UapState shift_uap(const UapState& state, int s) {
  const int n = state.frame_count();
  if (s < 0 || s >= n)
    throw std::invalid_argument("shift " + std::to_string(s) + " out of range [0, " + std::to_string(n) + ")");
  UapState out;
  out.epsilon = state.epsilon;
  out.cursor = state.cursor;
  out.delta = Tensor(state.delta.shape());
  for (int i = 0; i < n; ++i) {
    const int src = (i + s) % n;
    out.delta.assign_frame(i, state.delta.slice_frame(src));
    out.adam.push_back(state.adam.empty() ? make_adam_state({state.delta.dim(1), state.delta.dim(2),
                                                             state.delta.dim(3)})
                                          : state.adam[src]);
  }
  return out;
}

inline AppliedPerturbation repeat_shifted(const UapState& state, int t_frames, int shift) {
  AppliedPerturbation pert = repeat_uap(shift == 0 ? state : shift_uap(state, shift), t_frames);
  pert.shift = shift;
  return pert;
}

// frames = clamp(V + delta_T, 0, 1); the ground-truth label is untouched.
inline VideoClip apply_uap(const VideoClip& clip, const AppliedPerturbation& pert) {
  if (clip.frames.shape() != pert.delta_t.shape())
    throw std::invalid_argument("apply_uap: clip " + shape_str(clip.frames.shape()) + " vs perturbation " +
                                shape_str(pert.delta_t.shape()));
  VideoClip adv;
  adv.label = clip.label;
  adv.clip_id = clip.clip_id;
  adv.frames = clip.frames + pert.delta_t;
  adv.frames.clamp_(0.0f, 1.0f);
  return adv;
}

}  // namespace btc
