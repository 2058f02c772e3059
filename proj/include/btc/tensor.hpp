#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace btc {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ')';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

// Dense row-major array of f32, rank 0..4. The single numeric carrier for
// images, frames, feature maps, perturbations and weights.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, float fill = 0.0f) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(shape_numel(shape_), fill);
  }

  Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (data_.size() != shape_numel(shape_))
      throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                  " does not match shape " + shape_str(shape_));
  }

  static Tensor scalar(float v) { return Tensor({1}, {v}); }

  const Shape& shape() const { return shape_; }
  int dim(std::size_t i) const { return shape_.at(i); }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  // Offset helpers for the layouts used throughout (C,H,W) and (T/C_out first).
  float& at3(int c, int y, int x, int H, int W) { return data_[(static_cast<std::size_t>(c) * H + y) * W + x]; }
  float at3(int c, int y, int x, int H, int W) const { return data_[(static_cast<std::size_t>(c) * H + y) * W + x]; }

  bool all_finite() const {
    for (float v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  float max_abs() const {
    float m = 0.0f;
    for (float v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  Tensor& clamp_(float lo, float hi) {
    for (float& v : data_) v = std::min(hi, std::max(lo, v));
    return *this;
  }

  Tensor& fill(float v) {
    std::fill(data_.begin(), data_.end(), v);
    return *this;
  }

  // Frame f of a rank-4 (T,C,H,W) tensor as its own (C,H,W) tensor.
  Tensor slice_frame(int f) const {
    if (rank() != 4) throw std::invalid_argument("slice_frame requires rank 4, got " + shape_str(shape_));
    if (f < 0 || f >= shape_[0]) throw std::out_of_range("frame index " + std::to_string(f) + " out of range");
    std::size_t stride = numel() / static_cast<std::size_t>(shape_[0]);
    std::vector<float> out(data_.begin() + f * stride, data_.begin() + (f + 1) * stride);
    return Tensor({shape_[1], shape_[2], shape_[3]}, std::move(out));
  }

  void assign_frame(int f, const Tensor& frame) {
    if (rank() != 4) throw std::invalid_argument("assign_frame requires rank 4");
    std::size_t stride = numel() / static_cast<std::size_t>(shape_[0]);
    if (frame.numel() != stride) throw std::invalid_argument("frame size mismatch");
    std::copy(frame.data_.begin(), frame.data_.end(), data_.begin() + f * stride);
  }

  bool operator==(const Tensor& other) const { return shape_ == other.shape_ && data_ == other.data_; }

 private:
  static void validate_shape(const Shape& s) {
    if (s.size() > 4) throw std::invalid_argument("rank " + std::to_string(s.size()) + " exceeds 4");
    for (int d : s)
      if (d <= 0) throw std::invalid_argument("non-positive dimension in shape " + shape_str(s));
  }

  Shape shape_;
  std::vector<float> data_;
};

inline Tensor operator+(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b[i];
  return out;
}

inline Tensor operator-(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b[i];
  return out;
}

inline Tensor operator*(const Tensor& a, float s) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= s;
  return out;
}

inline float linf_distance(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  float m = 0.0f;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace btc
