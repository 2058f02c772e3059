#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "btc/tensor.hpp"

namespace btc::ad {

enum class Op : std::uint8_t { Leaf, Add, Mul, Sum, Conv2d, Relu, AvgPool2d, ZeroPad2d, CosineSimilarity };

struct Value {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

// Reverse-mode tape over a small kernel set: enough to run the feature
// extractor forward and differentiate cosine-similarity losses w.r.t. any
// marked leaf.
//
// Node outputs are f32 tensors, but every node also carries a 64-bit shadow
// of its value which is what downstream ops consume. Storing intermediates
// at 32 bits would put a ~5e-4 noise floor on central differences at
// h = 1e-3, swamping small-gradient coordinates; the shadow keeps the loss
// evaluable to full double precision so gradient checks measure the
// gradient, not the storage format.
//
// Values are immutable once recorded; backward walks the node list in
// reverse, so accumulation order is fixed and two runs on identical inputs
// produce bit-identical gradients.
class Tape {
 public:
  Value leaf(Tensor t, bool requires_grad = false) {
    Node n;
    n.op = Op::Leaf;
    n.shadow.assign(t.data(), t.data() + t.numel());
    n.value = std::move(t);
    n.needs_grad = requires_grad;
    return push(std::move(n));
  }

  Value add(Value a, Value b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (!na.value.same_shape(nb.value))
      throw std::invalid_argument("add: shape mismatch " + shape_str(na.value.shape()) + " vs " +
                                  shape_str(nb.value.shape()));
    Node n;
    n.op = Op::Add;
    n.args = {a.idx, b.idx};
    n.needs_grad = na.needs_grad || nb.needs_grad;
    n.shadow.resize(na.shadow.size());
    for (std::size_t i = 0; i < n.shadow.size(); ++i) n.shadow[i] = na.shadow[i] + nb.shadow[i];
    n.value = narrow(na.value.shape(), n.shadow);
    return push(std::move(n));
  }

  Value mul(Value a, Value b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (!na.value.same_shape(nb.value))
      throw std::invalid_argument("mul: shape mismatch " + shape_str(na.value.shape()) + " vs " +
                                  shape_str(nb.value.shape()));
    Node n;
    n.op = Op::Mul;
    n.args = {a.idx, b.idx};
    n.needs_grad = na.needs_grad || nb.needs_grad;
    n.shadow.resize(na.shadow.size());
    for (std::size_t i = 0; i < n.shadow.size(); ++i) n.shadow[i] = na.shadow[i] * nb.shadow[i];
    n.value = narrow(na.value.shape(), n.shadow);
    return push(std::move(n));
  }

  // Sum of all elements, as a scalar.
  Value sum(Value x) {
    const Node& nx = node(x);
    double acc = 0.0;
    for (double v : nx.shadow) acc += v;
    Node n;
    n.op = Op::Sum;
    n.args = {x.idx, -1};
    n.needs_grad = nx.needs_grad;
    n.shadow = {acc};
    n.value = Tensor::scalar(static_cast<float>(acc));
    return push(std::move(n));
  }

  // Cross-correlation, no padding, no bias. input (C_in,H,W), kernels
  // (C_out,C_in,k,k), output (C_out,H',W') with H' = (H-k)/stride + 1.
  Value conv2d(Value input, Value kernels, int stride) {
    const Node& nx = node(input);
    const Node& nw = node(kernels);
    const Tensor& x = nx.value;
    const Tensor& w = nw.value;
    if (x.rank() != 3 || w.rank() != 4)
      throw std::invalid_argument("conv2d: expected input rank 3 and kernels rank 4, got " +
                                  shape_str(x.shape()) + " and " + shape_str(w.shape()));
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be positive");
    const int c_in = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int c_out = w.dim(0), k = w.dim(2);
    if (w.dim(1) != c_in)
      throw std::invalid_argument("conv2d: kernel channels " + std::to_string(w.dim(1)) +
                                  " do not match input channels " + std::to_string(c_in));
    if (w.dim(2) != w.dim(3)) throw std::invalid_argument("conv2d: kernels must be square");
    if (k > h || k > wd)
      throw std::invalid_argument("conv2d: kernel " + std::to_string(k) + "x" + std::to_string(k) +
                                  " larger than input " + shape_str(x.shape()));
    const int oh = (h - k) / stride + 1;
    const int ow = (wd - k) / stride + 1;

    Node n;
    n.op = Op::Conv2d;
    n.args = {input.idx, kernels.idx};
    n.stride = stride;
    n.needs_grad = nx.needs_grad || nw.needs_grad;
    n.shadow.assign(static_cast<std::size_t>(c_out) * oh * ow, 0.0);
    for (int oc = 0; oc < c_out; ++oc)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = 0.0;
          for (int ic = 0; ic < c_in; ++ic)
            for (int ky = 0; ky < k; ++ky) {
              const double* xr = nx.shadow.data() + (static_cast<std::size_t>(ic) * h + oy * stride + ky) * wd +
                                 ox * stride;
              const double* wr = nw.shadow.data() + ((static_cast<std::size_t>(oc) * c_in + ic) * k + ky) * k;
              for (int kx = 0; kx < k; ++kx) acc += xr[kx] * wr[kx];
            }
          n.shadow[(static_cast<std::size_t>(oc) * oh + oy) * ow + ox] = acc;
        }
    n.value = narrow({c_out, oh, ow}, n.shadow);
    return push(std::move(n));
  }

  Value relu(Value x) {
    const Node& nx = node(x);
    Node n;
    n.op = Op::Relu;
    n.args = {x.idx, -1};
    n.needs_grad = nx.needs_grad;
    n.shadow.resize(nx.shadow.size());
    for (std::size_t i = 0; i < n.shadow.size(); ++i) n.shadow[i] = nx.shadow[i] > 0.0 ? nx.shadow[i] : 0.0;
    n.value = narrow(nx.value.shape(), n.shadow);
    return push(std::move(n));
  }

  // Mean over non-overlapping window x window patches; window must divide
  // both spatial dims.
  Value avgpool2d(Value x, int window) {
    const Node& nx = node(x);
    const Tensor& t = nx.value;
    if (t.rank() != 3) throw std::invalid_argument("avgpool2d: expected rank 3, got " + shape_str(t.shape()));
    if (window < 1) throw std::invalid_argument("avgpool2d: window must be positive");
    const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
    if (h % window != 0 || w % window != 0)
      throw std::invalid_argument("avgpool2d: window " + std::to_string(window) + " does not divide dims " +
                                  shape_str(t.shape()));
    const int oh = h / window, ow = w / window;
    const double inv = 1.0 / (static_cast<double>(window) * window);
    Node n;
    n.op = Op::AvgPool2d;
    n.args = {x.idx, -1};
    n.window = window;
    n.needs_grad = nx.needs_grad;
    n.shadow.assign(static_cast<std::size_t>(c) * oh * ow, 0.0);
    for (int ic = 0; ic < c; ++ic)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = 0.0;
          for (int py = 0; py < window; ++py)
            for (int px = 0; px < window; ++px)
              acc += nx.shadow[(static_cast<std::size_t>(ic) * h + oy * window + py) * w + ox * window + px];
          n.shadow[(static_cast<std::size_t>(ic) * oh + oy) * ow + ox] = acc * inv;
        }
    n.value = narrow({c, oh, ow}, n.shadow);
    return push(std::move(n));
  }

  // Zero padding of the spatial dims; gradient is the center crop.
  Value zero_pad2d(Value x, int pad) {
    const Node& nx = node(x);
    const Tensor& t = nx.value;
    if (t.rank() != 3) throw std::invalid_argument("zero_pad2d: expected rank 3, got " + shape_str(t.shape()));
    if (pad < 0) throw std::invalid_argument("zero_pad2d: pad must be non-negative");
    const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
    const int oh = h + 2 * pad, ow = w + 2 * pad;
    Node n;
    n.op = Op::ZeroPad2d;
    n.args = {x.idx, -1};
    n.pad = pad;
    n.needs_grad = nx.needs_grad;
    n.shadow.assign(static_cast<std::size_t>(c) * oh * ow, 0.0);
    for (int ic = 0; ic < c; ++ic)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
          n.shadow[(static_cast<std::size_t>(ic) * oh + y + pad) * ow + xx + pad] =
              nx.shadow[(static_cast<std::size_t>(ic) * h + y) * w + xx];
    n.value = narrow({c, oh, ow}, n.shadow);
    return push(std::move(n));
  }

  // (a.b)/(|a||b|) over the flattened inputs; 0 with zero gradient when
  // either norm falls below 1e-12.
  Value cosine_similarity(Value a, Value b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (!na.value.same_shape(nb.value))
      throw std::invalid_argument("cosine_similarity: shape mismatch " + shape_str(na.value.shape()) + " vs " +
                                  shape_str(nb.value.shape()));
    double dot = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < na.shadow.size(); ++i) {
      const double x = na.shadow[i], y = nb.shadow[i];
      dot += x * y;
      aa += x * x;
      bb += y * y;
    }
    Node n;
    n.op = Op::CosineSimilarity;
    n.args = {a.idx, b.idx};
    n.needs_grad = na.needs_grad || nb.needs_grad;
    n.norm_a = std::sqrt(aa);
    n.norm_b = std::sqrt(bb);
    n.dot = dot;
    n.degenerate = (n.norm_a < kNormFloor || n.norm_b < kNormFloor);
    n.shadow = {n.degenerate ? 0.0 : dot / (n.norm_a * n.norm_b)};
    n.value = Tensor::scalar(static_cast<float>(n.shadow[0]));
    return push(std::move(n));
  }

  const Tensor& value(Value v) const { return node(v).value; }

  // Full-precision value of a scalar node.
  double scalar_value(Value v) const {
    const Node& n = node(v);
    if (n.value.numel() != 1)
      throw std::invalid_argument("scalar_value: node is not scalar, shape " + shape_str(n.value.shape()));
    return n.shadow[0];
  }

  // Reverse accumulation from a scalar output. Gradients are materialized
  // for every requires-grad leaf (zeros when disconnected).
  void backward(Value output) {
    const Node& out = node(output);
    if (out.value.numel() != 1)
      throw std::invalid_argument("backward: output must be scalar, got shape " + shape_str(out.value.shape()));
    grads_.assign(nodes_.size(), std::vector<double>());
    grads_[output.idx] = {1.0};
    for (int i = output.idx; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.needs_grad || grads_[i].empty()) continue;
      const std::vector<double>& g = grads_[i];
      switch (n.op) {
        case Op::Leaf:
          break;
        case Op::Add:
          accumulate(n.args[0], g);
          accumulate(n.args[1], g);
          break;
        case Op::Mul: {
          if (arg_needs_grad(n.args[0])) {
            std::vector<double> ga = g;
            const std::vector<double>& b = nodes_[n.args[1]].shadow;
            for (std::size_t j = 0; j < ga.size(); ++j) ga[j] *= b[j];
            accumulate_move(n.args[0], std::move(ga));
          }
          if (arg_needs_grad(n.args[1])) {
            std::vector<double> gb = g;
            const std::vector<double>& a = nodes_[n.args[0]].shadow;
            for (std::size_t j = 0; j < gb.size(); ++j) gb[j] *= a[j];
            accumulate_move(n.args[1], std::move(gb));
          }
          break;
        }
        case Op::Sum: {
          if (!arg_needs_grad(n.args[0])) break;
          accumulate_move(n.args[0], std::vector<double>(nodes_[n.args[0]].shadow.size(), g[0]));
          break;
        }
        case Op::Relu: {
          if (!arg_needs_grad(n.args[0])) break;
          const std::vector<double>& x = nodes_[n.args[0]].shadow;
          std::vector<double> gx = g;
          for (std::size_t j = 0; j < gx.size(); ++j)
            if (x[j] <= 0.0) gx[j] = 0.0;
          accumulate_move(n.args[0], std::move(gx));
          break;
        }
        case Op::AvgPool2d: {
          if (!arg_needs_grad(n.args[0])) break;
          const Tensor& x = nodes_[n.args[0]].value;
          const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
          const int win = n.window, oh = h / win, ow = w / win;
          const double inv = 1.0 / (static_cast<double>(win) * win);
          std::vector<double> gx(x.numel(), 0.0);
          for (int ic = 0; ic < c; ++ic)
            for (int oy = 0; oy < oh; ++oy)
              for (int ox = 0; ox < ow; ++ox) {
                const double gv = g[(static_cast<std::size_t>(ic) * oh + oy) * ow + ox] * inv;
                for (int py = 0; py < win; ++py)
                  for (int px = 0; px < win; ++px)
                    gx[(static_cast<std::size_t>(ic) * h + oy * win + py) * w + ox * win + px] += gv;
              }
          accumulate_move(n.args[0], std::move(gx));
          break;
        }
        case Op::ZeroPad2d: {
          if (!arg_needs_grad(n.args[0])) break;
          const Tensor& x = nodes_[n.args[0]].value;
          const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
          const int oh = h + 2 * n.pad, ow = w + 2 * n.pad;
          std::vector<double> gx(x.numel(), 0.0);
          for (int ic = 0; ic < c; ++ic)
            for (int y = 0; y < h; ++y)
              for (int xx = 0; xx < w; ++xx)
                gx[(static_cast<std::size_t>(ic) * h + y) * w + xx] =
                    g[(static_cast<std::size_t>(ic) * oh + y + n.pad) * ow + xx + n.pad];
          accumulate_move(n.args[0], std::move(gx));
          break;
        }
        case Op::Conv2d: {
          const Node& nx = nodes_[n.args[0]];
          const Node& nw = nodes_[n.args[1]];
          const Tensor& x = nx.value;
          const Tensor& w = nw.value;
          const int c_in = x.dim(0), h = x.dim(1), wd = x.dim(2);
          const int c_out = w.dim(0), k = w.dim(2);
          const int s = n.stride;
          const int oh = (h - k) / s + 1, ow = (wd - k) / s + 1;
          const bool want_x = arg_needs_grad(n.args[0]);
          const bool want_w = arg_needs_grad(n.args[1]);
          std::vector<double> gx(want_x ? x.numel() : 0, 0.0);
          std::vector<double> gw(want_w ? w.numel() : 0, 0.0);
          for (int oc = 0; oc < c_out; ++oc)
            for (int oy = 0; oy < oh; ++oy)
              for (int ox = 0; ox < ow; ++ox) {
                const double gv = g[(static_cast<std::size_t>(oc) * oh + oy) * ow + ox];
                if (gv == 0.0) continue;
                for (int ic = 0; ic < c_in; ++ic)
                  for (int ky = 0; ky < k; ++ky) {
                    const std::size_t xoff = (static_cast<std::size_t>(ic) * h + oy * s + ky) * wd + ox * s;
                    const std::size_t woff = ((static_cast<std::size_t>(oc) * c_in + ic) * k + ky) * k;
                    if (want_x) {
                      double* gxr = gx.data() + xoff;
                      const double* wr = nw.shadow.data() + woff;
                      for (int kx = 0; kx < k; ++kx) gxr[kx] += gv * wr[kx];
                    }
                    if (want_w) {
                      double* gwr = gw.data() + woff;
                      const double* xr = nx.shadow.data() + xoff;
                      for (int kx = 0; kx < k; ++kx) gwr[kx] += gv * xr[kx];
                    }
                  }
              }
          if (want_x) accumulate_move(n.args[0], std::move(gx));
          if (want_w) accumulate_move(n.args[1], std::move(gw));
          break;
        }
        case Op::CosineSimilarity: {
          if (n.degenerate) break;
          const std::vector<double>& a = nodes_[n.args[0]].shadow;
          const std::vector<double>& b = nodes_[n.args[1]].shadow;
          const double gv = g[0];
          const double na = n.norm_a, nb = n.norm_b;
          const double sim = n.dot / (na * nb);
          if (arg_needs_grad(n.args[0])) {
            std::vector<double> ga(a.size());
            const double c1 = gv / (na * nb), c2 = gv * sim / (na * na);
            for (std::size_t j = 0; j < a.size(); ++j) ga[j] = c1 * b[j] - c2 * a[j];
            accumulate_move(n.args[0], std::move(ga));
          }
          if (arg_needs_grad(n.args[1])) {
            std::vector<double> gb(b.size());
            const double c1 = gv / (na * nb), c2 = gv * sim / (nb * nb);
            for (std::size_t j = 0; j < b.size(); ++j) gb[j] = c1 * a[j] - c2 * b[j];
            accumulate_move(n.args[1], std::move(gb));
          }
          break;
        }
      }
    }
    // Materialize zero gradients for marked leaves the output never reached.
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].op == Op::Leaf && nodes_[i].needs_grad && grads_[i].empty())
        grads_[i].assign(nodes_[i].value.numel(), 0.0);
    has_grads_ = true;
  }

  Tensor grad(Value v) const {
    if (!has_grads_) throw std::logic_error("grad: backward has not been run");
    const std::vector<double>& g = grads_.at(v.idx);
    if (g.empty() && node(v).value.numel() != 0) throw std::logic_error("grad: no gradient recorded for this node");
    return narrow(node(v).value.shape(), g);
  }

  std::size_t node_count() const { return nodes_.size(); }

  static constexpr double kNormFloor = 1e-12;

 private:
  struct Node {
    Op op = Op::Leaf;
    std::array<int, 2> args = {-1, -1};
    Tensor value;
    std::vector<double> shadow;
    bool needs_grad = false;
    int stride = 0;
    int window = 0;
    int pad = 0;
    double dot = 0.0, norm_a = 0.0, norm_b = 0.0;
    bool degenerate = false;
  };

  static Tensor narrow(const Shape& shape, const std::vector<double>& shadow) {
    Tensor t(shape);
    for (std::size_t i = 0; i < shadow.size(); ++i) t[i] = static_cast<float>(shadow[i]);
    return t;
  }

  Value push(Node n) {
    nodes_.push_back(std::move(n));
    return Value{static_cast<int>(nodes_.size()) - 1};
  }

  const Node& node(Value v) const { return nodes_.at(v.idx); }
  bool arg_needs_grad(int idx) const { return idx >= 0 && nodes_[idx].needs_grad; }

  void accumulate(int idx, const std::vector<double>& g) {
    if (!arg_needs_grad(idx)) return;
    if (grads_[idx].empty()) {
      grads_[idx] = g;
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) grads_[idx][i] += g[i];
    }
  }

  void accumulate_move(int idx, std::vector<double>&& g) {
    if (grads_[idx].empty()) {
      grads_[idx] = std::move(g);
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) grads_[idx][i] += g[i];
    }
  }

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  bool has_grads_ = false;
};

// A scalar loss together with its analytic gradient at a point, as one
// callable so the checker below stays independent of how the pair is built.
using DifferentiableLoss = std::function<std::pair<double, Tensor>(const Tensor&)>;

// Central finite differences against the analytic gradient. Relative error
// uses max(|analytic|, |numeric|, 1e-6) as the denominator; returns the
// worst coordinate.
inline double finite_difference_check(const DifferentiableLoss& f, const Tensor& point, double h = 1e-3) {
  if (h <= 0.0) throw std::invalid_argument("finite_difference_check: h must be positive");
  auto [value, analytic] = f(point);
  (void)value;
  if (!analytic.same_shape(point))
    throw std::invalid_argument("finite_difference_check: gradient shape " + shape_str(analytic.shape()) +
                                " does not match point " + shape_str(point.shape()));
  double worst = 0.0;
  for (std::size_t i = 0; i < point.numel(); ++i) {
    Tensor plus = point, minus = point;
    plus[i] = static_cast<float>(plus[i] + h);
    minus[i] = static_cast<float>(minus[i] - h);
    const double numeric = (f(plus).first - f(minus).first) / (2.0 * h);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace btc::ad
