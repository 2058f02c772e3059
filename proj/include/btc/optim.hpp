#pragma once

#include <cmath>

#include "btc/tensor.hpp"

namespace btc {

struct AdamState {
  Tensor m, v;
  int step_count = 0;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps_hat = 1e-8f;
};

inline AdamState make_adam_state(const Shape& shape) {
  AdamState st;
  st.m = Tensor(shape);
  st.v = Tensor(shape);
  return st;
}

// One Adam update for a minimized loss: returns the signed step to ADD to
// the parameters (already negated).
inline Tensor adam_step(AdamState& st, const Tensor& grad, float alpha) {
  if (!st.m.same_shape(grad))
    throw std::invalid_argument("adam_step: gradient shape " + shape_str(grad.shape()) +
                                " does not match moment shape " + shape_str(st.m.shape()));
  st.step_count += 1;
  const float b1 = st.beta1, b2 = st.beta2;
  const float bias1 = 1.0f - std::pow(b1, static_cast<float>(st.step_count));
  const float bias2 = 1.0f - std::pow(b2, static_cast<float>(st.step_count));
  Tensor update(grad.shape());
  for (std::size_t i = 0; i < grad.numel(); ++i) {
    st.m[i] = b1 * st.m[i] + (1.0f - b1) * grad[i];
    st.v[i] = b2 * st.v[i] + (1.0f - b2) * grad[i] * grad[i];
    const float m_hat = st.m[i] / bias1;
    const float v_hat = st.v[i] / bias2;
    update[i] = -alpha * m_hat / (std::sqrt(v_hat) + st.eps_hat);
  }
  return update;
}

}  // namespace btc
