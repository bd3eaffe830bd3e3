#pragma once

// Point-wise two-layer MLP student. Consumes a single normalized step
// [P_t; x_t], emits a one-step residual and a small embedding used only
// during distillation. Deployment inference runs a tape-free float path.

#include <cassert>
#include <span>
#include <stdexcept>
#include <vector>

#include "s2p/rng.hpp"
#include "s2p/tensor.hpp"

namespace s2p {

struct StudentConfig {
  int d_u = 7;   // input dim
  int d_h = 64;  // hidden size
  int d_z = 16;  // embedding dim

  void validate() const {
    if (d_u < 1 || d_h < 1 || d_z < 1)
      throw std::invalid_argument("student config: all dims must be >= 1");
  }

  std::size_t param_count(bool include_embed_head = true) const {
    std::size_t n = static_cast<std::size_t>(d_u) * d_h + d_h  // layer 1
                    + static_cast<std::size_t>(d_h) * d_h + d_h  // layer 2
                    + static_cast<std::size_t>(d_h) + 1;         // residual head
    if (include_embed_head) n += static_cast<std::size_t>(d_h) * d_z + d_z;
    return n;
  }
};

struct StudentModel {
  StudentConfig cfg;
  Tensor w1, b1;  // [d_u, d_h], [d_h]
  Tensor w2, b2;  // [d_h, d_h], [d_h]
  Tensor wy, by;  // [d_h, 1], [1]
  Tensor wz, bz;  // [d_h, d_z], [d_z]; undefined when the embed head is skipped

  bool has_embed_head() const { return wz.defined(); }

  static StudentModel init(const StudentConfig& cfg, RngState& rng) {
    cfg.validate();
    StudentModel m;
    m.cfg = cfg;
    m.w1 = Tensor::zeros({cfg.d_u, cfg.d_h}, true);
    init_linear(m.w1, cfg.d_u, rng);
    m.b1 = Tensor::zeros({cfg.d_h}, true);
    m.w2 = Tensor::zeros({cfg.d_h, cfg.d_h}, true);
    init_linear(m.w2, cfg.d_h, rng);
    m.b2 = Tensor::zeros({cfg.d_h}, true);
    m.wy = Tensor::zeros({cfg.d_h, 1}, true);
    init_linear(m.wy, cfg.d_h, rng);
    m.by = Tensor::zeros({1}, true);
    m.wz = Tensor::zeros({cfg.d_h, cfg.d_z}, true);
    init_linear(m.wz, cfg.d_h, rng);
    m.bz = Tensor::zeros({cfg.d_z}, true);
    return m;
  }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> p{w1, b1, w2, b2, wy, by};
    if (has_embed_head()) {
      p.push_back(wz);
      p.push_back(bz);
    }
    return p;
  }

  std::size_t param_count(bool include_embed_head = true) const {
    std::size_t n = 0;
    for (const auto& p : parameters()) {
      if (!include_embed_head && (p.same_node(wz) || p.same_node(bz))) continue;
      n += p.size();
    }
    assert(!has_embed_head() || n == cfg.param_count(include_embed_head));
    return n;
  }
};

inline std::size_t count_params(const StudentModel& m, bool include_embed_head = true) {
  return m.param_count(include_embed_head);
}

inline std::size_t fp32_bytes(const StudentModel& m, bool include_embed_head = true) {
  return 4u * m.param_count(include_embed_head);
}

struct StudentOutput {
  Tensor residual;   // [1, 1]
  Tensor embedding;  // [1, d_z]
  float anchor = 0.0f;

  float absolute() const { return anchor + residual.item(); }
};

// Eqs-as-written forward on the tape: two affine+ReLU layers, then the
// residual and embedding heads. `anchor` is P_t in normalized units.
inline StudentOutput student_forward(const StudentModel& m,
                                     const std::vector<float>& v, float anchor) {
  if (static_cast<int>(v.size()) != m.cfg.d_u)
    throw std::invalid_argument("student_forward: input dim mismatch");
  const Tensor vin = Tensor::from({1, m.cfg.d_u}, v);
  const Tensor h = relu(add_rowvec(matmul(vin, m.w1), m.b1));
  const Tensor r = relu(add_rowvec(matmul(h, m.w2), m.b2));
  StudentOutput out;
  out.residual = add_rowvec(matmul(r, m.wy), m.by);
  if (m.has_embed_head()) out.embedding = add_rowvec(matmul(r, m.wz), m.bz);
  out.anchor = anchor;
  return out;
}

// Tape-free inference, residual head only. This is the deployed path the
// latency benchmark measures.
inline float student_infer_residual(const StudentModel& m, std::span<const float> v) {
  const int d_u = m.cfg.d_u;
  const int d_h = m.cfg.d_h;
  if (static_cast<int>(v.size()) != d_u)
    throw std::invalid_argument("student_infer_residual: input dim mismatch");
  std::vector<float> h(static_cast<std::size_t>(d_h));
  for (int j = 0; j < d_h; ++j) {
    float acc = m.b1.at(static_cast<std::size_t>(j));
    for (int i = 0; i < d_u; ++i)
      acc += v[static_cast<std::size_t>(i)] *
             m.w1.at(static_cast<std::size_t>(i) * d_h + j);
    h[static_cast<std::size_t>(j)] = acc > 0.0f ? acc : 0.0f;
  }
  std::vector<float> r(static_cast<std::size_t>(d_h));
  for (int j = 0; j < d_h; ++j) {
    float acc = m.b2.at(static_cast<std::size_t>(j));
    for (int i = 0; i < d_h; ++i)
      acc += h[static_cast<std::size_t>(i)] *
             m.w2.at(static_cast<std::size_t>(i) * d_h + j);
    r[static_cast<std::size_t>(j)] = acc > 0.0f ? acc : 0.0f;
  }
  float res = m.by.at(0);
  for (int i = 0; i < d_h; ++i)
    res += r[static_cast<std::size_t>(i)] * m.wy.at(static_cast<std::size_t>(i));
  return res;
}

inline float student_infer_absolute(const StudentModel& m, std::span<const float> v,
                                    float anchor) {
  return anchor + student_infer_residual(m, v);
}

// Recursive rolling: step i+1 feeds on the step-i forecast; exogenous
// features are held constant at their last observed values.
inline std::vector<float> rolling_forecast(const StudentModel& m, float load,
                                           std::span<const float> features, int steps) {
  if (steps < 1) throw std::invalid_argument("rolling_forecast: steps must be >= 1");
  if (static_cast<int>(features.size()) + 1 != m.cfg.d_u)
    throw std::invalid_argument("rolling_forecast: feature dim mismatch");
  std::vector<float> v(static_cast<std::size_t>(m.cfg.d_u));
  std::copy(features.begin(), features.end(), v.begin() + 1);
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(steps));
  float p = load;
  for (int s = 0; s < steps; ++s) {
    v[0] = p;
    p = p + student_infer_residual(m, v);
    out.push_back(p);
  }
  return out;
}

}  // namespace s2p
