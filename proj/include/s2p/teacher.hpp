#pragma once

// Encoder-only attention teacher: token embedding with fixed sinusoidal
// positions, post-norm encoder blocks (MHA + position-wise FFN with GELU),
// attention pooling, and a linear head producing an H-step residual
// trajectory anchored at the latest observed load.

#include <cassert>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "s2p/pipeline.hpp"
#include "s2p/rng.hpp"
#include "s2p/tensor.hpp"

namespace s2p {

struct TeacherConfig {
  int L = 360;       // history length
  int H = 15;        // prediction horizon
  int d_u = 7;       // token dim (load + features)
  int d_m = 64;      // model dim
  int n_layers = 2;  // encoder blocks
  int n_heads = 4;
  int d_ff = 128;

  int d_k() const { return d_m / n_heads; }

  void validate() const {
    if (L < 1 || H < 1 || d_u < 1 || d_m < 1 || n_layers < 1 || n_heads < 1 ||
        d_ff < 1)
      throw std::invalid_argument("teacher config: all dims must be >= 1");
    if (d_m % n_heads != 0)
      throw std::invalid_argument("teacher config: d_m must be divisible by n_heads");
  }

  // Closed-form parameter count over all declared weight shapes.
  std::size_t param_count() const {
    const std::size_t embed = static_cast<std::size_t>(d_u) * d_m + d_m;
    const std::size_t per_layer =
        3u * static_cast<std::size_t>(n_heads) * d_m * d_k()  // W^Q_k, W^K_k, W^V_k
        + static_cast<std::size_t>(d_m) * d_m                 // W^O
        + 4u * static_cast<std::size_t>(d_m)                  // two layer norms
        + static_cast<std::size_t>(d_m) * d_ff + d_ff         // FFN W1, b1
        + static_cast<std::size_t>(d_ff) * d_m + d_m;         // FFN W2, b2
    const std::size_t pool = static_cast<std::size_t>(d_m);
    const std::size_t head = static_cast<std::size_t>(d_m) * H + H;
    return embed + static_cast<std::size_t>(n_layers) * per_layer + pool + head;
  }
};

struct EncoderLayer {
  std::vector<Tensor> wq, wk, wv;  // per head, each [d_m, d_k]
  Tensor wo;                       // [d_m, d_m]
  Tensor ln1_gain, ln1_bias;       // [d_m]
  Tensor ln2_gain, ln2_bias;       // [d_m]
  Tensor w1, b1;                   // [d_m, d_ff], [d_ff]
  Tensor w2, b2;                   // [d_ff, d_m], [d_m]
};

// Fixed sinusoidal positional table, zero parameters.
inline Tensor sinusoidal_positions(int L, int d_m) {
  std::vector<float> p(static_cast<std::size_t>(L) * d_m);
  for (int pos = 0; pos < L; ++pos) {
    for (int i = 0; i < d_m; i += 2) {
      const double rate = std::pow(10000.0, static_cast<double>(i) / d_m);
      const double angle = static_cast<double>(pos) / rate;
      p[static_cast<std::size_t>(pos) * d_m + i] = static_cast<float>(std::sin(angle));
      if (i + 1 < d_m)
        p[static_cast<std::size_t>(pos) * d_m + i + 1] =
            static_cast<float>(std::cos(angle));
    }
  }
  return Tensor::from({L, d_m}, std::move(p));
}

struct TeacherModel {
  TeacherConfig cfg;
  Tensor w_in, b_in;  // [d_u, d_m], [d_m]
  Tensor positional;  // [L, d_m], fixed
  std::vector<EncoderLayer> layers;
  Tensor w_pool;        // [d_m, 1]
  Tensor w_out, b_out;  // [d_m, H], [H]

  static TeacherModel init(const TeacherConfig& cfg, RngState& rng) {
    cfg.validate();
    TeacherModel m;
    m.cfg = cfg;
    m.w_in = Tensor::zeros({cfg.d_u, cfg.d_m}, true);
    init_linear(m.w_in, cfg.d_u, rng);
    m.b_in = Tensor::zeros({cfg.d_m}, true);
    m.positional = sinusoidal_positions(cfg.L, cfg.d_m);
    const int dk = cfg.d_k();
    for (int l = 0; l < cfg.n_layers; ++l) {
      EncoderLayer layer;
      for (int k = 0; k < cfg.n_heads; ++k) {
        layer.wq.push_back(Tensor::zeros({cfg.d_m, dk}, true));
        layer.wk.push_back(Tensor::zeros({cfg.d_m, dk}, true));
        layer.wv.push_back(Tensor::zeros({cfg.d_m, dk}, true));
        init_linear(layer.wq.back(), cfg.d_m, rng);
        init_linear(layer.wk.back(), cfg.d_m, rng);
        init_linear(layer.wv.back(), cfg.d_m, rng);
      }
      layer.wo = Tensor::zeros({cfg.d_m, cfg.d_m}, true);
      init_linear(layer.wo, cfg.d_m, rng);
      layer.ln1_gain = Tensor::from({cfg.d_m},
                                    std::vector<float>(cfg.d_m, 1.0f), true);
      layer.ln1_bias = Tensor::zeros({cfg.d_m}, true);
      layer.ln2_gain = Tensor::from({cfg.d_m},
                                    std::vector<float>(cfg.d_m, 1.0f), true);
      layer.ln2_bias = Tensor::zeros({cfg.d_m}, true);
      layer.w1 = Tensor::zeros({cfg.d_m, cfg.d_ff}, true);
      init_linear(layer.w1, cfg.d_m, rng);
      layer.b1 = Tensor::zeros({cfg.d_ff}, true);
      layer.w2 = Tensor::zeros({cfg.d_ff, cfg.d_m}, true);
      init_linear(layer.w2, cfg.d_ff, rng);
      layer.b2 = Tensor::zeros({cfg.d_m}, true);
      m.layers.push_back(std::move(layer));
    }
    m.w_pool = Tensor::zeros({cfg.d_m, 1}, true);
    init_linear(m.w_pool, cfg.d_m, rng);
    m.w_out = Tensor::zeros({cfg.d_m, cfg.H}, true);
    init_linear(m.w_out, cfg.d_m, rng);
    m.b_out = Tensor::zeros({cfg.H}, true);
    return m;
  }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> p{w_in, b_in};
    for (const auto& l : layers) {
      for (const auto& t : l.wq) p.push_back(t);
      for (const auto& t : l.wk) p.push_back(t);
      for (const auto& t : l.wv) p.push_back(t);
      p.push_back(l.wo);
      p.push_back(l.ln1_gain);
      p.push_back(l.ln1_bias);
      p.push_back(l.ln2_gain);
      p.push_back(l.ln2_bias);
      p.push_back(l.w1);
      p.push_back(l.b1);
      p.push_back(l.w2);
      p.push_back(l.b2);
    }
    p.push_back(w_pool);
    p.push_back(w_out);
    p.push_back(b_out);
    return p;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.size();
    assert(n == cfg.param_count());
    return n;
  }
};

struct TrajectoryForecast {
  Tensor residuals;  // [1, H], differentiable
  Tensor context;    // [1, d_m]
  Tensor alpha;      // [1, L], pooling weights
  float anchor = 0.0f;
  std::vector<float> absolute;  // anchor + residual per horizon step
};

// u_tau = [P_tau; x_tau] per history step, normalized units.
inline Tensor build_tokens(const Window& w) {
  const int L = w.history_len;
  const int d_u = 1 + w.feature_dim;
  std::vector<float> tok(static_cast<std::size_t>(L) * d_u);
  for (int s = 0; s < L; ++s) {
    tok[static_cast<std::size_t>(s) * d_u] = w.history_load[static_cast<std::size_t>(s)];
    for (int f = 0; f < w.feature_dim; ++f)
      tok[static_cast<std::size_t>(s) * d_u + 1 + f] = w.feat(s, f);
  }
  return Tensor::from({L, d_u}, std::move(tok));
}

inline Tensor embed(const TeacherModel& m, const Tensor& tokens) {
  return add(add_rowvec(matmul(tokens, m.w_in), m.b_in), m.positional);
}

inline Tensor multi_head_attention(const EncoderLayer& layer, const Tensor& h,
                                   int d_k) {
  const float inv_sqrt_dk = 1.0f / std::sqrt(static_cast<float>(d_k));
  std::vector<Tensor> heads;
  heads.reserve(layer.wq.size());
  for (std::size_t k = 0; k < layer.wq.size(); ++k) {
    const Tensor q = matmul(h, layer.wq[k]);
    const Tensor key = matmul(h, layer.wk[k]);
    const Tensor v = matmul(h, layer.wv[k]);
    const Tensor scores = scale(matmul(q, transpose(key)), inv_sqrt_dk);
    heads.push_back(matmul(softmax(scores, -1), v));
  }
  return matmul(concat_cols(heads), layer.wo);
}

inline Tensor encoder_forward(const TeacherModel& m, Tensor h) {
  const int d_k = m.cfg.d_k();
  for (const auto& layer : m.layers) {
    h = layer_norm(add(h, multi_head_attention(layer, h, d_k)), layer.ln1_gain,
                   layer.ln1_bias);
    const Tensor ffn = add_rowvec(
        matmul(gelu(add_rowvec(matmul(h, layer.w1), layer.b1)), layer.w2), layer.b2);
    h = layer_norm(add(h, ffn), layer.ln2_gain, layer.ln2_bias);
  }
  return h;
}

// alpha = softmax over w_p . h_tau; c = sum alpha_tau h_tau.
inline std::pair<Tensor, Tensor> attention_pool(const TeacherModel& m,
                                                const Tensor& hN) {
  const Tensor scores = transpose(matmul(hN, m.w_pool));  // [1, L]
  const Tensor alpha = softmax(scores, -1);
  const Tensor context = matmul(alpha, hN);  // [1, d_m]
  return {context, alpha};
}

inline TrajectoryForecast predict_trajectory(const TeacherModel& m, const Window& w) {
  if (w.history_len != m.cfg.L || 1 + w.feature_dim != m.cfg.d_u)
    throw std::invalid_argument("predict_trajectory: window does not match config");
  const Tensor h0 = embed(m, build_tokens(w));
  const Tensor hN = encoder_forward(m, h0);
  auto [context, alpha] = attention_pool(m, hN);
  TrajectoryForecast f;
  f.residuals = add_rowvec(matmul(context, m.w_out), m.b_out);  // [1, H]
  f.context = context;
  f.alpha = alpha;
  f.anchor = w.anchor;
  f.absolute.resize(static_cast<std::size_t>(m.cfg.H));
  for (int h = 0; h < m.cfg.H; ++h)
    f.absolute[static_cast<std::size_t>(h)] =
        w.anchor + f.residuals.at(static_cast<std::size_t>(h));
  return f;
}

// (1/H) sum_h ((P_t + dP_h) - P_{t+h})^2, expressed on residual targets.
inline Tensor teacher_loss(const TrajectoryForecast& f, const Window& w) {
  const int H = w.horizon;
  if (static_cast<int>(f.residuals.size()) != H)
    throw std::invalid_argument("teacher_loss: horizon mismatch");
  std::vector<float> target(static_cast<std::size_t>(H));
  for (int h = 0; h < H; ++h)
    target[static_cast<std::size_t>(h)] =
        w.future_load[static_cast<std::size_t>(h)] - w.anchor;
  const Tensor err = sub(f.residuals, Tensor::from({1, H}, std::move(target)));
  return scale(sum(mul(err, err)), 1.0f / static_cast<float>(H));
}

}  // namespace s2p
