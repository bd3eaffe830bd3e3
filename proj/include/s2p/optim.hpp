#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "s2p/tensor.hpp"

namespace s2p {

struct AdamWConfig {
  float lr = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 0.01f;
};

// AdamW with decoupled weight decay. Moment buffers are keyed by the
// parameter order given at construction; that order must stay fixed.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig cfg)
      : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
      m_.emplace_back(p.size(), 0.0f);
      v_.emplace_back(p.size(), 0.0f);
    }
  }

  std::int64_t step_count() const { return step_; }
  const AdamWConfig& config() const { return cfg_; }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  // One update from the gradients currently held by the parameters.
  void step() {
    ++step_;
    const float bc1 = 1.0f - std::pow(cfg_.beta1, static_cast<float>(step_));
    const float bc2 = 1.0f - std::pow(cfg_.beta2, static_cast<float>(step_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = params_[k];
      const auto& g = p.grad();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (!std::isfinite(g[i]))
          throw std::runtime_error("adamw_step: non-finite gradient encountered");
        m[i] = cfg_.beta1 * m[i] + (1.0f - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0f - cfg_.beta2) * g[i] * g[i];
        const float mhat = m[i] / bc1;
        const float vhat = v[i] / bc2;
        p.at(i) -= cfg_.lr * cfg_.weight_decay * p.at(i);
        p.at(i) -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

 private:
  std::vector<Tensor> params_;
  AdamWConfig cfg_;
  std::int64_t step_ = 0;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
};

}  // namespace s2p
