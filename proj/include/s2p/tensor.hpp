#pragma once

// Dense FP32 tensors with reverse-mode automatic differentiation.
// Tensors are shared handles onto tape nodes; calling backward() on a
// scalar walks the recorded graph in reverse topological order and
// accumulates gradients into every reachable requires_grad tensor.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace s2p {

using Mat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using CMatMap = Eigen::Map<const Mat>;

class Tensor {
  struct Node {
    std::vector<int> shape;
    std::vector<float> data;
    std::vector<float> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<Tensor> parents;
    std::function<void(Node&)> backprop;

    std::size_t size() const { return data.size(); }
    void ensure_grad() {
      if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
    }
  };

 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
    return Tensor(std::move(shape), {}, requires_grad, true);
  }

  static Tensor from(std::vector<int> shape, std::vector<float> data,
                     bool requires_grad = false) {
    return Tensor(std::move(shape), std::move(data), requires_grad, false);
  }

  static Tensor scalar(float v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  bool defined() const { return n_ != nullptr; }
  const std::vector<int>& shape() const { return n_->shape; }
  int dim(int i) const { return n_->shape.at(static_cast<std::size_t>(i)); }
  int rank() const { return static_cast<int>(n_->shape.size()); }
  std::size_t size() const { return n_->size(); }

  std::vector<float>& data() { return n_->data; }
  const std::vector<float>& data() const { return n_->data; }
  float& at(std::size_t i) { return n_->data[i]; }
  float at(std::size_t i) const { return n_->data[i]; }

  bool requires_grad() const { return n_->requires_grad; }
  bool has_grad() const { return !n_->grad.empty(); }
  std::vector<float>& grad() {
    n_->ensure_grad();
    return n_->grad;
  }
  const std::vector<float>& grad() const {
    n_->ensure_grad();
    return n_->grad;
  }
  void zero_grad() {
    if (!n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), 0.0f);
  }

  float item() const {
    if (size() != 1) throw std::invalid_argument("item(): tensor is not scalar");
    return n_->data[0];
  }

  // Identity comparison (same tape node).
  bool same_node(const Tensor& o) const { return n_ == o.n_; }

  // Reverse-mode sweep from a scalar. Gradients accumulate; callers that
  // want fresh gradients must zero them first.
  void backward() const {
    if (size() != 1) throw std::invalid_argument("backward(): loss must be scalar");
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{n_.get(), 0}};
    seen.insert(n_.get());
    while (!stack.empty()) {
      auto& [node, idx] = stack.back();
      if (idx < node->parents.size()) {
        Node* p = node->parents[idx].n_.get();
        ++idx;
        if (seen.insert(p).second) stack.push_back({p, 0});
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
    // Interior nodes get fresh gradients per sweep; leaves (parameters,
    // constants) accumulate across sweeps until explicitly zeroed.
    for (Node* node : order)
      if (node->backprop) node->grad.assign(node->data.size(), 0.0f);
    n_->ensure_grad();
    n_->grad[0] += 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if ((*it)->backprop) (*it)->backprop(**it);
    }
  }

  friend Tensor add(const Tensor& a, const Tensor& b);
  friend Tensor sub(const Tensor& a, const Tensor& b);
  friend Tensor mul(const Tensor& a, const Tensor& b);
  friend Tensor scale(const Tensor& a, float c);
  friend Tensor add_rowvec(const Tensor& a, const Tensor& b);
  friend Tensor matmul(const Tensor& a, const Tensor& b);
  friend Tensor transpose(const Tensor& a);
  friend Tensor concat_cols(const std::vector<Tensor>& parts);
  friend Tensor softmax(const Tensor& x, int axis);
  friend Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                           float eps);
  friend Tensor gelu(const Tensor& x);
  friend Tensor relu(const Tensor& x);
  friend Tensor sum(const Tensor& x);

 private:
  Tensor(std::vector<int> shape, std::vector<float> data, bool requires_grad,
         bool fill_zero)
      : n_(std::make_shared<Node>()) {
    n_->shape = std::move(shape);
    std::size_t total = 1;
    for (int d : n_->shape) {
      if (d <= 0) throw std::invalid_argument("tensor dims must be positive");
      total *= static_cast<std::size_t>(d);
    }
    if (fill_zero) {
      n_->data.assign(total, 0.0f);
    } else {
      n_->data = std::move(data);
      if (n_->data.size() != total)
        throw std::invalid_argument("tensor data length does not match shape");
    }
    n_->requires_grad = requires_grad;
  }

  static Tensor make_result(std::vector<int> shape, std::vector<float> data,
                            std::vector<Tensor> parents,
                            std::function<void(Node&)> backprop) {
    Tensor out(std::move(shape), std::move(data), false, false);
    bool track = false;
    for (const auto& p : parents) track = track || p.n_->requires_grad || p.n_->backprop;
    if (track) {
      out.n_->requires_grad = true;
      out.n_->parents = std::move(parents);
      out.n_->backprop = std::move(backprop);
    }
    return out;
  }

  Node* node() const { return n_.get(); }

  std::shared_ptr<Node> n_;
};

namespace detail {

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

inline std::pair<int, int> as_2d(const Tensor& t) {
  if (t.rank() == 1) return {1, t.dim(0)};
  if (t.rank() == 2) return {t.dim(0), t.dim(1)};
  throw std::invalid_argument("operation requires rank 1 or 2 tensor");
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  auto* an = a.node();
  auto* bn = b.node();
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [an, bn](Tensor::Node& o) {
    if (an->requires_grad || an->backprop) {
      an->ensure_grad();
      for (std::size_t i = 0; i < o.size(); ++i) an->grad[i] += o.grad[i];
    }
    if (bn->requires_grad || bn->backprop) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < o.size(); ++i) bn->grad[i] += o.grad[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  auto* an = a.node();
  auto* bn = b.node();
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [an, bn](Tensor::Node& o) {
    if (an->requires_grad || an->backprop) {
      an->ensure_grad();
      for (std::size_t i = 0; i < o.size(); ++i) an->grad[i] += o.grad[i];
    }
    if (bn->requires_grad || bn->backprop) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < o.size(); ++i) bn->grad[i] -= o.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  auto* an = a.node();
  auto* bn = b.node();
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [an, bn](Tensor::Node& o) {
    if (an->requires_grad || an->backprop) {
      an->ensure_grad();
      for (std::size_t i = 0; i < o.size(); ++i) an->grad[i] += o.grad[i] * bn->data[i];
    }
    if (bn->requires_grad || bn->backprop) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < o.size(); ++i) bn->grad[i] += o.grad[i] * an->data[i];
    }
  });
}

inline Tensor scale(const Tensor& a, float c) {
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * c;
  auto* an = a.node();
  return Tensor::make_result(a.shape(), std::move(out), {a}, [an, c](Tensor::Node& o) {
    an->ensure_grad();
    for (std::size_t i = 0; i < o.size(); ++i) an->grad[i] += o.grad[i] * c;
  });
}

// Broadcast-add a length-n vector onto every row of an [m, n] matrix.
inline Tensor add_rowvec(const Tensor& a, const Tensor& b) {
  auto [m, n] = detail::as_2d(a);
  if (b.size() != static_cast<std::size_t>(n))
    throw std::invalid_argument("add_rowvec: vector length must match columns");
  std::vector<float> out(a.size());
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < n; ++c)
      out[static_cast<std::size_t>(r) * n + c] =
          a.at(static_cast<std::size_t>(r) * n + c) + b.at(static_cast<std::size_t>(c));
  auto* an = a.node();
  auto* bn = b.node();
  return Tensor::make_result(a.shape(), std::move(out), {a, b},
                             [an, bn, m, n](Tensor::Node& o) {
                               if (an->requires_grad || an->backprop) {
                                 an->ensure_grad();
                                 for (std::size_t i = 0; i < o.size(); ++i)
                                   an->grad[i] += o.grad[i];
                               }
                               if (bn->requires_grad || bn->backprop) {
                                 bn->ensure_grad();
                                 for (int r = 0; r < m; ++r)
                                   for (int c = 0; c < n; ++c)
                                     bn->grad[static_cast<std::size_t>(c)] +=
                                         o.grad[static_cast<std::size_t>(r) * n + c];
                               }
                             });
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw std::invalid_argument("matmul: both operands must be rank 2");
  const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2) throw std::invalid_argument("matmul: inner dimensions disagree");
  std::vector<float> out(static_cast<std::size_t>(m) * n);
  CMatMap A(a.data().data(), m, k), B(b.data().data(), k, n);
  MatMap(out.data(), m, n).noalias() = A * B;
  auto* an = a.node();
  auto* bn = b.node();
  return Tensor::make_result({m, n}, std::move(out), {a, b},
                             [an, bn, m, k, n](Tensor::Node& o) {
                               CMatMap dC(o.grad.data(), m, n);
                               if (an->requires_grad || an->backprop) {
                                 an->ensure_grad();
                                 CMatMap B(bn->data.data(), k, n);
                                 MatMap(an->grad.data(), m, k).noalias() +=
                                     dC * B.transpose();
                               }
                               if (bn->requires_grad || bn->backprop) {
                                 bn->ensure_grad();
                                 CMatMap A(an->data.data(), m, k);
                                 MatMap(bn->grad.data(), k, n).noalias() +=
                                     A.transpose() * dC;
                               }
                             });
}

inline Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw std::invalid_argument("transpose: rank 2 required");
  const int m = a.dim(0), n = a.dim(1);
  std::vector<float> out(a.size());
  MatMap(out.data(), n, m) = CMatMap(a.data().data(), m, n).transpose();
  auto* an = a.node();
  return Tensor::make_result({n, m}, std::move(out), {a}, [an, m, n](Tensor::Node& o) {
    an->ensure_grad();
    MatMap(an->grad.data(), m, n) += CMatMap(o.grad.data(), n, m).transpose();
  });
}

// Column-wise concatenation of [m, n_i] matrices.
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const int m = parts.front().dim(0);
  int n = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != m)
      throw std::invalid_argument("concat_cols: row counts disagree");
    n += p.dim(1);
  }
  std::vector<float> out(static_cast<std::size_t>(m) * n);
  int col = 0;
  for (const auto& p : parts) {
    const int w = p.dim(1);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < w; ++c)
        out[static_cast<std::size_t>(r) * n + col + c] =
            p.at(static_cast<std::size_t>(r) * w + c);
    col += w;
  }
  std::vector<int> widths;
  for (const auto& p : parts) widths.push_back(p.dim(1));
  auto parents = parts;
  return Tensor::make_result(
      {m, n}, std::move(out), parents, [parents, widths, m, n](Tensor::Node& o) {
        int col = 0;
        for (std::size_t i = 0; i < parents.size(); ++i) {
          auto* pn = parents[i].node();
          const int w = widths[i];
          if (pn->requires_grad || pn->backprop) {
            pn->ensure_grad();
            for (int r = 0; r < m; ++r)
              for (int c = 0; c < w; ++c)
                pn->grad[static_cast<std::size_t>(r) * w + c] +=
                    o.grad[static_cast<std::size_t>(r) * n + col + c];
          }
          col += w;
        }
      });
}

// Max-subtracted softmax along `axis` (-1 means last). Rank 1 or 2.
inline Tensor softmax(const Tensor& x, int axis = -1) {
  auto [m, n] = detail::as_2d(x);
  if (axis == -1) axis = x.rank() - 1;
  bool over_cols = (x.rank() == 2 && axis == 0);
  if (!over_cols && axis != x.rank() - 1)
    throw std::invalid_argument("softmax: bad axis");
  const int slices = over_cols ? n : m;
  const int len = over_cols ? m : n;
  const int step = over_cols ? n : 1;
  if (len == 0) throw std::invalid_argument("softmax: empty axis");
  std::vector<float> out(x.size());
  for (int s = 0; s < slices; ++s) {
    const std::size_t base = over_cols ? static_cast<std::size_t>(s)
                                       : static_cast<std::size_t>(s) * n;
    float mx = x.at(base);
    for (int i = 1; i < len; ++i) mx = std::max(mx, x.at(base + i * step));
    float z = 0.0f;
    for (int i = 0; i < len; ++i) {
      const float e = std::exp(x.at(base + i * step) - mx);
      out[base + i * step] = e;
      z += e;
    }
    for (int i = 0; i < len; ++i) out[base + i * step] /= z;
  }
  auto* xn = x.node();
  auto shape = x.shape();
  return Tensor::make_result(
      shape, std::move(out), {x}, [xn, slices, len, step, n](Tensor::Node& o) {
        xn->ensure_grad();
        const bool over_cols = step != 1;
        for (int s = 0; s < slices; ++s) {
          const std::size_t base = over_cols ? static_cast<std::size_t>(s)
                                             : static_cast<std::size_t>(s) * n;
          float dot = 0.0f;
          for (int i = 0; i < len; ++i)
            dot += o.data[base + i * step] * o.grad[base + i * step];
          for (int i = 0; i < len; ++i)
            xn->grad[base + i * step] +=
                o.data[base + i * step] * (o.grad[base + i * step] - dot);
        }
      });
}

// Per-row standardization over the last dimension, then affine gain/bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         float eps = 1e-5f) {
  auto [m, d] = detail::as_2d(x);
  if (gain.size() != static_cast<std::size_t>(d) ||
      bias.size() != static_cast<std::size_t>(d))
    throw std::invalid_argument("layer_norm: gain/bias length must match last dim");
  std::vector<float> out(x.size());
  std::vector<float> xhat(x.size());
  std::vector<float> inv_sigma(static_cast<std::size_t>(m));
  for (int r = 0; r < m; ++r) {
    const std::size_t base = static_cast<std::size_t>(r) * d;
    float mu = 0.0f;
    for (int c = 0; c < d; ++c) mu += x.at(base + c);
    mu /= static_cast<float>(d);
    float var = 0.0f;
    for (int c = 0; c < d; ++c) {
      const float v = x.at(base + c) - mu;
      var += v * v;
    }
    var /= static_cast<float>(d);
    const float is = 1.0f / std::sqrt(var + eps);
    inv_sigma[static_cast<std::size_t>(r)] = is;
    for (int c = 0; c < d; ++c) {
      xhat[base + c] = (x.at(base + c) - mu) * is;
      out[base + c] = gain.at(static_cast<std::size_t>(c)) * xhat[base + c] +
                      bias.at(static_cast<std::size_t>(c));
    }
  }
  auto* xn = x.node();
  auto* gn = gain.node();
  auto* bn = bias.node();
  auto shape = x.shape();
  return Tensor::make_result(
      shape, std::move(out), {x, gain, bias},
      [xn, gn, bn, m, d, xhat = std::move(xhat),
       inv_sigma = std::move(inv_sigma)](Tensor::Node& o) {
        for (int r = 0; r < m; ++r) {
          const std::size_t base = static_cast<std::size_t>(r) * d;
          float mean_dxh = 0.0f, mean_dxh_xh = 0.0f;
          for (int c = 0; c < d; ++c) {
            const float dxh = o.grad[base + c] * gn->data[static_cast<std::size_t>(c)];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xhat[base + c];
          }
          mean_dxh /= static_cast<float>(d);
          mean_dxh_xh /= static_cast<float>(d);
          if (xn->requires_grad || xn->backprop) {
            xn->ensure_grad();
            const float is = inv_sigma[static_cast<std::size_t>(r)];
            for (int c = 0; c < d; ++c) {
              const float dxh = o.grad[base + c] * gn->data[static_cast<std::size_t>(c)];
              xn->grad[base + c] +=
                  is * (dxh - mean_dxh - xhat[base + c] * mean_dxh_xh);
            }
          }
          if (gn->requires_grad || gn->backprop) {
            gn->ensure_grad();
            for (int c = 0; c < d; ++c)
              gn->grad[static_cast<std::size_t>(c)] += o.grad[base + c] * xhat[base + c];
          }
          if (bn->requires_grad || bn->backprop) {
            bn->ensure_grad();
            for (int c = 0; c < d; ++c)
              bn->grad[static_cast<std::size_t>(c)] += o.grad[base + c];
          }
        }
      });
}

namespace detail {
// tanh approximation constants
constexpr float kGeluC = 0.7978845608028654f;  // sqrt(2/pi)
constexpr float kGeluA = 0.044715f;
}  // namespace detail

inline Tensor gelu(const Tensor& x) {
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float v = x.at(i);
    out[i] = 0.5f * v *
             (1.0f + std::tanh(detail::kGeluC * (v + detail::kGeluA * v * v * v)));
  }
  auto* xn = x.node();
  return Tensor::make_result(x.shape(), std::move(out), {x}, [xn](Tensor::Node& o) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < o.size(); ++i) {
      const float v = xn->data[i];
      const float u = detail::kGeluC * (v + detail::kGeluA * v * v * v);
      const float t = std::tanh(u);
      const float du = detail::kGeluC * (1.0f + 3.0f * detail::kGeluA * v * v);
      xn->grad[i] += o.grad[i] * (0.5f * (1.0f + t) + 0.5f * v * (1.0f - t * t) * du);
    }
  });
}

inline Tensor relu(const Tensor& x) {
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0f, x.at(i));
  auto* xn = x.node();
  return Tensor::make_result(x.shape(), std::move(out), {x}, [xn](Tensor::Node& o) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < o.size(); ++i)
      if (xn->data[i] > 0.0f) xn->grad[i] += o.grad[i];
  });
}

inline Tensor sum(const Tensor& x) {
  float s = 0.0f;
  for (std::size_t i = 0; i < x.size(); ++i) s += x.at(i);
  auto* xn = x.node();
  return Tensor::make_result({1}, {s}, {x}, [xn](Tensor::Node& o) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < xn->data.size(); ++i) xn->grad[i] += o.grad[0];
  });
}

inline bool all_finite(const Tensor& t) {
  for (std::size_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(t.at(i))) return false;
  return true;
}

}  // namespace s2p
