#pragma once

// Teacher training (trajectory MSE) and sequence-to-point distillation of
// the student: ground-truth MSE + logit alignment against a convex
// projection of the teacher trajectory + feature alignment against a
// learned linear projection of the teacher context vector.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "s2p/optim.hpp"
#include "s2p/pipeline.hpp"
#include "s2p/student.hpp"
#include "s2p/teacher.hpp"

namespace s2p {

// ---------------------------------------------------------------------------
// Distillation primitives

// w_h proportional to gamma^(h-1), normalized to sum 1.
inline std::vector<float> default_weights(int H, float gamma) {
  if (gamma <= 0.0f || gamma > 1.0f)
    throw std::invalid_argument("default_weights: gamma must be in (0, 1]");
  std::vector<float> w(static_cast<std::size_t>(H));
  double acc = 1.0, total = 0.0;
  for (int h = 0; h < H; ++h) {
    w[static_cast<std::size_t>(h)] = static_cast<float>(acc);
    total += acc;
    acc *= gamma;
  }
  for (auto& v : w) v = static_cast<float>(v / total);
  return w;
}

inline void validate_weights(const std::vector<float>& w, int H) {
  if (static_cast<int>(w.size()) != H)
    throw std::invalid_argument("projection weights: length must equal horizon");
  double total = 0.0;
  for (float v : w) {
    if (v < 0.0f) throw std::invalid_argument("projection weights: negative weight");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-6)
    throw std::invalid_argument("projection weights: must sum to 1");
}

// Soft target: convex combination of the teacher's absolute forecasts.
inline float convex_project(const TrajectoryForecast& traj,
                            const std::vector<float>& w) {
  validate_weights(w, static_cast<int>(traj.absolute.size()));
  double s = 0.0;
  for (std::size_t h = 0; h < w.size(); ++h)
    s += static_cast<double>(w[h]) * traj.absolute[h];
  return static_cast<float>(s);
}

inline Tensor logit_loss(const Tensor& student_absolute, float soft_target) {
  const Tensor err = sub(student_absolute, Tensor::from({1, 1}, {soft_target}));
  return sum(mul(err, err));
}

// || z_S - (W_t c_T + b_t) ||^2. c_T is detached teacher context; the
// projection parameters train jointly with the student.
inline Tensor feature_loss(const Tensor& z_student, const std::vector<float>& c_teacher,
                           const Tensor& w_proj, const Tensor& b_proj) {
  const Tensor c = Tensor::from({1, static_cast<int>(c_teacher.size())}, c_teacher);
  const Tensor z_teacher = add_rowvec(matmul(c, w_proj), b_proj);
  const Tensor err = sub(z_student, z_teacher);
  return sum(mul(err, err));
}

inline Tensor composite_loss(const Tensor& mse, const Tensor& logit, const Tensor& feat,
                             float lambda) {
  if (lambda < 0.0f || lambda > 1.0f)
    throw std::invalid_argument("composite_loss: lambda must be in [0, 1]");
  return add(add(mse, logit), scale(feat, lambda));
}

// ---------------------------------------------------------------------------
// Training loops

struct TrainOptions {
  AdamWConfig opt{};
  int epochs = 50;
  int batch = 64;
  int patience = 10;
  std::uint64_t seed = 0;
  // Validation one-step metrics are computed on at most this many evenly
  // spaced validation windows per epoch.
  int max_val_windows = 512;
};

struct DistillConfig {
  std::vector<float> weights;  // empty: default_weights(H, gamma)
  float gamma = 0.8f;
  float lambda = 0.1f;
  bool use_logit = true;
  bool cache_targets = true;
  TrainOptions train{};
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double val_mae = 0.0;
  double val_rmse = 0.0;
};

inline void write_metrics_csv(const std::string& path,
                              const std::vector<EpochMetrics>& history) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write metrics csv: " + path);
  out.precision(10);
  out << "epoch,train_loss,val_mae,val_rmse\n";
  for (const auto& m : history)
    out << m.epoch << ',' << m.train_loss << ',' << m.val_mae << ',' << m.val_rmse
        << '\n';
}

namespace detail {

inline std::vector<std::size_t> subsample_indices(std::size_t n, int max_count) {
  std::vector<std::size_t> idx;
  if (n == 0) return idx;
  const auto cap = static_cast<std::size_t>(std::max(1, max_count));
  if (n <= cap) {
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
  } else {
    idx.reserve(cap);
    for (std::size_t i = 0; i < cap; ++i) idx.push_back(i * n / cap);
  }
  return idx;
}

inline void snapshot_params(const std::vector<Tensor>& params,
                            std::vector<std::vector<float>>& out) {
  out.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) out[i] = params[i].data();
}

inline void restore_params(std::vector<Tensor>& params,
                           const std::vector<std::vector<float>>& snap) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i].data() = snap[i];
}

// Accumulate |e| and e^2 over one-step errors produced by `predict`.
template <typename Predict>
std::pair<double, double> one_step_errors(const std::vector<Window>& windows,
                                          const std::vector<std::size_t>& idx,
                                          Predict&& predict) {
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i : idx) {
    const double err = static_cast<double>(predict(windows[i])) -
                       static_cast<double>(windows[i].future_load[0]);
    abs_sum += std::abs(err);
    sq_sum += err * err;
  }
  const auto n = static_cast<double>(idx.size());
  return {abs_sum / n, std::sqrt(sq_sum / n)};
}

}  // namespace detail

struct TeacherTrainResult {
  TeacherModel model;  // best-validation weights
  std::vector<EpochMetrics> history;
  int best_epoch = 0;
  // Last-epoch weights, kept so callers can persist both checkpoints.
  std::vector<std::vector<float>> final_params;
};

inline std::vector<float> student_input(const Window& w) {
  std::vector<float> v(static_cast<std::size_t>(1 + w.feature_dim));
  v[0] = w.anchor;
  for (int f = 0; f < w.feature_dim; ++f)
    v[static_cast<std::size_t>(1 + f)] = w.feat(w.history_len - 1, f);
  return v;
}

inline TeacherTrainResult train_teacher(const std::vector<Window>& train_windows,
                                        const std::vector<Window>& val_windows,
                                        const TeacherConfig& cfg,
                                        const TrainOptions& opt) {
  if (train_windows.empty())
    throw std::invalid_argument("train_teacher: no training windows");
  if (val_windows.empty())
    throw std::invalid_argument("train_teacher: no validation windows");
  RngState rng(opt.seed);
  TeacherModel model = TeacherModel::init(cfg, rng);
  auto params = model.parameters();
  AdamW optimizer(params, opt.opt);
  std::mt19937_64 shuffler(opt.seed ^ 0x9e3779b97f4a7c15ull);

  const auto val_idx =
      detail::subsample_indices(val_windows.size(), opt.max_val_windows);

  TeacherTrainResult result;
  std::vector<std::vector<float>> best;
  double best_mae = std::numeric_limits<double>::infinity();
  int since_best = 0;

  std::vector<std::size_t> order(train_windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffler);
    double loss_sum = 0.0;
    std::size_t pos = 0;
    while (pos < order.size()) {
      const std::size_t end = std::min(pos + static_cast<std::size_t>(opt.batch),
                                       order.size());
      const float inv_b = 1.0f / static_cast<float>(end - pos);
      optimizer.zero_grad();
      for (std::size_t i = pos; i < end; ++i) {
        const auto& w = train_windows[order[i]];
        const Tensor loss = teacher_loss(predict_trajectory(model, w), w);
        if (!std::isfinite(loss.item()))
          throw std::runtime_error("train_teacher: non-finite loss at epoch " +
                                   std::to_string(epoch));
        loss_sum += static_cast<double>(loss.item()) / static_cast<double>(order.size());
        scale(loss, inv_b).backward();
      }
      optimizer.step();
      pos = end;
    }

    auto [mae, rmse] = detail::one_step_errors(
        val_windows, val_idx, [&model](const Window& w) {
          return predict_trajectory(model, w).absolute[0];
        });
    result.history.push_back({epoch, loss_sum, mae, rmse});

    if (mae < best_mae) {
      best_mae = mae;
      result.best_epoch = epoch;
      detail::snapshot_params(params, best);
      since_best = 0;
    } else if (++since_best >= opt.patience) {
      break;
    }
  }
  detail::snapshot_params(params, result.final_params);
  if (!best.empty()) detail::restore_params(params, best);
  result.model = std::move(model);
  return result;
}

struct DistillResult {
  StudentModel model;  // best-validation weights
  std::vector<EpochMetrics> history;
  int best_epoch = 0;
  // Last-epoch weights (student only, no projection), for persistence.
  std::vector<std::vector<float>> final_params;
};

inline DistillResult distill_student(const std::vector<Window>& train_windows,
                                     const std::vector<Window>& val_windows,
                                     const TeacherModel& teacher,
                                     const StudentConfig& student_cfg,
                                     DistillConfig cfg) {
  if (train_windows.empty())
    throw std::invalid_argument("distill_student: no training windows");
  if (val_windows.empty())
    throw std::invalid_argument("distill_student: no validation windows");
  const int H = teacher.cfg.H;
  if (cfg.weights.empty()) cfg.weights = default_weights(H, cfg.gamma);
  validate_weights(cfg.weights, H);
  if (cfg.lambda < 0.0f || cfg.lambda > 1.0f)
    throw std::invalid_argument("distill_student: lambda must be in [0, 1]");
  const bool use_feature = cfg.lambda > 0.0f;
  const bool need_teacher = cfg.use_logit || use_feature;

  RngState rng(cfg.train.seed);
  StudentModel model = StudentModel::init(student_cfg, rng);
  Tensor w_proj = Tensor::zeros({teacher.cfg.d_m, student_cfg.d_z}, true);
  init_linear(w_proj, teacher.cfg.d_m, rng);
  Tensor b_proj = Tensor::zeros({student_cfg.d_z}, true);

  auto params = model.parameters();
  if (use_feature) {
    params.push_back(w_proj);
    params.push_back(b_proj);
  }
  AdamW optimizer(params, cfg.train.opt);
  std::mt19937_64 shuffler(cfg.train.seed ^ 0x9e3779b97f4a7c15ull);

  // Teacher targets from the frozen model; the forward is the only teacher
  // involvement, so values are detached constants.
  struct Target {
    float soft = 0.0f;
    std::vector<float> context;
  };
  std::vector<Target> cache;
  auto compute_target = [&](const Window& w) {
    const auto traj = predict_trajectory(teacher, w);
    Target t;
    t.soft = convex_project(traj, cfg.weights);
    t.context = traj.context.data();
    return t;
  };
  if (need_teacher && cfg.cache_targets) {
    cache.reserve(train_windows.size());
    for (const auto& w : train_windows) cache.push_back(compute_target(w));
  }

  const auto val_idx =
      detail::subsample_indices(val_windows.size(), cfg.train.max_val_windows);

  DistillResult result;
  std::vector<std::vector<float>> best;
  double best_mae = std::numeric_limits<double>::infinity();
  int since_best = 0;

  std::vector<std::size_t> order(train_windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffler);
    double loss_sum = 0.0;
    std::size_t pos = 0;
    while (pos < order.size()) {
      const std::size_t end = std::min(pos + static_cast<std::size_t>(cfg.train.batch),
                                       order.size());
      const float inv_b = 1.0f / static_cast<float>(end - pos);
      optimizer.zero_grad();
      for (std::size_t i = pos; i < end; ++i) {
        const auto& w = train_windows[order[i]];
        const auto v = student_input(w);
        const StudentOutput out = student_forward(model, v, w.anchor);
        const Tensor absolute =
            add(out.residual, Tensor::from({1, 1}, {w.anchor}));
        const Tensor err = sub(absolute, Tensor::from({1, 1}, {w.future_load[0]}));
        Tensor loss = sum(mul(err, err));
        if (need_teacher) {
          const Target t = cfg.cache_targets ? cache[order[i]] : compute_target(w);
          if (cfg.use_logit) loss = add(loss, logit_loss(absolute, t.soft));
          if (use_feature)
            loss = add(loss, scale(feature_loss(out.embedding, t.context, w_proj,
                                                b_proj),
                                   cfg.lambda));
        }
        if (!std::isfinite(loss.item()))
          throw std::runtime_error("distill_student: non-finite loss at epoch " +
                                   std::to_string(epoch));
        loss_sum += static_cast<double>(loss.item()) / static_cast<double>(order.size());
        scale(loss, inv_b).backward();
      }
      optimizer.step();
      pos = end;
    }

    auto [mae, rmse] = detail::one_step_errors(
        val_windows, val_idx, [&model](const Window& w) {
          const auto v = student_input(w);
          return student_infer_absolute(model, v, w.anchor);
        });
    result.history.push_back({epoch, loss_sum, mae, rmse});

    if (mae < best_mae) {
      best_mae = mae;
      result.best_epoch = epoch;
      detail::snapshot_params(params, best);
      since_best = 0;
    } else if (++since_best >= cfg.train.patience) {
      break;
    }
  }
  {
    auto model_params = model.parameters();
    detail::snapshot_params(model_params, result.final_params);
  }
  if (!best.empty()) detail::restore_params(params, best);
  result.model = std::move(model);
  return result;
}

// Overwrites a model's weights with a snapshot produced during training.
template <typename Model>
void apply_param_snapshot(Model& model, const std::vector<std::vector<float>>& snap) {
  auto params = model.parameters();
  if (snap.size() < params.size())
    throw std::invalid_argument("apply_param_snapshot: snapshot too short");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (snap[i].size() != params[i].size())
      throw std::invalid_argument("apply_param_snapshot: size mismatch");
    params[i].data() = snap[i];
  }
}

}  // namespace s2p
