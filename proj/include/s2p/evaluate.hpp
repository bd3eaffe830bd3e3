#pragma once

// Accuracy metrics on normalized targets (reported as percent, i.e. x100)
// and test-trace export for plotting.

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2p/pipeline.hpp"
#include "s2p/student.hpp"
#include "s2p/teacher.hpp"

namespace s2p {

struct EvalReport {
  double mae_pct = 0.0;
  double rmse_pct = 0.0;
  std::size_t n_samples = 0;
  std::string mode;

  nlohmann::json to_json() const {
    return {{"mae_pct", mae_pct},
            {"rmse_pct", rmse_pct},
            {"n_samples", n_samples},
            {"mode", mode}};
  }
};

namespace detail {

inline EvalReport finish_report(double abs_sum, double sq_sum, std::size_t n,
                                std::string mode) {
  if (n == 0) throw std::invalid_argument("evaluation: empty test set");
  EvalReport r;
  r.n_samples = n;
  r.mode = std::move(mode);
  r.mae_pct = 100.0 * abs_sum / static_cast<double>(n);
  r.rmse_pct = 100.0 * std::sqrt(sq_sum / static_cast<double>(n));
  if (r.rmse_pct + 1e-12 < r.mae_pct)
    throw std::logic_error("evaluation: RMSE < MAE, metric accumulation broken");
  return r;
}

}  // namespace detail

inline EvalReport eval_one_step(const TeacherModel& model,
                                const std::vector<Window>& windows) {
  double abs_sum = 0.0, sq_sum = 0.0;
  for (const auto& w : windows) {
    const double err = static_cast<double>(predict_trajectory(model, w).absolute[0]) -
                       static_cast<double>(w.future_load[0]);
    abs_sum += std::abs(err);
    sq_sum += err * err;
  }
  return detail::finish_report(abs_sum, sq_sum, windows.size(), "one-step");
}

inline EvalReport eval_one_step(const StudentModel& model,
                                const std::vector<Window>& windows) {
  double abs_sum = 0.0, sq_sum = 0.0;
  std::vector<float> v;
  for (const auto& w : windows) {
    v.assign(static_cast<std::size_t>(1 + w.feature_dim), 0.0f);
    v[0] = w.anchor;
    for (int f = 0; f < w.feature_dim; ++f)
      v[static_cast<std::size_t>(1 + f)] = w.feat(w.history_len - 1, f);
    const double err = static_cast<double>(student_infer_absolute(model, v, w.anchor)) -
                       static_cast<double>(w.future_load[0]);
    abs_sum += std::abs(err);
    sq_sum += err * err;
  }
  return detail::finish_report(abs_sum, sq_sum, windows.size(), "one-step");
}

// Errors pooled over all H horizon steps of every window.
inline EvalReport eval_trajectory(const TeacherModel& model,
                                  const std::vector<Window>& windows) {
  double abs_sum = 0.0, sq_sum = 0.0;
  std::size_t n = 0;
  for (const auto& w : windows) {
    const auto traj = predict_trajectory(model, w);
    for (int h = 0; h < w.horizon; ++h) {
      const double err = static_cast<double>(traj.absolute[static_cast<std::size_t>(h)]) -
                         static_cast<double>(w.future_load[static_cast<std::size_t>(h)]);
      abs_sum += std::abs(err);
      sq_sum += err * err;
      ++n;
    }
  }
  return detail::finish_report(abs_sum, sq_sum, n, "trajectory");
}

// Pure recursive rolling over H steps per window, features held constant.
inline EvalReport eval_student_rolling(const StudentModel& model,
                                       const std::vector<Window>& windows) {
  double abs_sum = 0.0, sq_sum = 0.0;
  std::size_t n = 0;
  for (const auto& w : windows) {
    std::vector<float> feats(static_cast<std::size_t>(w.feature_dim));
    for (int f = 0; f < w.feature_dim; ++f)
      feats[static_cast<std::size_t>(f)] = w.feat(w.history_len - 1, f);
    const auto preds = rolling_forecast(model, w.anchor, feats, w.horizon);
    for (int h = 0; h < w.horizon; ++h) {
      const double err = static_cast<double>(preds[static_cast<std::size_t>(h)]) -
                         static_cast<double>(w.future_load[static_cast<std::size_t>(h)]);
      abs_sum += std::abs(err);
      sq_sum += err * err;
      ++n;
    }
  }
  return detail::finish_report(abs_sum, sq_sum, n, "rolling");
}

// Plottable trace over the first n_steps test windows: `t,truth,pred`.
// Student predictions re-anchor on the observed load each step.
template <typename Predict>
void export_trace(const std::vector<Window>& windows, int n_steps,
                  const std::string& path, Predict&& predict) {
  if (static_cast<int>(windows.size()) < n_steps)
    throw std::invalid_argument("export_trace: segment shorter than n_steps");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_trace: cannot write " + path);
  out.precision(9);
  out << "t,truth,pred\n";
  for (int t = 0; t < n_steps; ++t) {
    const auto& w = windows[static_cast<std::size_t>(t)];
    out << t << ',' << w.future_load[0] << ',' << predict(w) << '\n';
  }
}

inline void export_trace(const TeacherModel& model, const std::vector<Window>& windows,
                         int n_steps, const std::string& path) {
  export_trace(windows, n_steps, path, [&model](const Window& w) {
    return predict_trajectory(model, w).absolute[0];
  });
}

inline void export_trace(const StudentModel& model, const std::vector<Window>& windows,
                         int n_steps, const std::string& path) {
  export_trace(windows, n_steps, path, [&model](const Window& w) {
    std::vector<float> v(static_cast<std::size_t>(1 + w.feature_dim));
    v[0] = w.anchor;
    for (int f = 0; f < w.feature_dim; ++f)
      v[static_cast<std::size_t>(1 + f)] = w.feat(w.history_len - 1, f);
    return student_infer_absolute(model, v, w.anchor);
  });
}

}  // namespace s2p
