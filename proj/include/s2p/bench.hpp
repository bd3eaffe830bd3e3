#pragma once

// Deployment-centric measurements: parameter count, FP32 parameter
// memory, serialized size, and single-threaded CPU latency (mean and
// nearest-rank p95) on a loaded checkpoint.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2p/checkpoint.hpp"
#include "s2p/rng.hpp"

namespace s2p {

struct BenchReport {
  std::string model_kind;
  std::size_t params = 0;
  double fp32_mem_kb = 0.0;
  double on_disk_kb = 0.0;
  double latency_mean_ms = 0.0;
  double latency_p95_ms = 0.0;
  int batch = 1;
  int warmup = 50;
  int iters = 1000;
  std::string thread_note = "single-threaded process, no worker threads spawned";

  nlohmann::json to_json() const {
    return {{"model_kind", model_kind},
            {"params", params},
            {"fp32_mem_kb", fp32_mem_kb},
            {"on_disk_kb", on_disk_kb},
            {"latency_mean_ms", latency_mean_ms},
            {"latency_p95_ms", latency_p95_ms},
            {"batch", batch},
            {"warmup", warmup},
            {"iters", iters},
            {"thread_note", thread_note}};
  }
};

inline std::uintmax_t measure_disk(const std::string& path) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw std::runtime_error("measure_disk: cannot stat " + path);
  return size;
}

// Nearest-rank percentile on a copy of the samples.
inline double nearest_rank_p95(std::vector<double> samples) {
  if (samples.empty()) throw std::invalid_argument("p95: no samples");
  std::sort(samples.begin(), samples.end());
  const auto rank = static_cast<std::size_t>(
      std::ceil(0.95 * static_cast<double>(samples.size())));
  return samples[rank - 1];
}

namespace detail {

template <typename Fn>
std::pair<double, double> time_loop(int warmup, int iters, Fn&& fn) {
  using clock = std::chrono::steady_clock;
  for (int i = 0; i < warmup; ++i) fn();
  std::vector<double> ms(static_cast<std::size_t>(iters));
  for (int i = 0; i < iters; ++i) {
    const auto t0 = clock::now();
    fn();
    const auto t1 = clock::now();
    ms[static_cast<std::size_t>(i)] =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  double mean = 0.0;
  for (double v : ms) mean += v;
  mean /= static_cast<double>(ms.size());
  return {mean, nearest_rank_p95(ms)};
}

}  // namespace detail

inline BenchReport bench_latency(const std::string& checkpoint_path, int batch = 1,
                                 int warmup = 50, int iters = 1000,
                                 std::uint64_t seed = 0) {
  if (iters < 100) throw std::invalid_argument("bench_latency: iters must be >= 100");
  if (batch < 1) throw std::invalid_argument("bench_latency: batch must be >= 1");
  BenchReport r;
  r.batch = batch;
  r.warmup = warmup;
  r.iters = iters;
  r.on_disk_kb = static_cast<double>(measure_disk(checkpoint_path)) / 1024.0;

  RngState rng(seed);
  volatile float sink = 0.0f;  // keeps the forward passes observable

  const ModelKind kind = checkpoint_kind(checkpoint_path);
  if (kind == ModelKind::student) {
    // Residual-head path only: the embed head is not part of deployment.
    const StudentModel m = load_student(checkpoint_path, /*skip_embed_head=*/true);
    r.model_kind = "student";
    r.params = m.cfg.param_count(true);  // trainable count includes the embed head
    std::vector<std::vector<float>> inputs(static_cast<std::size_t>(batch));
    for (auto& v : inputs) {
      v.resize(static_cast<std::size_t>(m.cfg.d_u));
      for (auto& x : v) x = rng.uniform(0.0f, 1.0f);
    }
    auto [mean, p95] = detail::time_loop(warmup, iters, [&] {
      for (const auto& v : inputs) sink = student_infer_residual(m, v);
    });
    r.latency_mean_ms = mean;
    r.latency_p95_ms = p95;
  } else {
    const TeacherModel m = load_teacher(checkpoint_path);
    r.model_kind = "teacher";
    r.params = m.param_count();
    std::vector<Window> inputs(static_cast<std::size_t>(batch));
    for (auto& w : inputs) {
      w.history_len = m.cfg.L;
      w.horizon = m.cfg.H;
      w.feature_dim = m.cfg.d_u - 1;
      w.history_load.resize(static_cast<std::size_t>(m.cfg.L));
      for (auto& x : w.history_load) x = rng.uniform(0.0f, 1.0f);
      w.history_feat.resize(static_cast<std::size_t>(m.cfg.L) * w.feature_dim);
      for (auto& x : w.history_feat) x = rng.uniform(0.0f, 1.0f);
      w.anchor = w.history_load.back();
      w.future_load.assign(static_cast<std::size_t>(m.cfg.H), 0.0f);
    }
    auto [mean, p95] = detail::time_loop(warmup, iters, [&] {
      for (const auto& w : inputs) sink = predict_trajectory(m, w).absolute[0];
    });
    r.latency_mean_ms = mean;
    r.latency_p95_ms = p95;
  }
  (void)sink;
  r.fp32_mem_kb = 4.0 * static_cast<double>(r.params) / 1024.0;
  return r;
}

}  // namespace s2p
