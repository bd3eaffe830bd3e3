#pragma once

// Deterministic regime-switching GPU-node telemetry generator: Markov
// switching between idle/ramp/burst power levels with bounded ramps and
// additive noise. job_switch flags regime changes one minute ahead so
// models have a usable leading signal.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "s2p/rng.hpp"
#include "s2p/telemetry.hpp"

namespace s2p {

struct SynthConfig {
  std::uint64_t seed = 0;
  int n_minutes = 20000;
  std::vector<double> levels = {200.0, 600.0, 1000.0};       // watts per regime
  std::vector<double> dwell_mean = {30.0, 10.0, 20.0};       // minutes per regime
  double ramp_rate = 60.0;    // max watts per minute toward the regime level
  double noise_std = 30.0;    // additive power noise (watts)
  double feature_noise = 0.06;
  std::int64_t start_timestamp = 1700000000 / 60 * 60;

  void validate() const {
    if (n_minutes < 1) throw std::invalid_argument("synth: n_minutes must be >= 1");
    if (levels.empty() || levels.size() != dwell_mean.size())
      throw std::invalid_argument("synth: levels/dwell_mean size mismatch");
    for (double l : levels)
      if (l <= 0) throw std::invalid_argument("synth: power levels must be positive");
    for (double d : dwell_mean)
      if (d < 1) throw std::invalid_argument("synth: dwell means must be >= 1 minute");
    if (ramp_rate <= 0) throw std::invalid_argument("synth: ramp_rate must be positive");
    if (noise_std < 0) throw std::invalid_argument("synth: noise_std must be >= 0");
  }
};

inline std::vector<TelemetryRecord> generate(const SynthConfig& cfg,
                                             std::vector<int>* regime_out = nullptr) {
  cfg.validate();
  RngState rng(cfg.seed);
  const auto n = static_cast<std::size_t>(cfg.n_minutes);
  const int n_regimes = static_cast<int>(cfg.levels.size());

  // Latent regime path with geometric dwell times.
  std::vector<int> regime(n);
  int current = 0;
  for (std::size_t t = 0; t < n; ++t) {
    regime[t] = current;
    if (n_regimes > 1) {
      const double p_switch = 1.0 / cfg.dwell_mean[static_cast<std::size_t>(current)];
      if (rng.uniform_d(0.0, 1.0) < p_switch) {
        int next = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(
                                        n_regimes - 1));
        if (next >= current) ++next;
        current = next;
      }
    }
  }

  double max_level = *std::max_element(cfg.levels.begin(), cfg.levels.end());
  std::vector<TelemetryRecord> out(n);
  double power = cfg.levels[static_cast<std::size_t>(regime[0])];
  double temp = 30.0 + 40.0 * power / max_level;
  for (std::size_t t = 0; t < n; ++t) {
    const double target = cfg.levels[static_cast<std::size_t>(regime[t])];
    if (t > 0) {
      const double delta = std::clamp(target - power, -cfg.ramp_rate, cfg.ramp_rate);
      power += delta;
    }
    const double noisy = std::max(0.0, power + rng.normal(0.0, cfg.noise_std));

    // job_switch leads the regime path by one minute. The other workload
    // indicators are noisy instantaneous couplings: a single reading is a
    // coarse hint, only averaging over history pins the regime down.
    const bool switching = t + 1 < n && regime[t + 1] != regime[t];

    // thermal inertia: temperature follows power with a first-order lag
    temp += 0.3 * ((30.0 + 40.0 * power / max_level) - temp);

    TelemetryRecord r;
    r.timestamp = cfg.start_timestamp + static_cast<std::int64_t>(t) * kMinuteSeconds;
    r.power = noisy;
    r.gpu_util = std::clamp(
        0.1 + 0.8 * power / max_level + rng.normal(0.0, cfg.feature_noise), 0.0, 1.0);
    r.mem_util = std::clamp(
        0.05 + 0.7 * target / max_level + rng.normal(0.0, cfg.feature_noise), 0.0, 1.0);
    r.temperature = temp + rng.normal(0.0, cfg.feature_noise * 40.0);
    r.job_count = std::max(
        0.0, std::round(target / 100.0 + rng.normal(0.0, cfg.feature_noise * 50.0)));
    r.job_switch = switching ? 1.0 : 0.0;
    r.gpu_count = 8.0;  // node-level GPU count, fixed per node
    out[t] = r;
  }
  if (regime_out != nullptr) *regime_out = std::move(regime);
  return out;
}

}  // namespace s2p
