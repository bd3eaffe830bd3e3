#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "s2p/telemetry.hpp"

namespace s2p {


// ---------------------------------------------------------------------------
// Resampling

// Mean-aggregate continuous channels per minute bucket, OR job_switch,
// last-value job_count/gpu_count. Gaps of up to max_gap_minutes are
// forward-filled (job_switch reset to 0 in filled rows); longer gaps are
// left as holes, which downstream windowing treats as series boundaries.
inline std::vector<TelemetryRecord> resample_1min(
    const std::vector<TelemetryRecord>& records, int max_gap_minutes = 5) {
  if (records.empty()) return {};
  for (std::size_t i = 1; i < records.size(); ++i)
    if (records[i].timestamp < records[i - 1].timestamp)
      throw std::invalid_argument("resample_1min: records must be sorted by timestamp");

  std::vector<TelemetryRecord> out;
  std::size_t i = 0;
  while (i < records.size()) {
    const std::int64_t bucket = records[i].timestamp / kMinuteSeconds;
    TelemetryRecord agg;
    agg.timestamp = bucket * kMinuteSeconds;
    double n = 0;
    for (; i < records.size() && records[i].timestamp / kMinuteSeconds == bucket; ++i) {
      const auto& r = records[i];
      agg.power += r.power;
      agg.gpu_util += r.gpu_util;
      agg.mem_util += r.mem_util;
      agg.temperature += r.temperature;
      agg.job_switch = std::max(agg.job_switch, r.job_switch);
      agg.job_count = r.job_count;
      agg.gpu_count = r.gpu_count;
      n += 1.0;
    }
    agg.power /= n;
    agg.gpu_util /= n;
    agg.mem_util /= n;
    agg.temperature /= n;

    if (!out.empty()) {
      const std::int64_t prev_bucket = out.back().timestamp / kMinuteSeconds;
      const std::int64_t missing = bucket - prev_bucket - 1;
      if (missing > 0 && missing <= max_gap_minutes) {
        TelemetryRecord fill = out.back();
        fill.job_switch = 0.0;
        for (std::int64_t k = 1; k <= missing; ++k) {
          fill.timestamp = (prev_bucket + k) * kMinuteSeconds;
          out.push_back(fill);
        }
      }
    }
    out.push_back(agg);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Min-max scaler (train split only)

inline constexpr int kScalerChannels = 7;  // power + the 6 feature channels

struct Scaler {
  double lo[kScalerChannels] = {};
  double hi[kScalerChannels] = {};

  static double channel_of(const TelemetryRecord& r, int c) {
    switch (c) {
      case 0: return r.power;
      case 1: return r.gpu_util;
      case 2: return r.mem_util;
      case 3: return r.temperature;
      case 4: return r.job_count;
      case 5: return r.job_switch;
      case 6: return r.gpu_count;
      default: throw std::invalid_argument("scaler: bad channel");
    }
  }

  static void set_channel(TelemetryRecord& r, int c, double v) {
    switch (c) {
      case 0: r.power = v; break;
      case 1: r.gpu_util = v; break;
      case 2: r.mem_util = v; break;
      case 3: r.temperature = v; break;
      case 4: r.job_count = v; break;
      case 5: r.job_switch = v; break;
      case 6: r.gpu_count = v; break;
      default: throw std::invalid_argument("scaler: bad channel");
    }
  }

  // Constant channels map to 0 everywhere.
  double transform(double v, int c) const {
    const double span = hi[c] - lo[c];
    if (span == 0.0) return 0.0;
    return (v - lo[c]) / span;
  }

  double inverse(double v, int c) const {
    const double span = hi[c] - lo[c];
    if (span == 0.0) return lo[c];
    return v * span + lo[c];
  }

  // Stable identity over the fitted bounds, used to assert the scaler is
  // not refit after training-split fitting.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](double v) {
      std::uint64_t bits;
      static_assert(sizeof(bits) == sizeof(v));
      std::memcpy(&bits, &v, sizeof(bits));
      h ^= bits;
      h *= 1099511628211ull;
    };
    for (int c = 0; c < kScalerChannels; ++c) {
      mix(lo[c]);
      mix(hi[c]);
    }
    return h;
  }
};

inline Scaler fit_scaler(const std::vector<TelemetryRecord>& train) {
  if (train.empty()) throw std::invalid_argument("fit_scaler: empty training split");
  Scaler s;
  for (int c = 0; c < kScalerChannels; ++c) {
    s.lo[c] = Scaler::channel_of(train.front(), c);
    s.hi[c] = s.lo[c];
  }
  for (const auto& r : train) {
    for (int c = 0; c < kScalerChannels; ++c) {
      const double v = Scaler::channel_of(r, c);
      s.lo[c] = std::min(s.lo[c], v);
      s.hi[c] = std::max(s.hi[c], v);
    }
  }
  return s;
}

inline std::vector<TelemetryRecord> apply_scaler(
    const Scaler& s, const std::vector<TelemetryRecord>& records) {
  std::vector<TelemetryRecord> out = records;
  for (auto& r : out)
    for (int c = 0; c < kScalerChannels; ++c)
      Scaler::set_channel(r, c, s.transform(Scaler::channel_of(r, c), c));
  return out;
}

// ---------------------------------------------------------------------------
// Chronological split

struct SplitSpec {
  double train_frac = 0.70;
  double val_frac = 0.15;
  double test_frac = 0.15;

  void validate() const {
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
      throw std::invalid_argument("split: fractions must sum to 1");
    if (train_frac <= 0 || val_frac <= 0 || test_frac <= 0)
      throw std::invalid_argument("split: fractions must be positive");
  }
};

// Rounding rule: train and val sizes are floored, test takes the remainder.
inline std::tuple<std::vector<TelemetryRecord>, std::vector<TelemetryRecord>,
                  std::vector<TelemetryRecord>>
chronological_split(const std::vector<TelemetryRecord>& records, const SplitSpec& spec) {
  spec.validate();
  const std::size_t n = records.size();
  const auto n_train = static_cast<std::size_t>(
      std::floor(static_cast<double>(n) * spec.train_frac));
  const auto n_val =
      static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.val_frac));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n)
    throw std::invalid_argument("split: too few records for the given fractions");
  std::vector<TelemetryRecord> train(records.begin(), records.begin() + n_train);
  std::vector<TelemetryRecord> val(records.begin() + n_train,
                                   records.begin() + n_train + n_val);
  std::vector<TelemetryRecord> test(records.begin() + n_train + n_val, records.end());
  return {std::move(train), std::move(val), std::move(test)};
}

// ---------------------------------------------------------------------------
// Windowing

// One supervised sample: L normalized history steps and H future loads.
struct Window {
  int history_len = 0;
  int horizon = 0;
  int feature_dim = 0;                // d_x
  std::vector<float> history_load;    // [L]
  std::vector<float> history_feat;    // [L * d_x], row major
  float anchor = 0.0f;                // == history_load[L-1]
  std::vector<float> future_load;     // [H]

  float feat(int step, int f) const {
    return history_feat[static_cast<std::size_t>(step) * feature_dim + f];
  }
};

inline std::vector<float> feature_row(const TelemetryRecord& r, bool time_encodings) {
  std::vector<float> f = {static_cast<float>(r.gpu_util),
                          static_cast<float>(r.mem_util),
                          static_cast<float>(r.temperature),
                          static_cast<float>(r.job_count),
                          static_cast<float>(r.job_switch),
                          static_cast<float>(r.gpu_count)};
  if (time_encodings) {
    const double minute = static_cast<double>((r.timestamp / kMinuteSeconds) % 1440);
    const double phase = 2.0 * M_PI * minute / 1440.0;
    f.push_back(static_cast<float>(std::sin(phase)));
    f.push_back(static_cast<float>(std::cos(phase)));
  }
  return f;
}

// Slides anchors at the given stride over every contiguous 1-min run of
// the record list; windows never cross a timestamp hole.
inline std::vector<Window> make_windows(const std::vector<TelemetryRecord>& records,
                                        int L, int H, int stride = 1,
                                        bool time_encodings = false) {
  if (L < 1 || H < 1 || stride < 1)
    throw std::invalid_argument("make_windows: L, H, stride must be >= 1");
  std::vector<Window> out;
  const int d_x = kFeatureChannels + (time_encodings ? 2 : 0);
  std::size_t run_start = 0;
  auto flush_run = [&](std::size_t begin, std::size_t end) {
    const auto n = static_cast<std::ptrdiff_t>(end - begin);
    for (std::ptrdiff_t anchor = L - 1; anchor + H < n; anchor += stride) {
      // anchor + H <= n - 1, so the last future step stays inside the run
      Window w;
      w.history_len = L;
      w.horizon = H;
      w.feature_dim = d_x;
      w.history_load.resize(static_cast<std::size_t>(L));
      w.history_feat.resize(static_cast<std::size_t>(L) * d_x);
      for (int s = 0; s < L; ++s) {
        const auto& r = records[begin + static_cast<std::size_t>(anchor - L + 1 + s)];
        w.history_load[static_cast<std::size_t>(s)] = static_cast<float>(r.power);
        const auto row = feature_row(r, time_encodings);
        std::copy(row.begin(), row.end(),
                  w.history_feat.begin() + static_cast<std::size_t>(s) * d_x);
      }
      w.anchor = w.history_load.back();
      w.future_load.resize(static_cast<std::size_t>(H));
      for (int h = 1; h <= H; ++h)
        w.future_load[static_cast<std::size_t>(h - 1)] = static_cast<float>(
            records[begin + static_cast<std::size_t>(anchor + h)].power);
      out.push_back(std::move(w));
    }
  };
  for (std::size_t i = 1; i <= records.size(); ++i) {
    if (i == records.size() ||
        records[i].timestamp - records[i - 1].timestamp != kMinuteSeconds) {
      flush_run(run_start, i);
      run_start = i;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// End-to-end preparation

struct PipelineOptions {
  int L = 360;
  int H = 15;
  int stride = 1;
  int max_gap_minutes = 5;
  bool time_encodings = false;
  SplitSpec split{};
};

struct PreparedData {
  Scaler scaler;
  std::uint64_t scaler_fingerprint = 0;
  std::vector<TelemetryRecord> train_records;  // normalized
  std::vector<TelemetryRecord> val_records;
  std::vector<TelemetryRecord> test_records;
  std::vector<Window> train;
  std::vector<Window> val;
  std::vector<Window> test;
};

inline PreparedData prepare_dataset(const std::vector<TelemetryRecord>& raw,
                                    const PipelineOptions& opt) {
  const auto resampled = resample_1min(raw, opt.max_gap_minutes);
  auto [train_raw, val_raw, test_raw] = chronological_split(resampled, opt.split);
  PreparedData d;
  d.scaler = fit_scaler(train_raw);
  d.scaler_fingerprint = d.scaler.fingerprint();
  d.train_records = apply_scaler(d.scaler, train_raw);
  d.val_records = apply_scaler(d.scaler, val_raw);
  d.test_records = apply_scaler(d.scaler, test_raw);
  d.train = make_windows(d.train_records, opt.L, opt.H, opt.stride, opt.time_encodings);
  // Validation and test are evaluated at stride 1 regardless of training stride.
  d.val = make_windows(d.val_records, opt.L, opt.H, 1, opt.time_encodings);
  d.test = make_windows(d.test_records, opt.L, opt.H, 1, opt.time_encodings);
  if (d.train.empty())
    throw std::runtime_error("prepare_dataset: training split yields no windows");
  return d;
}

}  // namespace s2p
