#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "s2p/pipeline.hpp"
#include "s2p/telemetry.hpp"

using namespace s2p;

namespace {

TelemetryRecord rec(std::int64_t ts, double power) {
  TelemetryRecord r;
  r.timestamp = ts;
  r.power = power;
  r.gpu_util = 0.5;
  r.mem_util = 0.4;
  r.temperature = 40.0;
  r.job_count = 2;
  r.job_switch = 0;
  r.gpu_count = 4;
  return r;
}

std::vector<TelemetryRecord> minute_series(int n, double base_power = 100.0) {
  std::vector<TelemetryRecord> out;
  for (int i = 0; i < n; ++i) out.push_back(rec(i * 60, base_power + i));
  return out;
}

}  // namespace

TEST_CASE("csv round trip and malformed rows") {
  const auto records = minute_series(3);
  std::stringstream ss;
  write_csv(ss, records);
  const auto back = read_csv(ss);
  REQUIRE(back.size() == 3);
  CHECK(back[1].power == records[1].power);
  CHECK(back[2].timestamp == 120);

  std::stringstream bad("timestamp,power,gpu_util,mem_util,temp,job_count,job_switch,gpu_count\n"
                        "0,100,0.5,0.4,40,2,0,4\n"
                        "60,oops,0.5,0.4,40,2,0,4\n");
  CHECK_THROWS_WITH_AS(read_csv(bad), doctest::Contains("line 3"), std::runtime_error);

  std::stringstream wrong_header("a,b\n");
  CHECK_THROWS_AS(read_csv(wrong_header), std::runtime_error);
}

TEST_CASE("resample_1min aggregation") {
  SUBCASE("two records in one minute average power") {
    std::vector<TelemetryRecord> in{rec(0, 100), rec(30, 200)};
    const auto out = resample_1min(in);
    REQUIRE(out.size() == 1);
    CHECK(out[0].power == 150.0);
  }

  SUBCASE("already 1-min spaced input is unchanged") {
    const auto in = minute_series(5);
    const auto out = resample_1min(in);
    REQUIRE(out.size() == 5);
    for (int i = 0; i < 5; ++i) {
      CHECK(out[static_cast<std::size_t>(i)].timestamp == in[static_cast<std::size_t>(i)].timestamp);
      CHECK(out[static_cast<std::size_t>(i)].power == in[static_cast<std::size_t>(i)].power);
    }
  }

  SUBCASE("3-minute gap within max-gap forward fills two records") {
    std::vector<TelemetryRecord> in{rec(0, 100), rec(180, 400)};
    const auto out = resample_1min(in, 5);
    REQUIRE(out.size() == 4);
    CHECK(out[1].timestamp == 60);
    CHECK(out[1].power == 100.0);
    CHECK(out[2].timestamp == 120);
    CHECK(out[2].power == 100.0);
    CHECK(out[3].power == 400.0);
  }

  SUBCASE("gap beyond max-gap leaves a hole") {
    std::vector<TelemetryRecord> in{rec(0, 100), rec(600, 400)};
    const auto out = resample_1min(in, 5);
    REQUIRE(out.size() == 2);
    CHECK(out[1].timestamp - out[0].timestamp > kMinuteSeconds);
  }

  SUBCASE("job_switch ORs within a bucket, filled rows reset it") {
    std::vector<TelemetryRecord> in{rec(0, 100), rec(20, 100)};
    in[1].job_switch = 1;
    auto out = resample_1min(in);
    CHECK(out[0].job_switch == 1.0);

    std::vector<TelemetryRecord> gap{rec(0, 100), rec(120, 100)};
    gap[0].job_switch = 1;
    out = resample_1min(gap);
    REQUIRE(out.size() == 3);
    CHECK(out[1].job_switch == 0.0);
  }

  SUBCASE("unsorted input rejected, empty input passes through") {
    std::vector<TelemetryRecord> in{rec(120, 1), rec(0, 2)};
    CHECK_THROWS_AS(resample_1min(in), std::invalid_argument);
    CHECK(resample_1min({}).empty());
  }
}

TEST_CASE("scaler fit, transform, inverse") {
  std::vector<TelemetryRecord> train{rec(0, 2), rec(60, 4)};
  const Scaler s = fit_scaler(train);

  CHECK(s.transform(3.0, 0) == doctest::Approx(0.5));
  CHECK(s.transform(6.0, 0) == doctest::Approx(2.0));  // extrapolation allowed
  // constant channels (all other channels in this fixture) map to 0
  CHECK(s.transform(123.0, 1) == 0.0);

  for (double v : {2.0, 2.7, 4.0})
    CHECK(s.inverse(s.transform(v, 0), 0) == doctest::Approx(v).epsilon(1e-6));

  CHECK_THROWS_AS(fit_scaler({}), std::invalid_argument);
}

TEST_CASE("scaler fingerprint detects refit leakage") {
  const auto all = minute_series(100);
  std::vector<TelemetryRecord> train(all.begin(), all.begin() + 70);
  const Scaler train_only = fit_scaler(train);
  const Scaler leaky = fit_scaler(all);  // test split extends the power range
  CHECK(train_only.fingerprint() != leaky.fingerprint());
  CHECK(train_only.fingerprint() == fit_scaler(train).fingerprint());
}

TEST_CASE("chronological split") {
  SplitSpec spec;

  SUBCASE("100 records split 70/15/15") {
    const auto [train, val, test] = chronological_split(minute_series(100), spec);
    CHECK(train.size() == 70);
    CHECK(val.size() == 15);
    CHECK(test.size() == 15);
  }

  SUBCASE("10 records: floored train/val, remainder to test") {
    const auto [train, val, test] = chronological_split(minute_series(10), spec);
    CHECK(train.size() == 7);
    CHECK(val.size() == 1);
    CHECK(test.size() == 2);
  }

  SUBCASE("partitions are contiguous and time ordered") {
    const auto [train, val, test] = chronological_split(minute_series(50), spec);
    CHECK(train.back().timestamp < val.front().timestamp);
    CHECK(val.back().timestamp < test.front().timestamp);
  }

  SUBCASE("bad specs rejected") {
    CHECK_THROWS_AS(chronological_split(minute_series(2), spec), std::invalid_argument);
    SplitSpec bad{0.5, 0.3, 0.3};
    CHECK_THROWS_AS(chronological_split(minute_series(100), bad), std::invalid_argument);
  }
}

TEST_CASE("make_windows counts and alignment") {
  const int L = 6, H = 3;

  SUBCASE("series of exactly L+H yields one window") {
    const auto w = make_windows(minute_series(L + H), L, H);
    CHECK(w.size() == 1);
  }

  SUBCASE("series of L+H+4 yields 5 windows at stride 1") {
    CHECK(make_windows(minute_series(L + H + 4), L, H).size() == 5);
  }

  SUBCASE("stride 2 keeps ceil(count/2) windows") {
    CHECK(make_windows(minute_series(L + H + 4), L, H, 2).size() == 3);
  }

  SUBCASE("too-short series yields empty list, not an error") {
    CHECK(make_windows(minute_series(L + H - 1), L, H).empty());
  }

  SUBCASE("anchor and label alignment") {
    const auto series = minute_series(L + H + 2);
    const auto w = make_windows(series, L, H);
    for (std::size_t i = 0; i < w.size(); ++i) {
      CHECK(w[i].anchor == w[i].history_load.back());
      // future_load[0] is exactly one step past the anchor record
      CHECK(w[i].future_load[0] ==
            doctest::Approx(series[i + L].power));
      CHECK(w[i].history_load[0] == doctest::Approx(series[i].power));
    }
  }

  SUBCASE("windows never span a timestamp hole") {
    auto series = minute_series(L + H);
    auto second = minute_series(L + H, 500.0);
    for (auto& r : second) r.timestamp += (L + H + 10) * 60;
    series.insert(series.end(), second.begin(), second.end());
    const auto w = make_windows(series, L, H);
    CHECK(w.size() == 2);  // one per contiguous run
    CHECK(w[1].history_load[0] == doctest::Approx(500.0));
  }

  SUBCASE("deterministic and order preserving") {
    const auto a = make_windows(minute_series(40), L, H);
    const auto b = make_windows(minute_series(40), L, H);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].anchor == b[i].anchor);
      if (i > 0) CHECK(a[i].anchor > a[i - 1].anchor);  // increasing fixture
    }
  }

  SUBCASE("time encodings add two feature columns") {
    const auto w = make_windows(minute_series(L + H), L, H, 1, true);
    REQUIRE(w.size() == 1);
    CHECK(w[0].feature_dim == kFeatureChannels + 2);
  }
}

TEST_CASE("prepare_dataset wires the pieces together") {
  PipelineOptions opt;
  opt.L = 6;
  opt.H = 3;
  auto series = minute_series(200);
  const auto d = prepare_dataset(series, opt);
  CHECK(d.train.size() > 0);
  CHECK(d.val.size() > 0);
  CHECK(d.test.size() > 0);
  CHECK(d.scaler_fingerprint == d.scaler.fingerprint());
  // training-split loads are normalized into [0,1]
  for (const auto& w : d.train)
    for (float v : w.history_load) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
}
