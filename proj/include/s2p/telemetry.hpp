#pragma once

#include <charconv>
#include <cstdint>
#include <limits>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace s2p {

inline constexpr std::int64_t kMinuteSeconds = 60;

// One node-telemetry sample. `power` is the forecasting target; the
// remaining channels form the exogenous feature vector.
struct TelemetryRecord {
  std::int64_t timestamp = 0;  // epoch seconds
  double power = 0.0;          // watts
  double gpu_util = 0.0;       // [0,1]
  double mem_util = 0.0;       // [0,1]
  double temperature = 0.0;    // degrees C
  double job_count = 0.0;
  double job_switch = 0.0;  // {0,1}
  double gpu_count = 0.0;
};

inline constexpr int kFeatureChannels = 6;  // everything but timestamp/power
inline constexpr const char* kCsvHeader =
    "timestamp,power,gpu_util,mem_util,temp,job_count,job_switch,gpu_count";

namespace detail {

inline double parse_double(std::string_view field, std::size_t line_no,
                           const char* name) {
  double v{};
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc{} || ptr != end)
    throw std::runtime_error("csv line " + std::to_string(line_no) + ": bad " +
                             name + " value '" + std::string(field) + "'");
  return v;
}

inline std::int64_t parse_i64(std::string_view field, std::size_t line_no,
                              const char* name) {
  std::int64_t v{};
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc{} || ptr != end)
    throw std::runtime_error("csv line " + std::to_string(line_no) + ": bad " +
                             name + " value '" + std::string(field) + "'");
  return v;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

inline std::vector<TelemetryRecord> read_csv(std::istream& in) {
  std::vector<TelemetryRecord> out;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line))
    throw std::runtime_error("csv: empty input, header row expected");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader)
    throw std::runtime_error("csv line 1: unexpected header '" + line + "'");
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 8)
      throw std::runtime_error("csv line " + std::to_string(line_no) +
                               ": expected 8 fields, got " + std::to_string(f.size()));
    TelemetryRecord r;
    r.timestamp = detail::parse_i64(f[0], line_no, "timestamp");
    r.power = detail::parse_double(f[1], line_no, "power");
    r.gpu_util = detail::parse_double(f[2], line_no, "gpu_util");
    r.mem_util = detail::parse_double(f[3], line_no, "mem_util");
    r.temperature = detail::parse_double(f[4], line_no, "temp");
    r.job_count = detail::parse_double(f[5], line_no, "job_count");
    r.job_switch = detail::parse_double(f[6], line_no, "job_switch");
    r.gpu_count = detail::parse_double(f[7], line_no, "gpu_count");
    out.push_back(r);
  }
  return out;
}

inline std::vector<TelemetryRecord> read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open csv file: " + path);
  return read_csv(in);
}

inline void write_csv(std::ostream& out, const std::vector<TelemetryRecord>& records) {
  out.precision(std::numeric_limits<double>::max_digits10);
  out << kCsvHeader << '\n';
  for (const auto& r : records) {
    out << r.timestamp << ',' << r.power << ',' << r.gpu_util << ',' << r.mem_util
        << ',' << r.temperature << ',' << r.job_count << ',' << r.job_switch << ','
        << r.gpu_count << '\n';
  }
}

inline void write_csv_file(const std::string& path,
                           const std::vector<TelemetryRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write csv file: " + path);
  write_csv(out, records);
}

}  // namespace s2p
