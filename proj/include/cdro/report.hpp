#pragma once

#include <cstdio>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "cdro/errors.hpp"
#include "cdro/solvers.hpp"
#include "json.hpp"

namespace cdro {

/// Field names of one trace record, in output order.
inline const std::vector<std::string>& trace_fields() {
  static const std::vector<std::string> f{"t",      "lambda", "eta", "grad_x_norm", "fw_gap",
                                          "gamma", "objective_estimate"};
  return f;
}

inline nlohmann::ordered_json to_json(const IterateRecord& r) {
  nlohmann::ordered_json j;
  j["t"] = r.t;
  j["lambda"] = r.lambda;
  j["eta"] = r.eta;
  j["grad_x_norm"] = r.grad_x_norm;
  j["fw_gap"] = r.fw_gap;
  j["gamma"] = r.gamma;
  j["objective_estimate"] = r.objective_estimate;
  return j;
}

/// Trailing moving average: entry t averages the last min(window, t+1)
/// values.
inline std::vector<double> moving_average(std::span<const double> v, std::size_t window) {
  if (window == 0) throw ConfigError("moving_average: window must be >= 1");
  std::vector<double> out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    sum += v[i];
    if (i >= window) sum -= v[i - window];
    out[i] = sum / static_cast<double>(std::min(window, i + 1));
  }
  return out;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  return out;
}

/// One JSON object per line.
inline void write_trace_jsonl(const std::string& path, const IterateTrace& trace) {
  auto out = open_output(path);
  for (const auto& r : trace) out << to_json(r).dump() << '\n';
}

/// Fixed-precision number formatting shared by every CSV writer.
inline std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// Minimal CSV writer: a fixed header and rows of preformatted cells.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  const std::vector<std::string>& header() const { return header_; }

  void add_row(std::vector<std::string> cells) {
    if (cells.size() != header_.size()) throw ConfigError("CsvTable: row width mismatch");
    rows_.push_back(std::move(cells));
  }

  void write(const std::string& path) const {
    auto out = open_output(path);
    write(out);
  }

  void write(std::ostream& out) const {
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
      out << '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// t, objective_estimate and its trailing moving average.
inline CsvTable curve_table(const IterateTrace& trace, std::size_t window) {
  std::vector<double> obj(trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i) obj[i] = trace[i].objective_estimate;
  const auto smooth = moving_average(obj, window);
  CsvTable t({"t", "objective_estimate", "objective_smoothed"});
  for (std::size_t i = 0; i < trace.size(); ++i)
    t.add_row({std::to_string(trace[i].t), fmt_num(obj[i]), fmt_num(smooth[i])});
  return t;
}

}  // namespace cdro
