#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <numbers>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cdro/errors.hpp"
#include "cdro/rng.hpp"

namespace cdro {

/// Per-class sampling ratios of the imbalanced 10-class benchmark.
inline constexpr std::array<double, 10> kImbalanceRatios = {
    0.804, 0.543, 0.997, 0.593, 0.390, 0.285, 0.959, 0.806, 0.967, 0.660};

/// N weighted samples defining the empirical distribution P0.
///
/// Features are stored row-major. `weights` is the probability vector of P0
/// (uniform unless set otherwise); `group_ids` tag each row for worst-group
/// reporting and default to the labels.
struct Dataset {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<double> features;
  std::vector<int> labels;
  std::vector<double> weights;
  std::vector<int> group_ids;

  std::size_t size() const { return n_rows; }
  std::size_t dim() const { return n_cols; }

  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * n_cols, n_cols};
  }

  bool has_uniform_weights() const {
    const double w0 = 1.0 / static_cast<double>(n_rows);
    return std::all_of(weights.begin(), weights.end(), [w0](double w) { return w == w0; });
  }

  /// Throws ConfigError when the invariants do not hold.
  void validate() const {
    if (n_rows == 0) throw ConfigError("dataset is empty");
    if (features.size() != n_rows * n_cols || labels.size() != n_rows ||
        weights.size() != n_rows || group_ids.size() != n_rows)
      throw ConfigError("dataset arrays have inconsistent sizes");
    for (double v : features)
      if (!std::isfinite(v)) throw ConfigError("dataset contains non-finite features");
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("dataset weights must be >= 0");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-10) throw ConfigError("dataset weights must sum to 1");
  }

  void set_uniform_weights() {
    weights.assign(n_rows, 1.0 / static_cast<double>(n_rows));
  }

  /// Sorted distinct group ids.
  std::vector<int> groups() const {
    std::vector<int> g = group_ids;
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
    return g;
  }
};

/// Reasons a CSV file can be rejected.
enum class CsvErrorKind { Io, Empty, MissingLabelColumn, Ragged, NonNumeric };

class CsvError : public ConfigError {
 public:
  CsvError(CsvErrorKind kind, const std::string& what) : ConfigError(what), kind_(kind) {}
  CsvErrorKind kind() const { return kind_; }

 private:
  CsvErrorKind kind_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && !s.empty();
}

}  // namespace detail

/// Reads a comma-separated file with a header row. Every non-label column is
/// a feature, in file order; labels are integers; weights are uniform.
inline Dataset load_csv(const std::string& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw CsvError(CsvErrorKind::Io, "cannot open CSV file: " + path);

  std::string line;
  if (!std::getline(in, line) || detail::trim(line).empty())
    throw CsvError(CsvErrorKind::Empty, "CSV file is empty: " + path);
  const auto header = detail::split_commas(line);
  const auto it = std::find(header.begin(), header.end(), std::string_view(label_column));
  if (it == header.end())
    throw CsvError(CsvErrorKind::MissingLabelColumn,
                   "label column '" + label_column + "' not found in " + path);
  const std::size_t label_idx = static_cast<std::size_t>(it - header.begin());

  Dataset ds;
  ds.n_cols = header.size() - 1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_commas(line);
    if (cells.size() != header.size()) {
      std::ostringstream os;
      os << path << ":" << line_no << ": expected " << header.size() << " cells, found "
         << cells.size();
      throw CsvError(CsvErrorKind::Ragged, os.str());
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      bool ok;
      if (c == label_idx) {
        int label = 0;
        ok = detail::parse_number(cells[c], label);
        if (ok) ds.labels.push_back(label);
      } else {
        double v = 0.0;
        ok = detail::parse_number(cells[c], v) && std::isfinite(v);
        if (ok) ds.features.push_back(v);
      }
      if (!ok) {
        std::ostringstream os;
        os << path << ":" << line_no << ": non-numeric cell '" << cells[c] << "' in column "
           << header[c];
        throw CsvError(CsvErrorKind::NonNumeric, os.str());
      }
    }
    ++ds.n_rows;
  }
  if (ds.n_rows == 0) throw CsvError(CsvErrorKind::Empty, "CSV file has no data rows: " + path);
  ds.set_uniform_weights();
  ds.group_ids = ds.labels;
  return ds;
}

/// Writes features and a trailing `label` column with a header row.
inline void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw CsvError(CsvErrorKind::Io, "cannot write CSV file: " + path);
  for (std::size_t c = 0; c < ds.n_cols; ++c) out << "f" << c << ",";
  out << "label\n";
  out.precision(17);
  for (std::size_t i = 0; i < ds.n_rows; ++i) {
    for (double v : ds.row(i)) out << v << ",";
    out << ds.labels[i] << "\n";
  }
}

/// Gaussian class clusters with unit covariance. Class centres sit on a
/// circle of radius `separation` in the first two coordinates (antipodal
/// points on the first axis when d == 1). Class c gets round(base_n *
/// ratios[c]) points. Deterministic in `seed`.
inline Dataset gen_imbalanced(int classes, std::span<const double> ratios, std::size_t base_n,
                              std::size_t d, double separation, std::uint64_t seed) {
  if (classes < 2) throw ConfigError("gen_imbalanced: need at least 2 classes");
  if (ratios.size() != static_cast<std::size_t>(classes))
    throw ConfigError("gen_imbalanced: one ratio per class required");
  for (double r : ratios)
    if (!(r > 0.0 && r <= 1.0)) throw ConfigError("gen_imbalanced: ratios must lie in (0, 1]");
  if (d == 0) throw ConfigError("gen_imbalanced: dimension must be >= 1");
  if (d == 1 && classes != 2) throw ConfigError("gen_imbalanced: d == 1 supports 2 classes only");

  RngStream rng(seed, "gen_imbalanced");
  Dataset ds;
  ds.n_cols = d;
  for (int c = 0; c < classes; ++c) {
    std::vector<double> centre(d, 0.0);
    const double angle = 2.0 * std::numbers::pi * c / classes;
    centre[0] = separation * std::cos(angle);
    if (d > 1) centre[1] = separation * std::sin(angle);
    const auto count = static_cast<std::size_t>(std::llround(static_cast<double>(base_n) * ratios[c]));
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t j = 0; j < d; ++j) ds.features.push_back(centre[j] + rng.normal());
      ds.labels.push_back(c);
    }
    ds.n_rows += count;
  }
  if (ds.n_rows == 0) throw ConfigError("gen_imbalanced: generated no samples");
  ds.set_uniform_weights();
  ds.group_ids = ds.labels;
  return ds;
}

/// i.i.d. indices drawn with replacement from P0. Uniform weights use a
/// uniform integer draw; otherwise inverse-CDF sampling on the weights.
inline std::vector<std::size_t> sample_batch(const Dataset& ds, std::size_t n, RngStream& rng) {
  if (n == 0) throw ConfigError("sample_batch: batch size must be >= 1");
  std::vector<std::size_t> idx(n);
  if (ds.has_uniform_weights()) {
    for (auto& i : idx) i = rng.index(ds.size());
    return idx;
  }
  std::vector<double> cdf(ds.size());
  std::partial_sum(ds.weights.begin(), ds.weights.end(), cdf.begin());
  for (auto& i : idx) {
    const double u = rng.uniform(0.0, cdf.back());
    i = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    i = std::min(i, ds.size() - 1);
  }
  return idx;
}

/// 0, 1, ..., N-1.
inline std::vector<std::size_t> all_indices(const Dataset& ds) {
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

}  // namespace cdro
