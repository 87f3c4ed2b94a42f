#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <future>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cdro/divergence.hpp"
#include "cdro/errors.hpp"
#include "cdro/oracle.hpp"
#include "cdro/rng.hpp"
#include "cdro/solvers.hpp"

namespace cdro {

struct BiasRow {
  std::uint64_t n_z = 0;
  double measured_gap = 0.0;  // |inf F - mean over trials of inf f_z|
  double std_error = 0.0;     // standard error of that mean
  double bound = 0.0;
};

struct BiasReport {
  double inf_F = 0.0;
  std::vector<BiasRow> rows;
  double fitted_slope = 0.0;  // least-squares slope of log gap against log n_z
};

/// Least-squares slope of log(y) on log(x). Non-positive y are floored at
/// 1e-300 so that an exactly zero gap does not poison the fit.
inline double fit_loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("fit_loglog_slope: need >= 2 points");
  const std::size_t n = x.size();
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    lx[i] = std::log(x[i]);
    ly[i] = std::log(std::max(y[i], 1e-300));
  }
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  return sxy / sxx;
}

/// The smallest radius at which the worst case puts all its mass on an atom
/// set of P0-mass m: m phi(1/m) + (1 - m) phi(0).
inline double concentration_radius(const DivergenceSpec& spec, double m) {
  if (!(m > 0.0 && m < 1.0)) throw ConfigError("concentration_radius: m must lie in (0, 1)");
  return m * phi(spec, 1.0 / m) + (1.0 - m) * phi(spec, 0.0);
}

/// 8, 16, ..., 4096.
inline std::vector<std::uint64_t> default_bias_grid() {
  std::vector<std::uint64_t> g;
  for (std::uint64_t n = 8; n <= 4096; n *= 2) g.push_back(n);
  return g;
}

/// Monte-Carlo estimate of the bias of the sampled dual minimum.
///
/// For each n in `grid`, `trials` samples of size n are drawn i.i.d. from
/// P0 over the atoms, the sampled dual objective is minimised over z with
/// `dual_min`, and the gap to the population minimum is recorded together
/// with the closed-form bound. Grid points run concurrently with one RNG
/// substream each, so the report does not depend on scheduling.
inline BiasReport bias_study(const DivergenceSpec& spec, std::span<const double> losses,
                             std::span<const double> p0, double B,
                             std::span<const std::uint64_t> grid, std::size_t trials,
                             std::uint64_t seed) {
  if (trials < 30) throw ConfigError("bias_study: trials must be >= 30 for a stable slope fit");
  if (grid.size() < 2) throw ConfigError("bias_study: need at least two n_z values");
  if (losses.size() > 64) throw ConfigError("bias_study: at most 64 atoms");
  for (double l : losses)
    if (l < 0.0 || l > B) throw ConfigError("bias_study: losses must lie in [0, B]");

  BiasReport rep;
  rep.inf_F = dual_min(spec, losses, p0).value;
  std::vector<double> cdf(p0.size());
  std::partial_sum(p0.begin(), p0.end(), cdf.begin());

  auto run = [&](std::uint64_t n) {
    RngStream rng(seed, "bias-n" + std::to_string(n));
    std::vector<double> counts(losses.size()), q;
    std::vector<double> sub_l;
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
      std::fill(counts.begin(), counts.end(), 0.0);
      for (std::uint64_t s = 0; s < n; ++s) {
        const double u = rng.uniform(0.0, cdf.back());
        auto i = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        counts[std::min(i, counts.size() - 1)] += 1.0;
      }
      sub_l.clear();
      q.clear();
      for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] == 0.0) continue;
        sub_l.push_back(losses[i]);
        q.push_back(counts[i] / static_cast<double>(n));
      }
      const double v = dual_min(spec, sub_l, q).value;
      sum += v;
      sum2 += v * v;
    }
    const double mean = sum / trials;
    const double var = std::max(0.0, sum2 / trials - mean * mean);
    return BiasRow{n, std::abs(rep.inf_F - mean), std::sqrt(var / trials),
                   bias_bound(spec, B, static_cast<double>(n))};
  };

  std::vector<std::future<BiasRow>> jobs;
  for (std::uint64_t n : grid) jobs.push_back(std::async(std::launch::async, run, n));
  std::vector<double> xs, ys;
  for (auto& j : jobs) {
    rep.rows.push_back(j.get());
    xs.push_back(static_cast<double>(rep.rows.back().n_z));
    ys.push_back(rep.rows.back().measured_gap);
  }
  rep.fitted_slope = fit_loglog_slope(xs, ys);
  return rep;
}

}  // namespace cdro
