#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cdro/data.hpp"
#include "cdro/divergence.hpp"
#include "cdro/dual_objective.hpp"
#include "cdro/errors.hpp"
#include "cdro/losses.hpp"
#include "cdro/rng.hpp"

namespace cdro {

enum class SolverMode { Theory, Practical };

/// How the per-iteration samples are drawn. `Full` evaluates the exact
/// expectation under P0 every iteration (used for audits).
enum class BatchMode { WithReplacement, Full };

struct SolverConfig {
  std::uint64_t iterations = 1000;
  double step_alpha = 0.01;
  std::uint64_t batch_nx = 128;
  std::uint64_t batch_nz = 128;
  double constant_C = 1.0;
  std::uint64_t seed = 0;
  SolverMode mode = SolverMode::Practical;
  double epsilon = 0.0;
  BatchMode batch_mode = BatchMode::WithReplacement;
  /// The fixed lambda of PAN-DRO.
  double fixed_lambda = 1.0;

  void validate() const {
    if (iterations < 1) throw ConfigError("solver: iterations must be >= 1");
    if (batch_nx < 1 || batch_nz < 1) throw ConfigError("solver: batch sizes must be >= 1");
    if (!(step_alpha > 0.0) || !std::isfinite(step_alpha))
      throw ConfigError("solver: step_alpha must be > 0");
    if (!(constant_C > 0.0) || !std::isfinite(constant_C))
      throw ConfigError("solver: constant_C must be > 0");
    if (mode == SolverMode::Theory && !(epsilon > 0.0))
      throw ConfigError("solver: theory mode requires epsilon > 0");
    if (!(fixed_lambda > 0.0)) throw ConfigError("solver: fixed_lambda must be > 0");
  }
};

/// One iteration of a solver run. `grad_x_norm` is the norm of the sampled
/// x-gradient at (x_t, z_t); `fw_gap` is g_t; `objective_estimate` is the
/// sampled objective at (x_t, z_t).
struct IterateRecord {
  std::uint64_t t = 0;
  double lambda = 0.0;
  double eta = 0.0;
  double grad_x_norm = 0.0;
  double fw_gap = 0.0;
  double gamma = 0.0;
  double objective_estimate = 0.0;
};

using IterateTrace = std::vector<IterateRecord>;

struct SolverOutput {
  std::vector<double> x_out;
  DualPoint z_out;
  std::uint64_t t_prime = 0;
  IterateTrace trace;
  /// Final iterates (x_T, z_T), for fixed-budget comparisons.
  std::vector<double> x_last;
  DualPoint z_last;
};

/// Observer called after each iteration with (record, x_t, z_t, x_{t+1},
/// z_{t+1}).
using IterateObserver =
    std::function<void(const IterateRecord&, std::span<const double>, const DualPoint&,
                       std::span<const double>, const DualPoint&)>;

/// argmin over the box corners of <e, grad>, coordinate-wise: the lower
/// bound for a positive component, the upper bound for a negative one, the
/// lower bound on exact ties.
inline DualPoint lmo_box(const std::array<double, 2>& grad, const DualDomain& dom) {
  return {grad[0] < 0.0 ? dom.lambda_hi : dom.lambda_lo, grad[1] < 0.0 ? dom.eta_hi : dom.eta_lo};
}

namespace detail {

inline double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double a : v) s += a * a;
  return s;
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double a) { return std::isfinite(a); });
}

[[noreturn]] inline void numerical_abort(const char* solver, std::uint64_t t, const DualPoint& z,
                                         std::uint64_t batch_seed) {
  std::ostringstream os;
  os << solver << ": non-finite value at iteration " << t << " (lambda=" << z.lambda
     << ", eta=" << z.eta << ", batch stream seed " << batch_seed << ")";
  throw NumericalError(os.str());
}

// Samples a batch and evaluates it, or takes the exact expectation.
template <LossModel M>
BatchEval draw_eval(const DualKernel& kernel, const M& model, const Dataset& data,
                    const SolverConfig& cfg, std::uint64_t n, RngStream& rng,
                    std::span<const double> x, const DualPoint& z, bool want_grad_x) {
  if (cfg.batch_mode == BatchMode::Full) return full_eval(kernel, model, data, x, z, want_grad_x);
  const auto idx = sample_batch(data, n, rng);
  return batch_eval(kernel, model, data, idx, x, z, want_grad_x);
}

}  // namespace detail

/// Stochastic Frank-Wolfe / gradient descent on min_x min_{z in M} F(x; z).
///
/// Each iteration takes an SGD step in x on n_x samples, then a Frank-Wolfe
/// step in z with step min(g_t / C, 1) using a fresh n_z-sample gradient at
/// (x_{t+1}, z_t). The output is (x_{t'+1}, z_{t'}) with t' minimising
/// ||grad_x||^2 + g_t^2 over the run, tracked online.
template <LossModel M>
SolverOutput sfk_dro(const DivergenceSpec& spec, const M& model, const Dataset& data,
                     const DualDomain& domain, const SolverConfig& cfg,
                     std::span<const double> x0, const DualPoint& z0,
                     const IterateObserver& observe = {}) {
  cfg.validate();
  if (!domain.contains(z0)) throw ConfigError("sfk_dro: initial z outside the domain box");
  if (x0.size() != model.dim()) throw ConfigError("sfk_dro: x0 has the wrong dimension");
  const DualKernel kernel(spec);
  RngStream xs(cfg.seed, "x-batch"), zs(cfg.seed, "z-batch");

  std::vector<double> x(x0.begin(), x0.end()), x_next(x.size());
  DualPoint z = z0;
  SolverOutput out;
  out.trace.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(cfg.iterations, 1u << 20)));
  double best = kInfinity;

  for (std::uint64_t t = 0; t < cfg.iterations; ++t) {
    const BatchEval ex = detail::draw_eval(kernel, model, data, cfg, cfg.batch_nx, xs, x, z, true);
    if (!std::isfinite(ex.value) || !detail::all_finite(ex.grad_x))
      detail::numerical_abort("sfk_dro", t, z, xs.seed());
    for (std::size_t j = 0; j < x.size(); ++j) x_next[j] = x[j] - cfg.step_alpha * ex.grad_x[j];

    const BatchEval ez =
        detail::draw_eval(kernel, model, data, cfg, cfg.batch_nz, zs, x_next, z, false);
    if (!std::isfinite(ez.d_lambda) || !std::isfinite(ez.d_eta))
      detail::numerical_abort("sfk_dro", t, z, zs.seed());
    const DualPoint e = lmo_box({ez.d_lambda, ez.d_eta}, domain);
    const double dl = e.lambda - z.lambda, de = e.eta - z.eta;
    const double gap = -(dl * ez.d_lambda + de * ez.d_eta);
    const double gamma = std::clamp(gap / cfg.constant_C, 0.0, 1.0);

    const double gx2 = detail::squared_norm(ex.grad_x);
    const IterateRecord rec{t, z.lambda, z.eta, std::sqrt(gx2), gap, gamma, ex.value};
    out.trace.push_back(rec);
    if (gx2 + gap * gap < best) {
      best = gx2 + gap * gap;
      out.t_prime = t;
      out.x_out = x_next;
      out.z_out = z;
    }
    DualPoint z_next{z.lambda + gamma * dl, z.eta + gamma * de};
    // a convex combination of box points; clamp away round-off
    z_next = domain.clamp(z_next);
    if (observe) observe(rec, x, z, x_next, z_next);
    x.swap(x_next);
    z = z_next;
  }
  out.x_last = x;
  out.z_last = z;
  return out;
}

/// Joint smoothness constant of F in y = (x, lambda, eta).
inline double pgd_joint_smoothness(const ObjectiveConstants& c) {
  return c.L_x + c.L_z + 2.0 * c.L_xz;
}

/// Projected stochastic gradient descent on y = (x, lambda, eta), one batch
/// of n_x samples per step, (lambda, eta) projected onto the box. Theory mode
/// steps by 1/(2 L_y); Practical mode by `step_alpha`.
template <LossModel M>
SolverOutput pgd(const DivergenceSpec& spec, const M& model, const Dataset& data,
                 const DualDomain& domain, const ObjectiveConstants& constants,
                 const SolverConfig& cfg, std::span<const double> x0, const DualPoint& z0,
                 const IterateObserver& observe = {}) {
  cfg.validate();
  if (!domain.contains(z0)) throw ConfigError("pgd: initial z outside the domain box");
  if (x0.size() != model.dim()) throw ConfigError("pgd: x0 has the wrong dimension");
  const DualKernel kernel(spec);
  RngStream xs(cfg.seed, "x-batch");
  const double step =
      cfg.mode == SolverMode::Theory ? 1.0 / (2.0 * pgd_joint_smoothness(constants)) : cfg.step_alpha;

  std::vector<double> x(x0.begin(), x0.end()), x_next(x.size());
  DualPoint z = z0;
  SolverOutput out;
  double best = kInfinity;
  for (std::uint64_t t = 0; t < cfg.iterations; ++t) {
    const BatchEval ev = detail::draw_eval(kernel, model, data, cfg, cfg.batch_nx, xs, x, z, true);
    if (!std::isfinite(ev.value) || !detail::all_finite(ev.grad_x) || !std::isfinite(ev.d_lambda) ||
        !std::isfinite(ev.d_eta))
      detail::numerical_abort("pgd", t, z, xs.seed());
    for (std::size_t j = 0; j < x.size(); ++j) x_next[j] = x[j] - step * ev.grad_x[j];
    const DualPoint z_next =
        domain.clamp({z.lambda - step * ev.d_lambda, z.eta - step * ev.d_eta});

    // Frank-Wolfe gap of the sampled z-gradient, for comparable reporting
    const DualPoint e = lmo_box({ev.d_lambda, ev.d_eta}, domain);
    const double gap = -((e.lambda - z.lambda) * ev.d_lambda + (e.eta - z.eta) * ev.d_eta);
    const double gx2 = detail::squared_norm(ev.grad_x);
    const IterateRecord rec{t, z.lambda, z.eta, std::sqrt(gx2), gap, step, ev.value};
    out.trace.push_back(rec);
    if (gx2 + gap * gap < best) {
      best = gx2 + gap * gap;
      out.t_prime = t;
      out.x_out = x_next;
      out.z_out = z;
    }
    if (observe) observe(rec, x, z, x_next, z_next);
    x.swap(x_next);
    z = z_next;
  }
  out.x_last = x;
  out.z_last = z;
  return out;
}

/// Penalised DRO with lambda fixed at `cfg.fixed_lambda`: SGD on (x, eta)
/// with eta clipped to [eta_lo, eta_hi]. The output is the last iterate.
template <LossModel M>
SolverOutput pan_dro(const DivergenceSpec& spec, const M& model, const Dataset& data,
                     double eta_lo, double eta_hi, const SolverConfig& cfg,
                     std::span<const double> x0, double eta0) {
  cfg.validate();
  if (!(eta_lo <= eta_hi)) throw ConfigError("pan_dro: empty eta interval");
  if (x0.size() != model.dim()) throw ConfigError("pan_dro: x0 has the wrong dimension");
  const DualKernel kernel(spec);
  RngStream xs(cfg.seed, "x-batch");

  std::vector<double> x(x0.begin(), x0.end());
  DualPoint z{cfg.fixed_lambda, std::clamp(eta0, eta_lo, eta_hi)};
  SolverOutput out;
  for (std::uint64_t t = 0; t < cfg.iterations; ++t) {
    const BatchEval ev = detail::draw_eval(kernel, model, data, cfg, cfg.batch_nx, xs, x, z, true);
    if (!std::isfinite(ev.value) || !detail::all_finite(ev.grad_x) || !std::isfinite(ev.d_eta))
      detail::numerical_abort("pan_dro", t, z, xs.seed());
    for (std::size_t j = 0; j < x.size(); ++j) x[j] -= cfg.step_alpha * ev.grad_x[j];
    z.eta = std::clamp(z.eta - cfg.step_alpha * ev.d_eta, eta_lo, eta_hi);
    out.trace.push_back({t, z.lambda, z.eta, std::sqrt(detail::squared_norm(ev.grad_x)),
                         std::abs(ev.d_eta), cfg.step_alpha, ev.value});
  }
  out.t_prime = cfg.iterations - 1;
  out.x_out = out.x_last = x;
  out.z_out = out.z_last = z;
  return out;
}

/// Mini-batch SGD on the mean loss. The trace stores the batch mean loss as
/// the objective; lambda, eta and the gap are zero. Outputs the last iterate.
template <LossModel M>
SolverOutput erm_sgd(const M& model, const Dataset& data, const SolverConfig& cfg,
                     std::span<const double> x0) {
  cfg.validate();
  if (x0.size() != model.dim()) throw ConfigError("erm_sgd: x0 has the wrong dimension");
  RngStream xs(cfg.seed, "x-batch");
  std::vector<double> x(x0.begin(), x0.end()), g(x.size()), acc(x.size());
  SolverOutput out;
  for (std::uint64_t t = 0; t < cfg.iterations; ++t) {
    std::vector<std::size_t> idx;
    std::vector<double> w;
    if (cfg.batch_mode == BatchMode::Full) {
      idx = all_indices(data);
      w = data.weights;
    } else {
      idx = sample_batch(data, cfg.batch_nx, xs);
      w.assign(idx.size(), 1.0 / static_cast<double>(idx.size()));
    }
    std::fill(acc.begin(), acc.end(), 0.0);
    double loss = 0.0;
    for (std::size_t b = 0; b < idx.size(); ++b) {
      loss += w[b] * model.value_grad(x, data.row(idx[b]), data.labels[idx[b]], g);
      for (std::size_t j = 0; j < g.size(); ++j) acc[j] += w[b] * g[j];
    }
    if (!std::isfinite(loss) || !detail::all_finite(acc))
      detail::numerical_abort("erm_sgd", t, {0.0, 0.0}, xs.seed());
    for (std::size_t j = 0; j < x.size(); ++j) x[j] -= cfg.step_alpha * acc[j];
    out.trace.push_back({t, 0.0, 0.0, std::sqrt(detail::squared_norm(acc)), 0.0, cfg.step_alpha, loss});
  }
  out.t_prime = cfg.iterations - 1;
  out.x_out = out.x_last = x;
  return out;
}

/// Closed-form bound on |inf F - E inf f_z| for sample size n.
///   k* = 2: 3B sqrt(1 + k(k-1)rho) sqrt((4 + log n)/(4n))
///   k* > 2: 3B (1 + k(k-1)rho)^{1/k} (1/n + 1/(2^{k*-1}(k*-2)n))^{1/k*}
///   CVaR:   (1/mu)(3B/n + 6B(1/sqrt(n) - 1/n))
inline double bias_bound(const DivergenceSpec& spec, double B, double n) {
  if (!(n >= 1.0)) throw ConfigError("bias_bound: n must be >= 1");
  if (!spec.is_cressie_read()) {
    const double mu = spec.mu();
    return (3.0 * B / n + 6.0 * B * (1.0 / std::sqrt(n) - 1.0 / n)) / mu;
  }
  const double k = spec.k(), ks = spec.k_star(), base = 1.0 + k * (k - 1.0) * spec.rho();
  if (ks == 2.0) return 3.0 * B * std::sqrt(base) * std::sqrt((4.0 + std::log(n)) / (4.0 * n));
  return 3.0 * B * std::pow(base, 1.0 / k) *
         std::pow(1.0 / n + 1.0 / (std::pow(2.0, ks - 1.0) * (ks - 2.0) * n), 1.0 / ks);
}

/// The step size, batch sizes and iteration count guaranteeing an
/// epsilon-stationary point, with the real-valued quantities they round.
struct TheoryPlan {
  SolverConfig config;
  DualDomain domain;
  ObjectiveConstants constants;
  double lambda0 = 0.0;
  double nx_real = 0.0;
  double nz_variance = 0.0;  // 48 D^2 sigma1^2 / eps^2
  double nz_real = 0.0;      // smallest integer meeting both n_z conditions
  double T_real = 0.0;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::uint64_t saturating_count(double v) {
  constexpr double kMax = 18446744073709549568.0;  // largest double below 2^64
  if (!(v < kMax)) return std::numeric_limits<std::uint64_t>::max();
  return static_cast<std::uint64_t>(v);
}

}  // namespace detail

/// lambda0 = eps/(8 rho), domain and constants recomputed at lambda0, C =
/// D^2 L_z, alpha = 1/(2C), n_x = ceil(12 L_x sigma0^2 / (C eps^2)), n_z the
/// smallest integer with n_z >= 48 D^2 sigma1^2 / eps^2 and bias bound <
/// eps/4, T = ceil(48 C Delta / eps^2). Counts saturate at 2^64 - 1.
inline TheoryPlan theory_hyperparams(const DivergenceSpec& spec, const LossConstants& loss,
                                     double epsilon, double delta_estimate,
                                     std::uint64_t seed = 0) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ConfigError("theory: epsilon must be > 0");
  if (!(delta_estimate > 0.0)) throw ConfigError("theory: Delta estimate must be > 0");
  TheoryPlan p;
  p.lambda0 = epsilon / (8.0 * spec.rho());
  if (p.lambda0 >= lambda_bar(spec, loss.B))
    throw ConfigError("theory: epsilon too large, lambda0 = eps/(8 rho) reaches lambda_bar");
  p.domain = compute_domain(spec, loss.B, p.lambda0);
  p.constants = compute_constants(spec, p.domain, loss.B, loss.G, loss.L);
  const ObjectiveConstants& c = p.constants;
  const double C = c.C, e2 = epsilon * epsilon;

  p.nx_real = std::ceil(12.0 * c.L_x * c.sigma0 * c.sigma0 / (C * e2));
  p.nz_variance = 48.0 * c.D * c.D * c.sigma1 * c.sigma1 / e2;
  double lo = std::max(1.0, std::ceil(p.nz_variance));
  const double target = epsilon / 4.0;
  if (bias_bound(spec, loss.B, lo) < target) {
    p.nz_real = lo;
  } else {
    double hi = lo;
    while (!(bias_bound(spec, loss.B, hi) < target)) {
      lo = hi;
      hi *= 2.0;
    }
    // invariant: bound(lo) >= target > bound(hi)
    while (hi - lo > std::max(1.0, std::nextafter(hi, kInfinity) - hi)) {
      const double mid = std::floor(lo + (hi - lo) / 2.0);
      if (mid <= lo || mid >= hi) break;
      (bias_bound(spec, loss.B, mid) < target ? hi : lo) = mid;
    }
    p.nz_real = hi;
  }
  p.T_real = std::ceil(48.0 * C * delta_estimate / e2);

  p.config.mode = SolverMode::Theory;
  p.config.epsilon = epsilon;
  p.config.seed = seed;
  p.config.constant_C = C;
  p.config.step_alpha = 1.0 / (2.0 * C);
  p.config.batch_nx = std::max<std::uint64_t>(1, detail::saturating_count(p.nx_real));
  p.config.batch_nz = detail::saturating_count(p.nz_real);
  p.config.iterations = std::max<std::uint64_t>(1, detail::saturating_count(p.T_real));

  std::ostringstream os;
  if (c.D * c.D * c.L_z / c.L_x < 2.0) {
    os << "D^2 L_z / L_x = " << c.D * c.D * c.L_z / c.L_x << " < 2";
    p.warnings.push_back(os.str());
    os.str("");
  }
  if (c.D * c.sigma1 / C > 1.0) {
    os << "D sigma1 / C = " << c.D * c.sigma1 / C << " > 1";
    p.warnings.push_back(os.str());
    os.str("");
  }
  if (loss.empirical) p.warnings.push_back("loss constants G, L are empirical estimates");
  return p;
}

}  // namespace cdro
