#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "cdro/divergence.hpp"
#include "cdro/dual_objective.hpp"
#include "cdro/errors.hpp"

namespace cdro {

/// Worst-case distribution over N atoms and its certificate.
///
/// `multiplier` and `shift` are the Lagrange multipliers of the divergence
/// ball and of the simplex constraint at the returned q (the shift is the
/// un-shifted eta~). `kkt_residual` bounds the distance from optimality: it
/// adds the primal/Lagrangian gap to the simplex and budget violations.
struct WorstCaseResult {
  double value = 0.0;
  std::vector<double> q;
  double divergence_used = 0.0;
  double kkt_residual = 0.0;
  double multiplier = 0.0;
  double shift = 0.0;
};

struct DualMinResult {
  double value = 0.0;
  /// Minimizer; lambda == 0 when the infimum sits on the recession limit.
  DualPoint z_star;
};

namespace detail {

// phi extended to the closed CVaR domain [0, 1/mu] (finite at t = 1/mu).
inline double phi_closed(const DivergenceSpec& spec, double t) {
  if (!spec.is_cressie_read() && spec.mu() * t >= 1.0 && spec.mu() * t <= 1.0 + 1e-12)
    return (1.0 / spec.mu()) * std::log(1.0 / spec.mu());
  return phi(spec, t);
}

inline double divergence(const DivergenceSpec& spec, std::span<const double> q,
                         std::span<const double> p0) {
  double d = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) d += p0[i] * phi_closed(spec, q[i] / p0[i]);
  return d;
}

inline void check_instance(std::span<const double> losses, std::span<const double> p0) {
  if (losses.empty() || losses.size() != p0.size())
    throw ConfigError("oracle: losses and p0 must be non-empty and of equal length");
  double total = 0.0;
  for (std::size_t i = 0; i < p0.size(); ++i) {
    if (!(p0[i] > 0.0)) throw ConfigError("oracle: p0 must be strictly positive");
    if (!std::isfinite(losses[i])) throw ConfigError("oracle: non-finite loss");
    total += p0[i];
  }
  if (std::abs(total - 1.0) > 1e-10) throw ConfigError("oracle: p0 must sum to 1");
}

// Density ratios zeta_i = phi*'((l_i - shift)/s) with the shift solving
// sum p zeta = 1 (bisection; the sum is decreasing in the shift).
struct ScaledSolution {
  std::vector<double> zeta;
  double shift = 0.0;
};

inline ScaledSolution solve_shift(const DivergenceSpec& spec, std::span<const double> losses,
                                  std::span<const double> p0, double s) {
  const auto [mn, mx] = std::minmax_element(losses.begin(), losses.end());
  double lo = *mn, hi = *mx;
  auto mass = [&](double shift) {
    double m = 0.0;
    for (std::size_t i = 0; i < losses.size(); ++i)
      m += p0[i] * phi_conj_grad(spec, (losses[i] - shift) / s);
    return m;
  };
  for (int it = 0; it < 300; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (mass(mid) > 1.0 ? lo : hi) = mid;
  }
  ScaledSolution out;
  out.shift = 0.5 * (lo + hi);
  out.zeta.resize(losses.size());
  double m = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    out.zeta[i] = phi_conj_grad(spec, (losses[i] - out.shift) / s);
    m += p0[i] * out.zeta[i];
  }
  for (double& z : out.zeta) z /= m;
  return out;
}

// The lambda -> 0 limit of the KKT family: the worst case with an unlimited
// divergence budget (all mass on the top atoms for Cressie-Read, the CVaR
// linear program for the smoothed CVaR). Ties share mass in proportion to p0.
inline ScaledSolution zero_scale_solution(const DivergenceSpec& spec,
                                          std::span<const double> losses,
                                          std::span<const double> p0) {
  const std::size_t n = losses.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return losses[a] > losses[b]; });
  const double cap = spec.is_cressie_read() ? kInfinity : 1.0 / spec.mu();
  ScaledSolution out;
  out.zeta.assign(n, 0.0);
  double remaining = 1.0;
  for (std::size_t g = 0; g < n && remaining > 0.0;) {
    std::size_t e = g;
    double pg = 0.0;
    while (e < n && losses[order[e]] == losses[order[g]]) pg += p0[order[e++]];
    const double zeta = std::min(cap, remaining / pg);
    for (std::size_t j = g; j < e; ++j) out.zeta[order[j]] = zeta;
    remaining -= zeta * pg;
    if (remaining <= 1e-15) remaining = 0.0;
    out.shift = losses[order[g]];
    g = e;
  }
  return out;
}

// Lagrangian dual value at scale s (> 0) and shift; s == 0 is the recession
// limit sum p (l - shift)_+ / mu + shift (CVaR) or shift (Cressie-Read, valid
// only when shift >= max loss).
inline double lagrangian_value(const DivergenceSpec& spec, std::span<const double> losses,
                               std::span<const double> p0, double s, double shift) {
  double v = shift;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    const double u = losses[i] - shift;
    if (s > 0.0) {
      v += p0[i] * s * phi_conj(spec, u / s);
    } else if (spec.is_cressie_read()) {
      if (u > 0.0) return kInfinity;
    } else {
      v += p0[i] * std::max(u, 0.0) / spec.mu();
    }
  }
  return v;
}

// sup_q E_q[l] - reg * D(q) subject to D(q) <= rho, via the KKT family
// parameterised by the total scale s = reg + multiplier.
inline WorstCaseResult solve_worst_case(const DivergenceSpec& spec,
                                        std::span<const double> losses,
                                        std::span<const double> p0, double reg) {
  check_instance(losses, p0);
  if (!(reg >= 0.0) || !std::isfinite(reg)) throw ConfigError("oracle: lambda0 must be >= 0");
  const double rho = spec.rho();
  const auto [mn, mx] = std::minmax_element(losses.begin(), losses.end());
  const double spread = *mx - *mn;

  WorstCaseResult r;
  auto finish = [&](const ScaledSolution& sol, double s) {
    r.q.resize(losses.size());
    r.value = 0.0;
    for (std::size_t i = 0; i < losses.size(); ++i) {
      r.q[i] = p0[i] * sol.zeta[i];
      r.value += r.q[i] * losses[i];
    }
    r.divergence_used = divergence(spec, r.q, p0);
    r.multiplier = s - reg;
    r.shift = sol.shift;
    const double primal = r.value - reg * r.divergence_used;
    const double dual = lagrangian_value(spec, losses, p0, s, sol.shift) + r.multiplier * rho;
    const double qsum = std::accumulate(r.q.begin(), r.q.end(), 0.0);
    const double scale = 1.0 + std::abs(primal);
    r.kkt_residual = std::abs(dual - primal) / scale + std::abs(qsum - 1.0) +
                     std::max(0.0, r.divergence_used - rho) +
                     r.multiplier * std::abs(r.divergence_used - rho) / scale;
    r.value = primal;
    return r;
  };

  if (spread == 0.0) {
    ScaledSolution sol{std::vector<double>(losses.size(), 1.0), *mx};
    return finish(sol, std::max(reg, 0.0));
  }

  auto div_at = [&](double s) {
    const ScaledSolution sol = solve_shift(spec, losses, p0, s);
    std::vector<double> q(losses.size());
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = p0[i] * sol.zeta[i];
    return divergence(spec, q, p0);
  };

  if (reg == 0.0) {
    const ScaledSolution z0 = zero_scale_solution(spec, losses, p0);
    std::vector<double> q(losses.size());
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = p0[i] * z0.zeta[i];
    if (divergence(spec, q, p0) <= rho) return finish(z0, 0.0);
  } else if (div_at(reg) <= rho) {
    return finish(solve_shift(spec, losses, p0, reg), reg);
  }

  // D(s) decreases in s; bracket D(lo) > rho >= D(hi) and bisect in log s.
  double hi = std::max(spread, reg);
  for (int i = 0; i < 200 && div_at(hi) > rho; ++i) hi *= 4.0;
  double lo = reg > 0.0 ? reg : hi;
  if (reg == 0.0) {
    for (int i = 0; i < 400 && div_at(lo) <= rho; ++i) lo *= 0.5;
  }
  if (div_at(lo) <= rho) return finish(solve_shift(spec, losses, p0, lo), lo);
  for (int it = 0; it < 200; ++it) {
    const double mid = std::sqrt(lo * hi);
    if (!(mid > lo && mid < hi)) break;
    (div_at(mid) > rho ? lo : hi) = mid;
  }
  return finish(solve_shift(spec, losses, p0, hi), hi);
}

// Golden-section minimisation of a convex function on [a, b]; the endpoints
// are compared too, so minimisers on the boundary are found exactly.
template <class F>
std::pair<double, double> golden_min(F&& f, double a, double b, double tol) {
  constexpr double kInvPhi = 0.6180339887498949;
  const double fa = f(a), fb = f(b);
  double c = b - kInvPhi * (b - a), d = a + kInvPhi * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < 400 && b - a > tol; ++it) {
    if (fc <= fd) {
      b = d, d = c, fd = fc;
      c = b - kInvPhi * (b - a), fc = f(c);
    } else {
      a = c, c = d, fc = fd;
      d = a + kInvPhi * (b - a), fd = f(d);
    }
  }
  std::pair<double, double> best = fc <= fd ? std::pair{c, fc} : std::pair{d, fd};
  if (fa < best.second) best = {a, fa};
  if (fb < best.second) best = {b, fb};
  return best;
}

}  // namespace detail

/// sup of E_Q[l] over the ball {Q : D(Q || P0) <= rho} on N atoms.
///
/// Solved through the KKT conditions: the optimal density ratio is
/// phi*'((l - eta~)/lambda), the shift eta~ is found by bisection on the
/// simplex constraint and lambda by bisection on the budget. Meant for small
/// N (a few dozen atoms).
inline WorstCaseResult primal_worst_case(const DivergenceSpec& spec,
                                         std::span<const double> losses,
                                         std::span<const double> p0) {
  return detail::solve_worst_case(spec, losses, p0, 0.0);
}

/// sup over the rho-ball of E_Q[l] - lambda0 * D(Q || P0).
inline double regularized_constrained_value(const DivergenceSpec& spec,
                                            std::span<const double> losses,
                                            std::span<const double> p0, double lambda0) {
  return detail::solve_worst_case(spec, losses, p0, lambda0).value;
}

/// The search box used by `dual_min` when no domain is given:
/// (0, 10 lambda_bar] x [-10 eta_bar, B], with B the largest loss (and -10B
/// as the lower eta bound for the smoothed CVaR).
inline DualDomain unconstrained_box(const DivergenceSpec& spec, std::span<const double> losses) {
  const double B = std::max(*std::max_element(losses.begin(), losses.end()), 1e-12);
  const double lb = lambda_bar(spec, B);
  const double eb = spec.is_cressie_read() ? eta_bar(spec, lb) : B;
  return {0.0, 10.0 * lb, -10.0 * eb, B};
}

/// min over z of sum_i p0_i f(l_i; z), by nested golden-section search
/// (outer lambda, inner eta) to 1e-10 in the arguments. F is jointly convex
/// in z, so the partial minimum over eta is convex in lambda.
inline DualMinResult dual_min(const DivergenceSpec& spec, std::span<const double> losses,
                              std::span<const double> p0,
                              const std::optional<DualDomain>& domain = std::nullopt,
                              double tol = 1e-10) {
  detail::check_instance(losses, p0);
  const DualDomain box = domain ? *domain : unconstrained_box(spec, losses);
  const DualKernel kernel(spec);

  auto at_zero = [&]() -> std::pair<double, double> {
    // piecewise linear in eta; the minimum is at a loss value or a box end
    std::pair<double, double> best{box.eta_hi, kInfinity};
    std::vector<double> cand(losses.begin(), losses.end());
    cand.push_back(box.eta_lo);
    cand.push_back(box.eta_hi);
    for (double eta : cand) {
      if (eta < box.eta_lo || eta > box.eta_hi) continue;
      double v = 0.0;
      for (std::size_t i = 0; i < losses.size(); ++i)
        v += p0[i] * kernel.value_at_zero_lambda(losses[i], eta);
      if (v < best.second) best = {eta, v};
    }
    return best;
  };
  auto inner = [&](double lambda) -> std::pair<double, double> {
    if (lambda <= 0.0) return at_zero();
    return detail::golden_min(
        [&](double eta) { return weighted_objective(kernel, losses, p0, {lambda, eta}); },
        box.eta_lo, box.eta_hi, tol);
  };
  const auto [lambda, value] =
      detail::golden_min([&](double l) { return inner(l).second; }, box.lambda_lo,
                         box.lambda_hi, tol);
  return {value, {lambda, inner(lambda).first}};
}

}  // namespace cdro
