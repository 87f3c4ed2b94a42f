#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <future>
#include <span>
#include <sstream>
#include <vector>

#include "cdro/data.hpp"
#include "cdro/divergence.hpp"
#include "cdro/errors.hpp"
#include "cdro/losses.hpp"

namespace cdro {

/// Dual variables z = (lambda, eta): scale and shift of the dual problem.
struct DualPoint {
  double lambda = 1.0;
  double eta = 0.0;

  friend bool operator==(const DualPoint&, const DualPoint&) = default;
};

/// The box M = [lambda_lo, lambda_hi] x [eta_lo, eta_hi] on which the
/// approximated objective is smooth.
struct DualDomain {
  double lambda_lo = 0.0;
  double lambda_hi = 0.0;
  double eta_lo = 0.0;
  double eta_hi = 0.0;

  bool contains(const DualPoint& z, double tol = 0.0) const {
    return z.lambda >= lambda_lo - tol && z.lambda <= lambda_hi + tol && z.eta >= eta_lo - tol &&
           z.eta <= eta_hi + tol;
  }

  /// Euclidean projection onto the box.
  DualPoint clamp(const DualPoint& z) const {
    return {std::clamp(z.lambda, lambda_lo, lambda_hi), std::clamp(z.eta, eta_lo, eta_hi)};
  }

  double diameter() const {
    return std::hypot(lambda_hi - lambda_lo, eta_hi - eta_lo);
  }

  std::array<DualPoint, 4> corners() const {
    return {DualPoint{lambda_lo, eta_lo}, DualPoint{lambda_lo, eta_hi},
            DualPoint{lambda_hi, eta_lo}, DualPoint{lambda_hi, eta_hi}};
  }
};

/// Smoothness, variance and diameter constants of the approximated problem.
struct ObjectiveConstants {
  double L_x = 0.0;
  double L_z = 0.0;
  double L_xz = 0.0;  // cross-Lipschitz constant of grad_x in z
  double sigma0 = 0.0;
  double sigma1 = 0.0;
  double D = 0.0;
  double C = 0.0;
};

/// Value and partial derivatives of f(x; lambda; eta; s) at one loss value.
/// The x-gradient is `x_coef` times the loss gradient.
struct SampleTerms {
  double value = 0.0;
  double d_lambda = 0.0;
  double d_eta = 0.0;
  double x_coef = 0.0;
};

/// Per-sample dual objective with the divergence-dependent constants cached.
///
/// Cressie-Read (shifted form, eta = eta~ - lambda/(k-1)):
///   f = c (l - eta)_+^{k*} lambda^{1-k*} + lambda (rho + 1/(k(k-1))) + eta,
///   c = (k-1)^{k*} / k.
/// Smoothed CVaR:
///   f = lambda phi*_s((l - eta)/lambda) + lambda rho + eta.
class DualKernel {
 public:
  explicit DualKernel(const DivergenceSpec& spec) : spec_(spec) {
    if (spec.is_cressie_read()) {
      const double k = spec.k();
      k_star_ = spec.k_star();
      coef_ = pow_nonneg(k - 1.0, k_star_) / k;
      lambda_slope_ = spec.rho() + 1.0 / (k * (k - 1.0));
    } else {
      lambda_slope_ = spec.rho();
    }
  }

  const DivergenceSpec& spec() const { return spec_; }
  /// (k-1)^{k*}/k for Cressie-Read.
  double coef() const { return coef_; }

  double value(double loss, const DualPoint& z) const { return terms(loss, z).value; }

  SampleTerms terms(double loss, const DualPoint& z) const {
    check(z);
    const double u = loss - z.eta;
    SampleTerms t;
    if (spec_.is_cressie_read()) {
      if (u > 0.0) {
        const double r = u / z.lambda;
        const double rp = pow_nonneg(r, k_star_ - 1.0);  // (u/lambda)^{k*-1}
        const double rk = rp * r;                          // (u/lambda)^{k*}
        t.value = coef_ * rk * z.lambda;
        t.d_lambda = coef_ * (1.0 - k_star_) * rk;
        t.d_eta = -coef_ * k_star_ * rp;
        t.x_coef = coef_ * k_star_ * rp;
      }
      t.value += z.lambda * lambda_slope_ + z.eta;
      t.d_lambda += lambda_slope_;
      t.d_eta += 1.0;
      return t;
    }
    const double s = u / z.lambda;
    const double conj = phi_conj(spec_, s);
    const double grad = phi_conj_grad(spec_, s);
    t.value = z.lambda * conj + z.lambda * lambda_slope_ + z.eta;
    t.d_lambda = conj - s * grad + lambda_slope_;
    t.d_eta = 1.0 - grad;
    t.x_coef = grad;
    return t;
  }

  /// Limit of f as lambda -> 0+ (the recession of the perspective term).
  double value_at_zero_lambda(double loss, double eta) const {
    const double u = loss - eta;
    if (spec_.is_cressie_read()) return u > 0.0 ? kInfinity : eta;
    return std::max(u, 0.0) / spec_.mu() + eta;
  }

 private:
  static void check(const DualPoint& z) {
    if (!(z.lambda > 0.0) || !std::isfinite(z.lambda) || !std::isfinite(z.eta)) {
      std::ostringstream os;
      os << "dual point outside domain: lambda=" << z.lambda << " eta=" << z.eta;
      throw DomainError(os.str());
    }
  }

  DivergenceSpec spec_;
  double k_star_ = 0.0;
  double coef_ = 0.0;
  double lambda_slope_ = 0.0;
};

inline double f_sample(const DivergenceSpec& spec, double loss, const DualPoint& z) {
  return DualKernel(spec).value(loss, z);
}

/// (d f / d lambda, d f / d eta).
inline std::array<double, 2> grad_z_sample(const DivergenceSpec& spec, double loss,
                                           const DualPoint& z) {
  const SampleTerms t = DualKernel(spec).terms(loss, z);
  return {t.d_lambda, t.d_eta};
}

inline std::vector<double> grad_x_sample(const DivergenceSpec& spec, double loss,
                                         std::span<const double> loss_grad, const DualPoint& z) {
  const double c = DualKernel(spec).terms(loss, z).x_coef;
  std::vector<double> g(loss_grad.size());
  for (std::size_t j = 0; j < g.size(); ++j) g[j] = c * loss_grad[j];
  return g;
}

/// Objective and gradients averaged over a set of samples.
struct BatchEval {
  double value = 0.0;
  double d_lambda = 0.0;
  double d_eta = 0.0;
  std::vector<double> grad_x;
};

namespace detail {

template <LossModel M>
void accumulate(const DualKernel& kernel, const M& model, const Dataset& data,
                std::span<const std::size_t> idx, std::span<const double> x, const DualPoint& z,
                bool want_grad_x, double weight_or_zero, BatchEval& out,
                std::vector<double>& scratch) {
  for (std::size_t i : idx) {
    const double w = weight_or_zero > 0.0 ? weight_or_zero : data.weights[i];
    double loss;
    if (want_grad_x) {
      loss = model.value_grad(x, data.row(i), data.labels[i], scratch);
    } else {
      loss = model.value(x, data.row(i), data.labels[i]);
    }
    const SampleTerms t = kernel.terms(loss, z);
    out.value += w * t.value;
    out.d_lambda += w * t.d_lambda;
    out.d_eta += w * t.d_eta;
    if (want_grad_x && t.x_coef != 0.0) {
      const double c = w * t.x_coef;
      for (std::size_t j = 0; j < scratch.size(); ++j) out.grad_x[j] += c * scratch[j];
    }
  }
}

}  // namespace detail

/// Uniform average over `batch` (indices may repeat). Sequential in index
/// order, so results are bitwise reproducible.
template <LossModel M>
BatchEval batch_eval(const DualKernel& kernel, const M& model, const Dataset& data,
                     std::span<const std::size_t> batch, std::span<const double> x,
                     const DualPoint& z, bool want_grad_x = true) {
  if (batch.empty()) throw ConfigError("batch_eval: empty batch");
  BatchEval out;
  out.grad_x.assign(want_grad_x ? model.dim() : 0, 0.0);
  std::vector<double> scratch(model.dim());
  const double w = 1.0 / static_cast<double>(batch.size());
  detail::accumulate(kernel, model, data, batch, x, z, want_grad_x, w, out, scratch);
  return out;
}

template <LossModel M>
double batch_objective(const DualKernel& kernel, const M& model, const Dataset& data,
                       std::span<const std::size_t> batch, std::span<const double> x,
                       const DualPoint& z) {
  return batch_eval(kernel, model, data, batch, x, z, false).value;
}

template <LossModel M>
std::vector<double> batch_grad_x(const DualKernel& kernel, const M& model, const Dataset& data,
                                 std::span<const std::size_t> batch, std::span<const double> x,
                                 const DualPoint& z) {
  return batch_eval(kernel, model, data, batch, x, z, true).grad_x;
}

template <LossModel M>
std::array<double, 2> batch_grad_z(const DivergenceSpec& spec, const M& model, const Dataset& data,
                                   std::span<const std::size_t> batch, std::span<const double> x,
                                   const DualPoint& z) {
  const BatchEval e = batch_eval(DualKernel(spec), model, data, batch, x, z, false);
  return {e.d_lambda, e.d_eta};
}

/// Expectation under P0 (the dataset weights): the full objective F(x; z)
/// and its gradients. With `threads` > 1 the sum is split into fixed chunks
/// of 1024 rows whose partial sums are combined in chunk order, so the
/// result does not depend on the thread count.
template <LossModel M>
BatchEval full_eval(const DualKernel& kernel, const M& model, const Dataset& data,
                    std::span<const double> x, const DualPoint& z, bool want_grad_x = true,
                    unsigned threads = 1) {
  const std::vector<std::size_t> idx = all_indices(data);
  const std::size_t gdim = want_grad_x ? model.dim() : 0;
  if (threads <= 1) {
    BatchEval out;
    out.grad_x.assign(gdim, 0.0);
    std::vector<double> scratch(model.dim());
    detail::accumulate(kernel, model, data, idx, x, z, want_grad_x, 0.0, out, scratch);
    return out;
  }
  constexpr std::size_t kChunk = 1024;
  const std::size_t chunks = (idx.size() + kChunk - 1) / kChunk;
  std::vector<BatchEval> parts(chunks);
  auto work = [&](std::size_t first_chunk) {
    std::vector<double> scratch(model.dim());
    for (std::size_t c = first_chunk; c < chunks; c += threads) {
      parts[c].grad_x.assign(gdim, 0.0);
      const std::size_t lo = c * kChunk, hi = std::min(idx.size(), lo + kChunk);
      detail::accumulate(kernel, model, data, std::span(idx).subspan(lo, hi - lo), x, z,
                         want_grad_x, 0.0, parts[c], scratch);
    }
  };
  std::vector<std::future<void>> jobs;
  for (unsigned t = 0; t < threads; ++t) jobs.push_back(std::async(std::launch::async, work, t));
  for (auto& j : jobs) j.get();
  BatchEval out;
  out.grad_x.assign(gdim, 0.0);
  for (const auto& p : parts) {
    out.value += p.value;
    out.d_lambda += p.d_lambda;
    out.d_eta += p.d_eta;
    for (std::size_t j = 0; j < gdim; ++j) out.grad_x[j] += p.grad_x[j];
  }
  return out;
}

/// Loss value of every row at parameters x.
template <LossModel M>
std::vector<double> loss_values(const M& model, const Dataset& data, std::span<const double> x) {
  std::vector<double> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = model.value(x, data.row(i), data.labels[i]);
  return out;
}

/// F(z) = sum_i p_i f(l_i; z) for a fixed vector of losses.
inline double weighted_objective(const DualKernel& kernel, std::span<const double> losses,
                                 std::span<const double> p, const DualPoint& z) {
  double s = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) s += p[i] * kernel.value(losses[i], z);
  return s;
}

inline std::array<double, 2> weighted_grad_z(const DualKernel& kernel,
                                             std::span<const double> losses,
                                             std::span<const double> p, const DualPoint& z) {
  std::array<double, 2> g{0.0, 0.0};
  for (std::size_t i = 0; i < losses.size(); ++i) {
    const SampleTerms t = kernel.terms(losses[i], z);
    g[0] += p[i] * t.d_lambda;
    g[1] += p[i] * t.d_eta;
  }
  return g;
}

/// g(lambda) = rho + phi*_s(-B/lambda) - B/(mu lambda), increasing in lambda;
/// its root bounds the optimal CVaR lambda.
inline double cvar_lambda_bar_residual(const DivergenceSpec& spec, double B, double lambda) {
  return spec.rho() + phi_conj(spec, -B / lambda) - B / (spec.mu() * lambda);
}

/// Upper bound on the optimal lambda. For Cressie-Read:
///   (k-1) omega^{-1} B / (1 - a),  a = omega^{-1/(k*-1)},
///   omega = (k(k-1)rho + 1)^{1/k}.
/// For smoothed CVaR: the root of `cvar_lambda_bar_residual`, by bisection.
inline double lambda_bar(const DivergenceSpec& spec, double B) {
  if (spec.is_cressie_read()) {
    const double k = spec.k(), ks = spec.k_star(), rho = spec.rho();
    const double omega = std::pow(k * (k - 1.0) * rho + 1.0, 1.0 / k);
    const double a = std::pow(1.0 / omega, 1.0 / (ks - 1.0));
    return (k - 1.0) / omega * (1.0 + a / (1.0 - a)) * B;
  }
  double lo = 1e-8, hi = 10.0 * B / (spec.mu() * spec.rho());
  if (cvar_lambda_bar_residual(spec, B, lo) >= 0.0) return lo;
  for (int it = 0; it < 400 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (cvar_lambda_bar_residual(spec, B, mid) < 0.0 ? lo : hi) = mid;
  }
  // the endpoint with the smaller residual
  return std::abs(cvar_lambda_bar_residual(spec, B, lo)) <
                 std::abs(cvar_lambda_bar_residual(spec, B, hi))
             ? lo
             : hi;
}

/// eta_bar = lambda_bar (k / ((k-1)^{k*} k*))^{1/(k*-1)}; zero for CVaR,
/// whose optimal eta lies in [0, B].
inline double eta_bar(const DivergenceSpec& spec, double lambda_hi) {
  if (!spec.is_cressie_read()) return 0.0;
  const double k = spec.k(), ks = spec.k_star();
  return lambda_hi * std::pow(k / (pow_nonneg(k - 1.0, ks) * ks), 1.0 / (ks - 1.0));
}

/// The box [lambda0, lambda_bar] x [-eta_bar, B] (CVaR: eta in [0, B]).
inline DualDomain compute_domain(const DivergenceSpec& spec, double B, double lambda0) {
  if (!(B > 0.0) || !std::isfinite(B)) throw ConfigError("compute_domain: B must be > 0");
  if (!(lambda0 >= 0.0)) throw ConfigError("compute_domain: lambda0 must be >= 0");
  const double hi = lambda_bar(spec, B);
  if (lambda0 > hi) {
    std::ostringstream os;
    os << "compute_domain: lambda0 = " << lambda0 << " exceeds lambda_bar = " << hi;
    throw ConfigError(os.str());
  }
  return {lambda0, hi, -eta_bar(spec, hi), B};
}

/// Smoothness, variance and diameter constants on the box.
inline ObjectiveConstants compute_constants(const DivergenceSpec& spec, const DualDomain& dom,
                                            double B, double G, double L) {
  const double l0 = dom.lambda_lo;
  if (!(l0 > 0.0)) throw ConfigError("compute_constants: lambda0 must be > 0");
  ObjectiveConstants c;
  c.D = dom.diameter();
  if (spec.is_cressie_read()) {
    const double k = spec.k(), ks = spec.k_star(), rho = spec.rho();
    const double U = B - dom.eta_lo;  // B + eta_bar
    const double coef = pow_nonneg(k - 1.0, ks) / k;
    if (ks == 2.0) {
      c.L_z = 1.0 / l0 + 2.0 * U / (l0 * l0) + U * U / (l0 * l0 * l0);
    } else {
      c.L_z = coef * ks * (ks - 1.0) *
              (std::pow(U, ks) / std::pow(l0, ks + 1.0) + std::pow(U, ks - 2.0) / std::pow(l0, ks - 1.0));
    }
    c.L_x = coef * ks * std::pow(l0, 1.0 - ks) * std::pow(U, ks - 2.0) * ((ks - 1.0) * G * G + U * L);
    c.L_xz = coef * ks * (ks - 1.0) * G * std::pow(U, ks - 1.0) * std::pow(l0, -ks);
    c.sigma0 = coef * ks * std::pow(U, ks - 1.0) * G * std::pow(l0, 1.0 - ks);
    c.sigma1 = (rho + 1.0 + 1.0 / (k * (k - 1.0))) +
               (pow_nonneg(k - 1.0, ks) * std::pow(l0, -ks) * std::pow(U, ks) / k) *
                   (ks - 1.0 + l0 * ks / U);
  } else {
    // Trace bounds on the Hessians using phi*'' <= 1/(4 mu), phi*' <= 1/mu
    // and |l - eta| <= B on the box.
    const double mu = spec.mu(), rho = spec.rho();
    c.L_z = (1.0 / (4.0 * mu)) * (1.0 / l0 + B * B / (l0 * l0 * l0));
    c.L_x = G * G / (4.0 * mu * l0) + L / mu;
    c.L_xz = G / (4.0 * mu) * (1.0 / l0 + B / (l0 * l0));
    c.sigma0 = G / mu;
    c.sigma1 = rho + std::abs(std::log1p(-mu)) / mu + B / (mu * l0) + std::max(1.0, 1.0 / mu - 1.0);
  }
  c.C = c.D * c.D * c.L_z;
  return c;
}

}  // namespace cdro
