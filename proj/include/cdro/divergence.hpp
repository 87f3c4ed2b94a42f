#pragma once

#include <cmath>
#include <limits>
#include <sstream>

#include "cdro/errors.hpp"

namespace cdro {

enum class Family { CressieRead, SmoothedCVaR };

inline const char* family_name(Family f) {
  return f == Family::CressieRead ? "cressie_read" : "smoothed_cvar";
}

constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Which phi-divergence defines the uncertainty ball, and its radius.
///
/// Cressie-Read members are restricted to k in (1, 2], the range where the
/// conjugate is smooth; the smoothed CVaR divergence takes a level mu in
/// (0, 1). Construction validates and rejects rho == 0 (that is plain ERM).
class DivergenceSpec {
 public:
  static DivergenceSpec cressie_read(double k, double rho) {
    if (!(k > 1.0 && k <= 2.0)) {
      std::ostringstream os;
      os << "Cressie-Read order k must lie in (1, 2], got " << k;
      throw ConfigError(os.str());
    }
    check_rho(rho);
    return DivergenceSpec(Family::CressieRead, k, 0.0, rho);
  }

  static DivergenceSpec smoothed_cvar(double mu, double rho) {
    if (!(mu > 0.0 && mu < 1.0)) {
      std::ostringstream os;
      os << "smoothed CVaR level mu must lie in (0, 1), got " << mu;
      throw ConfigError(os.str());
    }
    check_rho(rho);
    return DivergenceSpec(Family::SmoothedCVaR, 0.0, mu, rho);
  }

  Family family() const { return family_; }
  bool is_cressie_read() const { return family_ == Family::CressieRead; }
  double k() const { return k_; }
  /// Conjugate exponent k/(k-1); zero for the CVaR family.
  double k_star() const { return k_star_; }
  double mu() const { return mu_; }
  double rho() const { return rho_; }

  /// Same divergence, different radius.
  DivergenceSpec with_rho(double rho) const {
    return is_cressie_read() ? cressie_read(k_, rho) : smoothed_cvar(mu_, rho);
  }

 private:
  DivergenceSpec(Family family, double k, double mu, double rho)
      : family_(family), k_(k), k_star_(k > 0.0 ? k / (k - 1.0) : 0.0), mu_(mu), rho_(rho) {}

  static void check_rho(double rho) {
    if (!(rho > 0.0) || !std::isfinite(rho)) {
      std::ostringstream os;
      os << "uncertainty radius rho must be finite and > 0, got " << rho;
      throw ConfigError(os.str());
    }
  }

  Family family_;
  double k_;
  double k_star_;
  double mu_;
  double rho_;
};

namespace detail {

inline void require_finite(double t, const char* where) {
  if (!std::isfinite(t)) {
    std::ostringstream os;
    os << where << ": non-finite argument " << t;
    throw DomainError(os.str());
  }
}

}  // namespace detail

/// base^exponent for base >= 0. Small integer exponents multiply directly;
/// everything else goes through exp(exponent * log(base)). Base 0 returns 0
/// for positive exponents and 1 for exponent 0.
inline double pow_nonneg(double base, double exponent) {
  if (base <= 0.0) return exponent == 0.0 ? 1.0 : 0.0;
  if (exponent == std::floor(exponent) && exponent >= 0.0 && exponent <= 8.0) {
    double r = 1.0;
    for (int i = 0; i < static_cast<int>(exponent); ++i) r *= base;
    return r;
  }
  return std::exp(exponent * std::log(base));
}

/// (t)_+^exponent with an exact zero branch.
inline double pos_pow(double t, double exponent) {
  return t > 0.0 ? pow_nonneg(t, exponent) : (exponent == 0.0 ? 1.0 : 0.0);
}

/// The divergence generator phi(t). Returns +inf outside its domain.
inline double phi(const DivergenceSpec& spec, double t) {
  detail::require_finite(t, "phi");
  if (t < 0.0) return kInfinity;
  if (spec.is_cressie_read()) {
    if (t == 1.0) return 0.0;
    const double k = spec.k();
    if (k == 2.0) return 0.5 * (t - 1.0) * (t - 1.0);
    return (pow_nonneg(t, k) - k * t + k - 1.0) / (k * (k - 1.0));
  }
  const double mu = spec.mu();
  if (t >= 1.0 / mu) return kInfinity;
  if (t == 1.0) return 0.0;
  const double a = t > 0.0 ? t * std::log(t) : 0.0;
  const double rest = 1.0 - mu * t;
  return a + (rest / mu) * std::log(rest / (1.0 - mu));
}

/// phi'(t) on the open domain; used by KKT residuals in the oracle.
inline double phi_grad(const DivergenceSpec& spec, double t) {
  detail::require_finite(t, "phi_grad");
  if (spec.is_cressie_read()) {
    const double k = spec.k();
    if (t < 0.0) return -kInfinity;
    return (pow_nonneg(t, k - 1.0) - 1.0) / (k - 1.0);
  }
  const double mu = spec.mu();
  if (t <= 0.0) return -kInfinity;
  if (t >= 1.0 / mu) return kInfinity;
  return std::log(t) - std::log((1.0 - mu * t) / (1.0 - mu));
}

/// Fenchel conjugate phi*(t) = sup_s { s t - phi(s) }.
inline double phi_conj(const DivergenceSpec& spec, double t) {
  detail::require_finite(t, "phi_conj");
  if (spec.is_cressie_read()) {
    const double k = spec.k();
    const double u = (k - 1.0) * t + 1.0;
    return (pos_pow(u, spec.k_star()) - 1.0) / k;
  }
  const double mu = spec.mu();
  if (t <= 0.0) return std::log1p(mu * std::expm1(t)) / mu;
  // log(1 - mu + mu e^t) = t + log(mu + (1 - mu) e^-t), safe for large t
  return (t + std::log(mu + (1.0 - mu) * std::exp(-t))) / mu;
}

/// d/dt phi*(t). For Cressie-Read this is ((k-1)t + 1)_+^{k*-1}; for the
/// smoothed CVaR it is e^t / (1 - mu + mu e^t), which lies in (0, 1/mu).
inline double phi_conj_grad(const DivergenceSpec& spec, double t) {
  detail::require_finite(t, "phi_conj_grad");
  if (spec.is_cressie_read()) {
    const double u = (spec.k() - 1.0) * t + 1.0;
    return pos_pow(u, spec.k_star() - 1.0);
  }
  const double mu = spec.mu();
  if (t < 0.0) {
    const double e = std::exp(t);
    return e / (1.0 - mu + mu * e);
  }
  return 1.0 / (mu + (1.0 - mu) * std::exp(-t));
}

/// d^2/dt^2 phi*(t). At the Cressie-Read kink with k* = 2 the right limit
/// (1) is returned for u > 0 and 0 otherwise.
inline double phi_conj_hess(const DivergenceSpec& spec, double t) {
  detail::require_finite(t, "phi_conj_hess");
  if (spec.is_cressie_read()) {
    const double u = (spec.k() - 1.0) * t + 1.0;
    if (u <= 0.0) return 0.0;
    return pow_nonneg(u, spec.k_star() - 2.0);
  }
  const double mu = spec.mu();
  // (1-mu) e^t / (1 - mu + mu e^t)^2, written in e^{-|t|} to avoid overflow
  const double e = std::exp(-std::abs(t));
  const double denom = t < 0.0 ? (1.0 - mu) + mu * e : mu + (1.0 - mu) * e;
  return (1.0 - mu) * e / (denom * denom);
}

}  // namespace cdro
