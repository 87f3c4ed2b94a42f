#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <cstddef>
#include <span>
#include <vector>

#include "cdro/data.hpp"
#include "cdro/errors.hpp"
#include "cdro/rng.hpp"

namespace cdro {

/// Bound B on the loss, Lipschitz constant G and smoothness constant L,
/// valid on the parameter ball ||x|| <= radius (radius = +inf means
/// everywhere). `empirical` marks sampled rather than analytic constants.
struct LossConstants {
  double B = 0.0;
  double G = 0.0;
  double L = 0.0;
  double radius = std::numeric_limits<double>::infinity();
  bool empirical = false;
};

/// A bounded non-convex loss l(x; s) with analytic gradient. A sample is a
/// feature row plus an integer label.
template <class M>
concept LossModel = requires(const M& m, std::span<const double> x, std::span<const double> a,
                             int y, std::span<double> g) {
  { m.dim() } -> std::convertible_to<std::size_t>;
  { m.value(x, a, y) } -> std::convertible_to<double>;
  // writes the gradient into g and returns the loss value
  { m.value_grad(x, a, y, g) } -> std::convertible_to<double>;
  { m.constants() } -> std::convertible_to<LossConstants>;
};

namespace detail {

inline double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace detail

/// max over sigma in (0,1) of |sigma (1 - sigma)(1 - 2 sigma)| = 1 / (6 sqrt 3).
inline constexpr double kSigmoidCurvatureBound = 0.09622504486493763;

/// l(x; a, y) = B * sigmoid(-y <a, x>) with y = +1 for positive labels and
/// -1 otherwise. Bounded in [0, B], smooth, and non-convex in x.
class SquashedLogistic {
 public:
  /// Constants are computed from the largest feature norm in `data`.
  SquashedLogistic(double scale, const Dataset& data) : scale_(scale), dim_(data.dim()) {
    if (!(scale > 0.0)) throw ConfigError("squashed_logistic: scale B must be > 0");
    double max_norm = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i)
      max_norm = std::max(max_norm, detail::norm2(data.row(i)));
    constants_ = {scale, scale * max_norm / 4.0,
                  scale * max_norm * max_norm * kSigmoidCurvatureBound,
                  std::numeric_limits<double>::infinity(), false};
  }

  std::size_t dim() const { return dim_; }
  LossConstants constants() const { return constants_; }
  double scale() const { return scale_; }

  static double sign_of(int label) { return label > 0 ? 1.0 : -1.0; }

  double value(std::span<const double> x, std::span<const double> a, int label) const {
    return scale_ * detail::sigmoid(-sign_of(label) * detail::dot(a, x));
  }

  double value_grad(std::span<const double> x, std::span<const double> a, int label,
                    std::span<double> g) const {
    const double y = sign_of(label);
    const double s = detail::sigmoid(-y * detail::dot(a, x));
    const double c = -scale_ * y * s * (1.0 - s);
    for (std::size_t j = 0; j < a.size(); ++j) g[j] = c * a[j];
    return scale_ * s;
  }

 private:
  double scale_;
  std::size_t dim_;
  LossConstants constants_;
};

/// One hidden tanh layer followed by a softmax; l = B * (1 - p_label).
///
/// Parameters are flattened as [W1 (hidden x in), b1 (hidden), W2 (classes x
/// hidden), b2 (classes)]. Analytic (G, L) for this network are uselessly
/// loose, so `certify` samples them and multiplies by a safety factor;
/// the result is flagged empirical.
class TinyMlp {
 public:
  TinyMlp(std::size_t in_dim, std::size_t hidden, std::size_t classes, double scale)
      : in_(in_dim), hidden_(hidden), classes_(classes), scale_(scale) {
    if (hidden == 0 || hidden > 32) throw ConfigError("tiny_mlp: hidden width must be in [1, 32]");
    if (classes < 2) throw ConfigError("tiny_mlp: need at least 2 classes");
    if (in_dim == 0) throw ConfigError("tiny_mlp: input dimension must be >= 1");
    if (!(scale > 0.0)) throw ConfigError("tiny_mlp: scale B must be > 0");
    constants_ = {scale, 0.0, 0.0, std::numeric_limits<double>::infinity(), true};
  }

  std::size_t dim() const { return hidden_ * in_ + hidden_ + classes_ * hidden_ + classes_; }
  std::size_t hidden() const { return hidden_; }
  std::size_t classes() const { return classes_; }
  std::size_t input_dim() const { return in_; }
  LossConstants constants() const { return constants_; }

  /// Small random initial parameters (normal with the given scale).
  std::vector<double> init_params(RngStream& rng, double sd = 0.1) const {
    std::vector<double> x(dim());
    for (auto& v : x) v = rng.normal(0.0, sd);
    return x;
  }

  double value(std::span<const double> x, std::span<const double> a, int label) const {
    Forward f = forward(x, a);
    return scale_ * (1.0 - f.prob[checked(label)]);
  }

  /// Class probabilities for prediction.
  std::vector<double> predict(std::span<const double> x, std::span<const double> a) const {
    return forward(x, a).prob;
  }

  double value_grad(std::span<const double> x, std::span<const double> a, int label,
                    std::span<double> g) const {
    const std::size_t y = checked(label);
    Forward f = forward(x, a);
    const double py = f.prob[y];
    // d l / d logit_j = -B p_y (delta_jy - p_j)
    std::vector<double> d_out(classes_);
    for (std::size_t j = 0; j < classes_; ++j)
      d_out[j] = -scale_ * py * ((j == y ? 1.0 : 0.0) - f.prob[j]);

    const std::size_t w2 = hidden_ * in_ + hidden_;
    const std::size_t b2 = w2 + classes_ * hidden_;
    std::vector<double> d_hidden(hidden_, 0.0);
    for (std::size_t j = 0; j < classes_; ++j) {
      for (std::size_t h = 0; h < hidden_; ++h) {
        g[w2 + j * hidden_ + h] = d_out[j] * f.act[h];
        d_hidden[h] += x[w2 + j * hidden_ + h] * d_out[j];
      }
      g[b2 + j] = d_out[j];
    }
    const std::size_t b1 = hidden_ * in_;
    for (std::size_t h = 0; h < hidden_; ++h) {
      const double dz = d_hidden[h] * (1.0 - f.act[h] * f.act[h]);
      for (std::size_t i = 0; i < in_; ++i) g[h * in_ + i] = dz * a[i];
      g[b1 + h] = dz;
    }
    return scale_ * (1.0 - py);
  }

  /// Samples parameters in the ball ||x|| <= radius together with data rows
  /// and sets G, L to the observed suprema times `safety`.
  void certify(const Dataset& data, double radius, std::size_t draws, RngStream& rng,
               double safety = 1.5) {
    std::vector<double> x1(dim()), x2(dim()), g1(dim()), g2(dim());
    double g_max = 0.0, l_max = 0.0;
    for (std::size_t t = 0; t < draws; ++t) {
      random_in_ball(x1, radius, rng);
      // nearby partner for the smoothness ratio
      const double step = radius * 1e-2;
      for (std::size_t j = 0; j < x1.size(); ++j) x2[j] = x1[j] + rng.normal(0.0, step);
      const std::size_t i = rng.index(data.size());
      value_grad(x1, data.row(i), data.labels[i], g1);
      value_grad(x2, data.row(i), data.labels[i], g2);
      g_max = std::max(g_max, detail::norm2(g1));
      double num = 0.0, den = 0.0;
      for (std::size_t j = 0; j < x1.size(); ++j) {
        num += (g1[j] - g2[j]) * (g1[j] - g2[j]);
        den += (x1[j] - x2[j]) * (x1[j] - x2[j]);
      }
      if (den > 0.0) l_max = std::max(l_max, std::sqrt(num / den));
    }
    constants_ = {scale_, safety * g_max, safety * l_max, radius, true};
  }

 private:
  struct Forward {
    std::vector<double> act;
    std::vector<double> prob;
  };

  std::size_t checked(int label) const {
    if (label < 0 || static_cast<std::size_t>(label) >= classes_)
      throw ConfigError("tiny_mlp: label out of range");
    return static_cast<std::size_t>(label);
  }

  Forward forward(std::span<const double> x, std::span<const double> a) const {
    Forward f{std::vector<double>(hidden_), std::vector<double>(classes_)};
    const std::size_t b1 = hidden_ * in_;
    for (std::size_t h = 0; h < hidden_; ++h) {
      double z = x[b1 + h];
      for (std::size_t i = 0; i < in_; ++i) z += x[h * in_ + i] * a[i];
      f.act[h] = std::tanh(z);
    }
    const std::size_t w2 = b1 + hidden_;
    const std::size_t b2 = w2 + classes_ * hidden_;
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < classes_; ++j) {
      double o = x[b2 + j];
      for (std::size_t h = 0; h < hidden_; ++h) o += x[w2 + j * hidden_ + h] * f.act[h];
      f.prob[j] = o;
      top = std::max(top, o);
    }
    double total = 0.0;
    for (auto& p : f.prob) total += (p = std::exp(p - top));
    for (auto& p : f.prob) p /= total;
    return f;
  }

  static void random_in_ball(std::vector<double>& x, double radius, RngStream& rng) {
    double n = 0.0;
    for (auto& v : x) {
      v = rng.normal();
      n += v * v;
    }
    const double r = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(x.size()));
    const double s = n > 0.0 ? r / std::sqrt(n) : 0.0;
    for (auto& v : x) v *= s;
  }

  std::size_t in_;
  std::size_t hidden_;
  std::size_t classes_;
  double scale_;
  LossConstants constants_;
};

/// l(x; s) = c for every sample; the degenerate case with G = L = 0.
class ConstantLoss {
 public:
  ConstantLoss(double value, std::size_t dim) : value_(value), dim_(dim) {
    if (!(value >= 0.0) || !std::isfinite(value)) throw ConfigError("constant loss must be >= 0");
  }
  std::size_t dim() const { return dim_; }
  LossConstants constants() const {
    return {std::max(value_, 1e-12), 0.0, 0.0, std::numeric_limits<double>::infinity(), false};
  }
  double value(std::span<const double>, std::span<const double>, int) const { return value_; }
  double value_grad(std::span<const double>, std::span<const double>, int,
                    std::span<double> g) const {
    std::fill(g.begin(), g.end(), 0.0);
    return value_;
  }

 private:
  double value_;
  std::size_t dim_;
};

/// Result of a central-difference gradient audit.
struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::vector<double> worst_x;
  std::size_t worst_sample = 0;
  std::size_t worst_coord = 0;
};

/// Relative error between an analytic and a numeric gradient, with the
/// denominator floored at `floor` so that near-zero gradients are judged on
/// absolute error.
inline double gradient_rel_error(std::span<const double> analytic, std::span<const double> numeric,
                                 double floor = 1e-6) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t j = 0; j < analytic.size(); ++j) {
    diff += (analytic[j] - numeric[j]) * (analytic[j] - numeric[j]);
    na += analytic[j] * analytic[j];
    nn += numeric[j] * numeric[j];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), floor});
}

/// Central-difference audit of `model` at `points` random (x, sample) pairs.
/// x is drawn as a standard normal vector scaled by `x_scale`.
template <LossModel M>
GradCheckReport finite_diff_check(const M& model, const Dataset& data, std::size_t points,
                                  double h, RngStream& rng, double x_scale = 1.0) {
  if (!(h >= 1e-8 && h <= 1e-3)) throw ConfigError("finite_diff_check: h must lie in [1e-8, 1e-3]");
  const std::size_t d = model.dim();
  std::vector<double> x(d), g(d), fd(d);
  GradCheckReport rep;
  for (std::size_t p = 0; p < points; ++p) {
    for (auto& v : x) v = rng.normal(0.0, x_scale);
    const std::size_t i = rng.index(data.size());
    const auto a = data.row(i);
    const int y = data.labels[i];
    model.value_grad(x, a, y, g);
    std::size_t worst_coord = 0;
    double worst_abs = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double keep = x[j];
      x[j] = keep + h;
      const double up = model.value(x, a, y);
      x[j] = keep - h;
      const double dn = model.value(x, a, y);
      x[j] = keep;
      fd[j] = (up - dn) / (2.0 * h);
      const double e = std::abs(fd[j] - g[j]);
      if (e > worst_abs) {
        worst_abs = e;
        worst_coord = j;
      }
    }
    const double rel = gradient_rel_error(g, fd);
    rep.max_abs_error = std::max(rep.max_abs_error, worst_abs);
    if (rel > rep.max_rel_error || rep.worst_x.empty()) {
      rep.max_rel_error = std::max(rel, rep.max_rel_error);
      rep.worst_x = x;
      rep.worst_sample = i;
      rep.worst_coord = worst_coord;
    }
  }
  return rep;
}

/// Mean loss over the given rows (uniform average).
template <LossModel M>
double mean_loss(const M& model, const Dataset& data, std::span<const double> x,
                 std::span<const std::size_t> batch) {
  double s = 0.0;
  for (std::size_t i : batch) s += model.value(x, data.row(i), data.labels[i]);
  return s / static_cast<double>(batch.size());
}

}  // namespace cdro
