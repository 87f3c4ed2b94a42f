#include <gtest/gtest.h>

#include <boost/math/tools/roots.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include "cdro/dual_objective.hpp"
#include "cdro/oracle.hpp"
#include "test_support.hpp"

using namespace cdro;
using cdro::testing::blobs;
using cdro::testing::central_diff;
using cdro::testing::make_dataset;

namespace {

// Independent evaluation of the Cressie-Read per-sample objective in long
// double, straight from the unshifted formula.
long double f_reference(long double k, long double rho, long double l, long double lambda,
                        long double eta) {
  const long double ks = k / (k - 1.0L);
  const long double u = std::max(l - eta, 0.0L);
  return std::pow(k - 1.0L, ks) / k * std::pow(u, ks) * std::pow(lambda, 1.0L - ks) +
         lambda * (rho + 1.0L / (k * (k - 1.0L))) + eta;
}

DualPoint random_point(const DualDomain& d, RngStream& rng) {
  return {rng.uniform(d.lambda_lo, d.lambda_hi), rng.uniform(d.eta_lo, d.eta_hi)};
}

std::vector<DivergenceSpec> specs() {
  return {DivergenceSpec::cressie_read(2.0, 0.5), DivergenceSpec::cressie_read(1.5, 1.0),
          DivergenceSpec::smoothed_cvar(0.3, 0.5)};
}

}  // namespace

TEST(FSampleTest, ClosedFormExamples) {
  const auto s = DivergenceSpec::cressie_read(2.0, 0.5);
  EXPECT_DOUBLE_EQ(f_sample(s, 1.0, {1.0, 0.0}), 1.5);
  for (double rho : {0.1, 0.5, 3.0}) {
    EXPECT_DOUBLE_EQ(f_sample(DivergenceSpec::cressie_read(2.0, rho), 0.0, {1.0, 5.0}), rho + 0.5 + 5.0);
  }
}

TEST(FSampleTest, RationalExponentCase) {
  // k = 1.5: (1/2)^3 / 1.5 * 2^3 * 1 + (1 + 4/3) + 0 = 2/3 + 7/3 = 3
  const auto s = DivergenceSpec::cressie_read(1.5, 1.0);
  const double v = f_sample(s, 2.0, {1.0, 0.0});
  EXPECT_NEAR(v, 3.0, 1e-14);
  EXPECT_NEAR(v, static_cast<double>(f_reference(1.5L, 1.0L, 2.0L, 1.0L, 0.0L)), 1e-14);
}

TEST(FSampleTest, AgreesWithLongDoubleReference) {
  RngStream rng(3, "fsample");
  for (double k : {2.0, 1.8, 1.5, 1.25}) {
    const auto s = DivergenceSpec::cressie_read(k, 0.7);
    for (int i = 0; i < 500; ++i) {
      const double l = rng.uniform(0.0, 2.0), lam = rng.uniform(0.01, 5.0), eta = rng.uniform(-2.0, 2.0);
      const double ref = static_cast<double>(f_reference(k, 0.7L, l, lam, eta));
      EXPECT_NEAR(f_sample(s, l, {lam, eta}), ref, 1e-12 * (1.0 + std::abs(ref)));
    }
  }
}

TEST(FSampleTest, CvarForm) {
  const auto s = DivergenceSpec::smoothed_cvar(0.3, 0.5);
  const double l = 0.8, lam = 0.4, eta = 0.1;
  const double expect = lam * std::log(1.0 - 0.3 + 0.3 * std::exp((l - eta) / lam)) / 0.3 + lam * 0.5 + eta;
  EXPECT_NEAR(f_sample(s, l, {lam, eta}), expect, 1e-14);
}

TEST(FSampleTest, NonPositiveLambdaIsDomainError) {
  for (const auto& s : specs()) {
    EXPECT_THROW(f_sample(s, 1.0, {0.0, 0.0}), DomainError);
    EXPECT_THROW(f_sample(s, 1.0, {-1.0, 0.0}), DomainError);
    EXPECT_THROW(grad_z_sample(s, 1.0, {0.0, 0.0}), DomainError);
  }
}

TEST(GradZSampleTest, ClosedFormExamples) {
  const auto s = DivergenceSpec::cressie_read(2.0, 0.5);
  const auto g = grad_z_sample(s, 1.0, {1.0, 0.0});
  EXPECT_DOUBLE_EQ(g[0], 0.5);
  EXPECT_DOUBLE_EQ(g[1], 0.0);
  for (double rho : {0.2, 1.0}) {
    const auto c = grad_z_sample(DivergenceSpec::cressie_read(2.0, rho), 0.0, {1.0, 1.0});
    EXPECT_DOUBLE_EQ(c[0], rho + 0.5);
    EXPECT_DOUBLE_EQ(c[1], 1.0);
  }
}

TEST(GradZSampleTest, MatchesFiniteDifferences) {
  RngStream rng(5, "gradz");
  for (const auto& s : specs()) {
    for (int i = 0; i < 200; ++i) {
      const double l = rng.uniform(0.0, 1.0), lam = rng.uniform(0.05, 3.0), eta = rng.uniform(-1.0, 0.9);
      if (s.is_cressie_read() && std::abs(l - eta) < 1e-3) continue;
      const auto g = grad_z_sample(s, l, {lam, eta});
      const double hl = 1e-6 * lam, he = 1e-6;
      const double fl = central_diff([&](double v) { return f_sample(s, l, {v, eta}); }, lam, hl);
      const double fe = central_diff([&](double v) { return f_sample(s, l, {lam, v}); }, eta, he);
      const double tol = 1e-6 * std::max(1.0, std::hypot(g[0], g[1]));
      EXPECT_NEAR(g[0], fl, tol) << "k=" << s.k() << " l=" << l << " lam=" << lam << " eta=" << eta;
      EXPECT_NEAR(g[1], fe, tol);
    }
  }
}

TEST(GradXSampleTest, ClampedRegionIsZero) {
  const std::vector<double> lg{1.0, -2.0, 3.0};
  for (const auto& s : {DivergenceSpec::cressie_read(2.0, 0.5), DivergenceSpec::cressie_read(1.5, 1.0)}) {
    const auto g = grad_x_sample(s, 0.2, lg, {1.0, 0.5});
    for (double v : g) EXPECT_EQ(v, 0.0);
  }
}

TEST(GradXSampleTest, ChiSquareClosedForm) {
  // c k* (l - eta) lambda^{1-k*} = 0.5 * 2 * 1 * 0.5 = 0.5
  const std::vector<double> lg{1.0, 0.0};
  const auto g = grad_x_sample(DivergenceSpec::cressie_read(2.0, 0.5), 1.0, lg, {2.0, 0.0});
  EXPECT_DOUBLE_EQ(g[0], 0.5);
  EXPECT_EQ(g[1], 0.0);
  // and it is the derivative of f in the loss value
  const double fd = central_diff(
      [](double l) { return f_sample(DivergenceSpec::cressie_read(2.0, 0.5), l, {2.0, 0.0}); }, 1.0, 1e-6);
  EXPECT_NEAR(fd, 0.5, 1e-9);
}

TEST(GradXSampleTest, MatchesFiniteDifferencesThroughLoss) {
  const Dataset data = blobs(30, 3, 2.0, 4);
  const SquashedLogistic model(1.0, data);
  RngStream rng(6, "gradx");
  for (const auto& s : specs()) {
    for (int p = 0; p < 100; ++p) {
      std::vector<double> x(3), lg(3), fd(3);
      for (auto& v : x) v = rng.normal();
      const std::size_t i = rng.index(data.size());
      const DualPoint z{rng.uniform(0.1, 2.0), rng.uniform(-0.5, 0.4)};
      const double l = model.value_grad(x, data.row(i), data.labels[i], lg);
      const auto an = grad_x_sample(s, l, lg, z);
      for (std::size_t j = 0; j < 3; ++j) {
        auto f = [&](double v) {
          std::vector<double> y = x;
          y[j] = v;
          return f_sample(s, model.value(y, data.row(i), data.labels[i]), z);
        };
        fd[j] = central_diff(f, x[j], 1e-5);
      }
      EXPECT_LE(gradient_rel_error(an, fd), 1e-5);
    }
  }
}

TEST(BatchTest, SingletonEqualsPerSample) {
  const Dataset data = blobs(5, 2, 1.0, 1);
  const SquashedLogistic model(1.0, data);
  const std::vector<double> x{0.3, -0.7};
  const auto s = DivergenceSpec::cressie_read(1.5, 0.4);
  const DualKernel kernel(s);
  const DualPoint z{0.8, 0.1};
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::vector<std::size_t> b{i};
    std::vector<double> lg(2);
    const double l = model.value_grad(x, data.row(i), data.labels[i], lg);
    EXPECT_EQ(batch_objective(kernel, model, data, b, x, z), f_sample(s, l, z));
    EXPECT_EQ(batch_grad_x(kernel, model, data, b, x, z), grad_x_sample(s, l, lg, z));
    const auto gz = batch_grad_z(s, model, data, b, x, z);
    EXPECT_EQ(gz, grad_z_sample(s, l, z));
  }
}

TEST(BatchTest, FullBatchOnThreePointsIsArithmeticMean) {
  const Dataset data = make_dataset({{1.0}, {-2.0}, {0.5}}, {1, 0, 1});
  const SquashedLogistic model(1.0, data);
  const std::vector<double> x{0.4};
  const auto s = DivergenceSpec::cressie_read(2.0, 0.3);
  const DualKernel kernel(s);
  const DualPoint z{0.5, 0.2};
  double mean = 0.0;
  for (std::size_t i = 0; i < 3; ++i) mean += f_sample(s, model.value(x, data.row(i), data.labels[i]), z) / 3.0;
  const auto all = all_indices(data);
  EXPECT_NEAR(batch_objective(kernel, model, data, all, x, z), mean, 1e-15);
  EXPECT_NEAR(full_eval(kernel, model, data, x, z).value, mean, 1e-15);
}

TEST(BatchTest, EmptyBatchRejected) {
  const Dataset data = blobs(3, 2, 1.0, 1);
  const SquashedLogistic model(1.0, data);
  const std::vector<double> x{0.0, 0.0};
  const std::vector<std::size_t> none;
  EXPECT_THROW(batch_objective(DualKernel(DivergenceSpec::cressie_read(2.0, 1.0)), model, data, none, x, {1.0, 0.0}),
               ConfigError);
}

TEST(BatchTest, RandomBatchIsUnbiased) {
  const Dataset data = blobs(50, 3, 1.5, 9);
  const SquashedLogistic model(1.0, data);
  const std::vector<double> x{0.5, -0.2, 0.1};
  const auto s = DivergenceSpec::cressie_read(2.0, 0.5);
  const DualKernel kernel(s);
  const DualPoint z{0.3, 0.2};
  const double full = full_eval(kernel, model, data, x, z, false).value;
  RngStream rng(10, "unbiased");
  double sum = 0.0, sum2 = 0.0;
  const int reps = 100000;
  for (int r = 0; r < reps; ++r) {
    const auto b = sample_batch(data, 8, rng);
    const double v = batch_objective(kernel, model, data, b, x, z);
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / reps, se = std::sqrt((sum2 / reps - mean * mean) / reps);
  EXPECT_LE(std::abs(mean - full), 3.0 * se);
}

TEST(BatchTest, ParallelReductionIndependentOfThreadCount) {
  const Dataset data = blobs(3000, 4, 1.0, 11);
  const SquashedLogistic model(1.0, data);
  const std::vector<double> x{0.5, -0.2, 0.1, 0.3};
  const DualKernel kernel(DivergenceSpec::cressie_read(1.5, 0.5));
  const DualPoint z{0.3, 0.2};
  const BatchEval a = full_eval(kernel, model, data, x, z, true, 2);
  for (unsigned t : {3u, 4u, 8u}) {
    const BatchEval b = full_eval(kernel, model, data, x, z, true, t);
    EXPECT_EQ(a.value, b.value);
    EXPECT_EQ(a.d_lambda, b.d_lambda);
    EXPECT_EQ(a.grad_x, b.grad_x);
  }
  const BatchEval seq = full_eval(kernel, model, data, x, z, true, 1);
  EXPECT_NEAR(seq.value, a.value, 1e-12);
  const BatchEval seq2 = full_eval(kernel, model, data, x, z, true, 1);
  EXPECT_EQ(seq.value, seq2.value);
}

TEST(BatchTest, FullBatchGradientsMatchFiniteDifferences) {
  const Dataset data = blobs(40, 3, 1.5, 12);
  const SquashedLogistic model(1.0, data);
  RngStream rng(13, "consistency");
  for (const auto& s : specs()) {
    const DualKernel kernel(s);
    const DualDomain dom = compute_domain(s, 1.0, 0.05);
    const auto all = all_indices(data);
    for (int p = 0; p < 100; ++p) {
      std::vector<double> x(3);
      for (auto& v : x) v = rng.normal();
      const DualPoint z{rng.uniform(dom.lambda_lo + 0.1 * (dom.lambda_hi - dom.lambda_lo), dom.lambda_hi),
                        rng.uniform(dom.eta_lo, dom.eta_hi)};
      const auto gx = batch_grad_x(kernel, model, data, all, x, z);
      std::vector<double> fd(3);
      for (std::size_t j = 0; j < 3; ++j) {
        fd[j] = central_diff(
            [&](double v) {
              auto y = x;
              y[j] = v;
              return batch_objective(kernel, model, data, all, y, z);
            },
            x[j], 1e-4);
      }
      EXPECT_LE(gradient_rel_error(gx, fd), 1e-5);
      const auto gz = batch_grad_z(s, model, data, all, x, z);
      const double hl = 1e-4 * z.lambda, he = 1e-4 * std::max(1.0, std::abs(z.eta));
      const std::array<double, 2> nz{
          central_diff([&](double v) { return batch_objective(kernel, model, data, all, x, {v, z.eta}); }, z.lambda, hl),
          central_diff([&](double v) { return batch_objective(kernel, model, data, all, x, {z.lambda, v}); }, z.eta, he)};
      EXPECT_LE(gradient_rel_error(gz, nz), 1e-5);
    }
  }
}

TEST(DomainTest, ChiSquareExample) {
  const auto s = DivergenceSpec::cressie_read(2.0, 1.0);
  const DualDomain d = compute_domain(s, 10.0, 0.1);
  const double lbar = 10.0 / (std::sqrt(3.0) - 1.0);
  EXPECT_NEAR(d.lambda_hi, lbar, 1e-12);
  EXPECT_NEAR(d.lambda_hi, 13.6603, 1e-4);
  EXPECT_NEAR(-d.eta_lo, lbar, 1e-12);
  EXPECT_EQ(d.eta_hi, 10.0);
  EXPECT_EQ(d.lambda_lo, 0.1);
}

TEST(DomainTest, LambdaBarShrinksWithRadius) {
  double prev = kInfinity;
  for (double rho : {0.1, 1.0, 10.0, 100.0, 1e4, 1e6}) {
    const double lb = lambda_bar(DivergenceSpec::cressie_read(2.0, rho), 1.0);
    EXPECT_LT(lb, prev);
    EXPECT_NEAR(lb, 1.0 / (std::sqrt(2.0 * rho + 1.0) - 1.0), 1e-12 * lb);
    prev = lb;
  }
  EXPECT_LT(prev, 1e-2);
}

TEST(DomainTest, CvarBisectionRoot) {
  const auto s = DivergenceSpec::smoothed_cvar(0.5, 1.0);
  const double B = 10.0;
  const double lb = lambda_bar(s, B);
  EXPECT_LE(std::abs(cvar_lambda_bar_residual(s, B, lb)), 1e-10);
  // independent root finder on the same residual
  boost::math::tools::eps_tolerance<double> tol(50);
  std::uintmax_t iters = 200;
  const auto [a, b] = boost::math::tools::toms748_solve(
      [&](double l) { return cvar_lambda_bar_residual(s, B, l); }, 1e-8, 10.0 * B / (0.5 * 1.0), tol, iters);
  EXPECT_NEAR(lb, 0.5 * (a + b), 1e-10 * lb);
  const DualDomain d = compute_domain(s, B, 0.01);
  EXPECT_EQ(d.eta_lo, 0.0);
  EXPECT_EQ(d.eta_hi, B);
}

TEST(DomainTest, ResidualIsIncreasing) {
  for (double mu : {0.1, 0.3, 0.5, 0.9}) {
    const auto s = DivergenceSpec::smoothed_cvar(mu, 0.7);
    double prev = -kInfinity;
    for (double l = 1e-3; l < 100.0; l *= 1.1) {
      const double g = cvar_lambda_bar_residual(s, 1.0, l);
      EXPECT_GE(g, prev - 1e-12);
      prev = g;
    }
  }
}

TEST(DomainTest, LambdaZeroAboveBarRejected) {
  EXPECT_THROW(compute_domain(DivergenceSpec::cressie_read(2.0, 1.0), 10.0, 100.0), ConfigError);
  EXPECT_THROW(compute_domain(DivergenceSpec::cressie_read(2.0, 1.0), 0.0, 0.1), ConfigError);
}

TEST(DomainTest, CornersAndClamp) {
  const DualDomain d{0.1, 13.66, -13.66, 10.0};
  const auto c = d.corners();
  EXPECT_EQ(c.size(), 4u);
  for (const auto& p : c) EXPECT_TRUE(d.contains(p));
  EXPECT_EQ(d.clamp({-1.0, 50.0}), (DualPoint{0.1, 10.0}));
  EXPECT_NEAR(d.diameter(), std::sqrt(13.56 * 13.56 + 23.66 * 23.66), 1e-12);
}

TEST(ConstantsTest, ChiSquarePlugIn) {
  const auto s = DivergenceSpec::cressie_read(2.0, 1.0);
  // lambda0 = 1 and B + eta_bar = 1
  const DualDomain d{1.0, 2.0, -0.5, 0.5};
  const ObjectiveConstants c = compute_constants(s, d, 0.5, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(c.L_z, 4.0);
  EXPECT_DOUBLE_EQ(c.D, d.diameter());
  EXPECT_DOUBLE_EQ(c.C, c.D * c.D * c.L_z);
}

TEST(ConstantsTest, AllPositive) {
  for (const auto& s : specs()) {
    const DualDomain d = compute_domain(s, 1.0, 0.05);
    const ObjectiveConstants c = compute_constants(s, d, 1.0, 0.5, 0.2);
    EXPECT_GT(c.L_x, 0.0);
    EXPECT_GT(c.L_z, 0.0);
    EXPECT_GT(c.sigma0, 0.0);
    EXPECT_GT(c.sigma1, 0.0);
    EXPECT_GT(c.D, 0.0);
    EXPECT_GE(c.C, c.D * c.D * c.L_z);
  }
  EXPECT_THROW(compute_constants(specs()[0], DualDomain{0.0, 1.0, -1.0, 1.0}, 1.0, 1.0, 1.0), ConfigError);
}

TEST(ConstantsTest, SampledZSmoothnessBelowLz) {
  const Dataset data = blobs(25, 2, 1.0, 14);
  const SquashedLogistic model(1.0, data);
  RngStream rng(15, "lz");
  for (const auto& s : specs()) {
    const DualKernel kernel(s);
    const DualDomain dom = compute_domain(s, 1.0, 0.05);
    const ObjectiveConstants c = compute_constants(s, dom, 1.0, model.constants().G, model.constants().L);
    double worst = 0.0;
    for (int p = 0; p < 10000; ++p) {
      const std::vector<double> x{rng.normal(), rng.normal()};
      const auto losses = loss_values(model, data, x);
      const DualPoint a = random_point(dom, rng);
      // half the pairs are close, where curvature is probed locally
      DualPoint b = random_point(dom, rng);
      if (p % 2) b = dom.clamp({a.lambda + 1e-3 * rng.normal(), a.eta + 1e-3 * rng.normal()});
      const double dz = std::hypot(a.lambda - b.lambda, a.eta - b.eta);
      if (dz == 0.0) continue;
      const auto ga = weighted_grad_z(kernel, losses, data.weights, a);
      const auto gb = weighted_grad_z(kernel, losses, data.weights, b);
      worst = std::max(worst, std::hypot(ga[0] - gb[0], ga[1] - gb[1]) / dz);
    }
    EXPECT_LE(worst, c.L_z) << family_name(s.family()) << " k=" << s.k();
  }
}

TEST(ConstantsTest, SampledXSmoothnessBelowLx) {
  const Dataset data = blobs(25, 2, 1.0, 16);
  const SquashedLogistic model(1.0, data);
  RngStream rng(17, "lx");
  for (const auto& s : specs()) {
    const DualKernel kernel(s);
    const DualDomain dom = compute_domain(s, 1.0, 0.05);
    const ObjectiveConstants c = compute_constants(s, dom, 1.0, model.constants().G, model.constants().L);
    for (int p = 0; p < 10000; ++p) {
      const DualPoint z = random_point(dom, rng);
      const std::vector<double> x1{rng.normal(0.0, 3.0), rng.normal(0.0, 3.0)};
      const double step = p % 2 ? 1e-3 : 1.0;
      const std::vector<double> x2{x1[0] + step * rng.normal(), x1[1] + step * rng.normal()};
      const auto g1 = full_eval(kernel, model, data, x1, z).grad_x;
      const auto g2 = full_eval(kernel, model, data, x2, z).grad_x;
      const double dx = std::hypot(x1[0] - x2[0], x1[1] - x2[1]);
      ASSERT_LE(std::hypot(g1[0] - g2[0], g1[1] - g2[1]), c.L_x * dx + 1e-15);
    }
  }
}

TEST(ConstantsTest, SampleGradientBoundedBySigma0) {
  RngStream rng(18, "sigma0");
  const double B = 1.0, G = 0.7;
  for (const auto& s : specs()) {
    const DualDomain dom = compute_domain(s, B, 0.05);
    const ObjectiveConstants c = compute_constants(s, dom, B, G, 0.1);
    for (int p = 0; p < 20000; ++p) {
      const DualPoint z = random_point(dom, rng);
      const double l = rng.uniform(0.0, B);
      const double ang = rng.uniform(0.0, 6.283185307179586);
      const std::vector<double> lg{G * std::cos(ang), G * std::sin(ang)};
      const auto g = grad_x_sample(s, l, lg, z);
      ASSERT_LE(std::hypot(g[0], g[1]), c.sigma0 * (1.0 + 1e-12));
    }
    // corner where the bound is attained: l = B, eta = -eta_bar, lambda = lambda0
    const std::vector<double> lg{G, 0.0};
    const auto g = grad_x_sample(s, B, lg, {dom.lambda_lo, dom.eta_lo});
    EXPECT_LE(std::abs(g[0]), c.sigma0 * (1.0 + 1e-12));
  }
}

TEST(ConvexityTest, JointMidpointInZ) {
  const Dataset data = blobs(20, 2, 1.0, 19);
  const SquashedLogistic model(1.0, data);
  RngStream rng(20, "joint");
  for (const auto& s : specs()) {
    const DualKernel kernel(s);
    const DualDomain dom = compute_domain(s, 1.0, 0.05);
    for (int p = 0; p < 10000; ++p) {
      const std::vector<double> x{rng.normal(), rng.normal()};
      const auto losses = loss_values(model, data, x);
      const DualPoint a = random_point(dom, rng), b = random_point(dom, rng);
      const DualPoint m{0.5 * (a.lambda + b.lambda), 0.5 * (a.eta + b.eta)};
      const double fm = weighted_objective(kernel, losses, data.weights, m);
      const double avg = 0.5 * (weighted_objective(kernel, losses, data.weights, a) +
                                weighted_objective(kernel, losses, data.weights, b));
      ASSERT_LE(fm, avg + 1e-10);
    }
  }
}

TEST(DomainTest, UnconstrainedMinimiserInsideBox) {
  RngStream rng(21, "domain-correctness");
  std::vector<DivergenceSpec> fams;
  for (int inst = 0; inst < 50; ++inst) {
    const double rho = rng.uniform(0.01, 5.0);
    const int which = inst % 4;
    const DivergenceSpec s = which == 0   ? DivergenceSpec::cressie_read(2.0, rho)
                             : which == 1 ? DivergenceSpec::cressie_read(1.5, rho)
                             : which == 2 ? DivergenceSpec::cressie_read(1.25, rho)
                                          : DivergenceSpec::smoothed_cvar(0.3, rho);
    const std::size_t n = 2 + rng.index(7);
    const double B = 1.0;
    std::vector<double> losses(n), p(n);
    for (auto& l : losses) l = rng.uniform(0.0, B);
    for (auto& v : p) v = rng.uniform(0.1, 1.0);
    const double tot = std::accumulate(p.begin(), p.end(), 0.0);
    for (auto& v : p) v /= tot;
    const DualMinResult r = dual_min(s, losses, p);
    const double lb = lambda_bar(s, B), eb = eta_bar(s, lb);
    EXPECT_GE(r.z_star.lambda, 0.0);
    EXPECT_LE(r.z_star.lambda, lb * (1.0 + 1e-9)) << "instance " << inst;
    EXPECT_GE(r.z_star.eta, -eb - 1e-9) << "instance " << inst;
    EXPECT_LE(r.z_star.eta, B + 1e-9);
  }
}
