// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "cdro/cdro.hpp"
#include "../test_support.hpp"

using namespace cdro;
using cdro::testing::Instance;
using cdro::testing::random_instance;
using cdro::testing::source_path;

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void verdict(int id, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::cout << "criterion " << id << ": " << (pass ? "PASS" : "FAIL") << "  " << detail << std::endl;
}

std::string scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cdro_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// ---- 1, 2: duality battery

struct DualityStats {
  std::size_t instances = 0, violations = 0;
  double worst = 0.0;
};

struct BoxStats {
  std::size_t checks = 0, violations = 0, skipped = 0;
  double worst_ratio = 0.0;  // gap / (2 lambda0 rho)
};

void duality_battery(std::size_t n, bool cvar_only, DualityStats& dual, BoxStats& box) {
  RngStream rng(20240501, cvar_only ? "battery-cvar" : "battery");
  for (std::size_t i = 0; i < n; ++i) {
    const Instance inst = random_instance(cvar_only ? 2 * i + 1 : i, rng);
    const double primal = primal_worst_case(inst.spec, inst.losses, inst.p0).value;
    const double dval = dual_min(inst.spec, inst.losses, inst.p0).value;
    const double err = std::abs(primal - dval) / (1.0 + std::abs(primal));
    ++dual.instances;
    dual.worst = std::max(dual.worst, err);
    if (err > 1e-5) ++dual.violations;

    for (double l0 : {1e-3, 1e-2, 1e-1}) {
      if (l0 >= lambda_bar(inst.spec, 1.0)) {
        ++box.skipped;
        continue;
      }
      const DualDomain dom = compute_domain(inst.spec, 1.0, l0);
      const double boxed = dual_min(inst.spec, inst.losses, inst.p0, dom).value;
      const double gap = boxed - dval;
      const double bound = 2.0 * l0 * inst.spec.rho();
      ++box.checks;
      box.worst_ratio = std::max(box.worst_ratio, gap / bound);
      // 1e-9 absorbs the minimizers' own tolerance
      if (gap > bound + 1e-9) ++box.violations;
    }
  }
}

// ---- 3: convexity and smoothness certificates

struct CertStats {
  std::size_t pairs = 0, convex_fail = 0, lz_fail = 0, lx_fail = 0, sigma_fail = 0;
  double lz_ratio = 0.0, lx_ratio = 0.0;
};

CertStats certify_instance(const DivergenceSpec& spec, std::uint64_t seed) {
  const Dataset data = cdro::testing::blobs(20, 3, 1.5, seed);
  const SquashedLogistic model(1.0, data);
  const auto lc = model.constants();
  const DualDomain dom = compute_domain(spec, lc.B, 0.05);
  const ObjectiveConstants c = compute_constants(spec, dom, lc.B, lc.G, lc.L);
  const DualKernel kernel(spec);
  RngStream rng(seed, "certificates");
  CertStats s;
  auto draw_z = [&] {
    return DualPoint{rng.uniform(dom.lambda_lo, dom.lambda_hi), rng.uniform(dom.eta_lo, dom.eta_hi)};
  };
  std::vector<double> x1(3), x2(3);
  for (int t = 0; t < 10000; ++t) {
    for (auto& v : x1) v = rng.normal(0.0, 2.0);
    for (auto& v : x2) v = rng.normal(0.0, 2.0);
    const DualPoint a = draw_z(), b = draw_z(), m{0.5 * (a.lambda + b.lambda), 0.5 * (a.eta + b.eta)};
    const BatchEval ea = full_eval(kernel, model, data, x1, a, true);
    const BatchEval eb = full_eval(kernel, model, data, x1, b, false);
    const BatchEval em = full_eval(kernel, model, data, x1, m, false);
    const BatchEval ex = full_eval(kernel, model, data, x2, a, true);
    ++s.pairs;
    if (em.value > 0.5 * (ea.value + eb.value) + 1e-10) ++s.convex_fail;

    const double dz = std::hypot(a.lambda - b.lambda, a.eta - b.eta);
    const double gz = std::hypot(ea.d_lambda - eb.d_lambda, ea.d_eta - eb.d_eta);
    if (dz > 0.0) {
      s.lz_ratio = std::max(s.lz_ratio, gz / (c.L_z * dz));
      if (gz > c.L_z * dz) ++s.lz_fail;
    }
    double dx = 0.0, gx = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      dx += (x1[j] - x2[j]) * (x1[j] - x2[j]);
      gx += (ea.grad_x[j] - ex.grad_x[j]) * (ea.grad_x[j] - ex.grad_x[j]);
    }
    dx = std::sqrt(dx);
    gx = std::sqrt(gx);
    if (dx > 0.0) {
      s.lx_ratio = std::max(s.lx_ratio, gx / (c.L_x * dx));
      if (gx > c.L_x * dx) ++s.lx_fail;
    }
    std::vector<double> lg(3);
    const std::size_t i = rng.index(data.size());
    const double loss = model.value_grad(x1, data.row(i), data.labels[i], lg);
    if (detail::norm2(grad_x_sample(spec, loss, lg, a)) > c.sigma0) ++s.sigma_fail;
  }
  return s;
}

bool cert_ok(const CertStats& s) { return !s.convex_fail && !s.lz_fail && !s.lx_fail && !s.sigma_fail; }

std::string cert_detail(const std::string& label, const CertStats& s) {
  std::ostringstream os;
  os << label << ": " << s.pairs << " pairs, convexity fails " << s.convex_fail << ", max |dgrad_z|/(L_z|dz|) "
     << fmt(s.lz_ratio) << ", max |dgrad_x|/(L_x|dx|) " << fmt(s.lx_ratio) << ", sigma0 fails " << s.sigma_fail;
  return os.str();
}

// ---- 4: gradient audits

bool audit_config(const std::string& name, std::string& detail) {
  RunConfig cfg = load_config(source_path("configs/" + name));
  cfg.gradcheck.points = 100;
  cfg.gradcheck.tolerance = 1e-5;
  bool ok = false;
  const json j = cmd_gradcheck(cfg, scratch_dir("gradcheck_" + name), ok);
  detail += name + " [";
  for (const auto& c : j["checks"])
    detail += c["check"].get<std::string>() + " " + fmt(c["max_rel_error"].get<double>()) + "; ";
  detail.resize(detail.size() - 2);
  detail += "] ";
  return ok;
}

// ---- 6: theory plumbing against the Python re-evaluation

bool theory_plumbing(std::string& detail) {
  const std::string cmd = "python3 " + source_path("tests/scripts/theory_reference.py");
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) {
    detail = "cannot run " + cmd;
    return false;
  }
  std::string out;
  char buf[512];
  while (fgets(buf, sizeof buf, p)) out += buf;
  if (pclose(p) != 0 || out.empty()) {
    detail = "reference script failed";
    return false;
  }
  const std::regex num(R"([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)");
  std::istringstream lines(out);
  std::size_t cases = 0, mismatches = 0;
  double worst_rel = 0.0;
  for (std::string line; std::getline(lines, line);) {
    std::vector<double> v;
    for (auto it = std::sregex_iterator(line.begin(), line.end(), num); it != std::sregex_iterator(); ++it)
      v.push_back(std::stod(it->str()));
    if (v.size() != 20) continue;
    ++cases;
    const auto spec = DivergenceSpec::cressie_read(v[0], v[1]);
    const TheoryPlan plan = theory_hyperparams(spec, {v[2], v[3], v[4]}, v[5], v[6]);
    const ObjectiveConstants& c = plan.constants;
    const double reals[] = {plan.domain.lambda_hi, -plan.domain.eta_lo, c.L_x, c.L_z, c.sigma0,
                            c.sigma1, c.D, c.C, plan.config.step_alpha};
    for (int r = 0; r < 9; ++r) worst_rel = std::max(worst_rel, std::abs(reals[r] - v[8 + r]) / std::abs(v[8 + r]));
    const bool exact = plan.lambda0 == v[5] / (8.0 * v[1]) && plan.lambda0 == v[7] &&
                       std::abs(plan.config.step_alpha * 2.0 * plan.config.constant_C - 1.0) <= 4e-16 &&
                       plan.nx_real == v[17] && plan.nz_real == v[18] && plan.T_real == v[19];
    if (!exact) ++mismatches;
  }
  if (worst_rel > 1e-12) ++mismatches;
  detail = std::to_string(cases) + " reference cases, integer/lambda0 mismatches " + std::to_string(mismatches) +
           ", worst relative error on reals " + fmt(worst_rel);
  return cases >= 5 && mismatches == 0;
}

// ---- 11: descent inequality

struct DescentStats {
  std::size_t steps = 0, violations = 0;
  double worst_excess = -kInfinity;
};

DescentStats descent_audit(const DivergenceSpec& spec, std::uint64_t seed) {
  const Dataset data = cdro::testing::blobs(40, 3, 1.5, seed);
  const SquashedLogistic model(1.0, data);
  const auto lc = model.constants();
  const DualDomain dom = compute_domain(spec, lc.B, 0.1);
  const ObjectiveConstants c = compute_constants(spec, dom, lc.B, lc.G, lc.L);
  const DualKernel kernel(spec);
  SolverConfig cfg;
  cfg.iterations = 50;
  cfg.step_alpha = 1.0 / c.L_x;
  cfg.constant_C = c.C;
  cfg.batch_mode = BatchMode::Full;
  cfg.seed = seed;
  DescentStats s;
  sfk_dro(spec, model, data, dom, cfg, std::vector<double>{0.8, -0.6, 0.3}, dom.clamp({1.0, 0.0}),
          [&](const IterateRecord& r, std::span<const double> x, const DualPoint& z, std::span<const double> xn,
              const DualPoint& zn) {
            const BatchEval now = full_eval(kernel, model, data, x, z, true);
            const double next = full_eval(kernel, model, data, xn, zn, false).value;
            const double rhs = now.value - 0.5 * cfg.step_alpha * detail::squared_norm(now.grad_x) -
                               r.fw_gap * r.fw_gap / (4.0 * cfg.constant_C);
            ++s.steps;
            s.worst_excess = std::max(s.worst_excess, next - rhs);
            if (next > rhs + 1e-9) ++s.violations;
          });
  return s;
}

}  // namespace

int main() {
  // 1, 2
  {
    const auto t0 = Clock::now();
    DualityStats dual;
    BoxStats box;
    duality_battery(120, false, dual, box);
    const double secs = seconds_since(t0);
    verdict(1, dual.violations == 0 && dual.instances >= 100 && secs < 30.0,
            std::to_string(dual.instances) + " instances, violations " + std::to_string(dual.violations) +
                ", worst |primal-dual|/(1+|v|) " + fmt(dual.worst) + ", " + fmt(secs) + " s (with box checks)");
    verdict(2, box.violations == 0 && box.checks > 0,
            std::to_string(box.checks) + " box checks, violations " + std::to_string(box.violations) +
                ", skipped (lambda0 >= lambda_bar) " + std::to_string(box.skipped) + ", worst gap/(2 lambda0 rho) " +
                fmt(box.worst_ratio));
  }

  // 3
  {
    const CertStats k2 = certify_instance(DivergenceSpec::cressie_read(2.0, 0.3), 31);
    const CertStats k15 = certify_instance(DivergenceSpec::cressie_read(1.5, 0.3), 32);
    verdict(3, cert_ok(k2) && cert_ok(k15), cert_detail("k=2", k2) + "; " + cert_detail("k=1.5", k15));
  }

  // 4
  {
    std::string detail;
    bool ok = true;
    for (const char* name : {"gradcheck_logistic.ini", "gradcheck_mlp.ini", "gradcheck_cvar.ini"})
      ok = audit_config(name, detail) && ok;
    verdict(4, ok, detail);
  }

  // 5
  {
    const auto t0 = Clock::now();
    bool ok = true;
    std::string detail;
    const struct {
      const char* file;
      double target, tol;
    } cases[] = {{"bias_k2.ini", -0.5, 0.15}, {"bias_k15.ini", -1.0 / 3.0, 0.13}};
    for (const auto& c : cases) {
      const RunConfig cfg = load_config(source_path(std::string("configs/") + c.file));
      const BiasReport rep = cmd_bias(cfg, scratch_dir(std::string("bias_") + c.file));
      std::size_t above = 0;
      for (const auto& r : rep.rows) above += r.measured_gap > r.bound;
      const bool slope_ok = std::abs(rep.fitted_slope - c.target) <= c.tol;
      ok = ok && above == 0 && slope_ok && cfg.bias.trials == 2000 && rep.rows.size() == 10;
      detail += std::string(c.file) + ": slope " + fmt(rep.fitted_slope) + " (target " + fmt(c.target) + " +/- " +
                fmt(c.tol) + "), grid points above bound " + std::to_string(above) + "; ";
    }
    const double secs = seconds_since(t0);
    verdict(5, ok && secs < 300.0, detail + fmt(secs) + " s");
  }

  // 6
  {
    std::string detail;
    verdict(6, theory_plumbing(detail), detail);
  }

  // 7
  {
    bool ok = true;
    std::string detail;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      RunConfig cfg = load_config(source_path("configs/convergence.ini"));
      cfg.set_seed(seed);
      const auto t0 = Clock::now();
      const json s = cmd_solve(cfg, scratch_dir("convergence_" + std::to_string(seed)));
      const double secs = seconds_since(t0);
      const double g = s["grad_x_norm"].is_null() ? kInfinity : s["grad_x_norm"].get<double>();
      const double gap = s["dual_gap"].is_null() ? kInfinity : s["dual_gap"].get<double>();
      const bool pass = g <= 0.05 && gap <= 0.05 && secs < 60.0 && cfg.solver.cfg.iterations <= 20000;
      ok = ok && pass;
      detail += "seed " + std::to_string(seed) + ": |grad_x F| " + fmt(g) + ", gap " + fmt(gap) + ", " +
                fmt(secs) + " s; ";
    }
    verdict(7, ok, detail);
  }

  // 8, 9
  {
    const RunConfig cfg = load_config(source_path("configs/bench_imbalanced.ini"));
    const auto runs = run_bench(cfg);
    std::size_t seeds = 0, sfk_beats_pgd = 0, sfk_beats_erm = 0;
    std::string d8, d9;
    for (std::uint64_t seed : cfg.bench.seeds) {
      const BenchRun *sfk = nullptr, *pgd_run = nullptr, *erm = nullptr;
      for (const auto& r : runs) {
        if (r.seed != seed) continue;
        if (r.solver == "sfk_dro") sfk = &r;
        if (r.solver == "pgd") pgd_run = &r;
        if (r.solver == "erm") erm = &r;
      }
      if (!sfk || !pgd_run || !erm) continue;
      ++seeds;
      sfk_beats_pgd += sfk->train_objective < pgd_run->train_objective;
      const double ws = worst_group_loss(sfk->heldout_groups), we = worst_group_loss(erm->heldout_groups);
      sfk_beats_erm += ws <= we;
      d8 += fmt(sfk->train_objective) + " vs " + fmt(pgd_run->train_objective) + "; ";
      d9 += fmt(ws) + " vs " + fmt(we) + "; ";
    }
    verdict(8, seeds == 5 && sfk_beats_pgd >= 4,
            "SFK-DRO below PGD on " + std::to_string(sfk_beats_pgd) + "/" + std::to_string(seeds) +
                " seeds (train objective sfk vs pgd: " + d8 + ")");
    verdict(9, seeds == 5 && sfk_beats_erm >= 4,
            "SFK-DRO worst-group held-out loss <= ERM on " + std::to_string(sfk_beats_erm) + "/" +
                std::to_string(seeds) + " seeds (sfk vs erm: " + d9 + ")");
  }

  // 10
  {
    double worst_residual = 0.0;
    for (double mu : {0.1, 0.3, 0.5})
      for (double rho : {0.1, 1.0, 5.0})
        for (double B : {1.0, 10.0}) {
          const auto spec = DivergenceSpec::smoothed_cvar(mu, rho);
          worst_residual = std::max(worst_residual, std::abs(cvar_lambda_bar_residual(spec, B, lambda_bar(spec, B))));
        }
    DualityStats dual;
    BoxStats box;
    duality_battery(60, true, dual, box);
    const CertStats cert = certify_instance(DivergenceSpec::smoothed_cvar(0.3, 0.3), 33);
    std::string audit;
    const bool audit_ok = audit_config("gradcheck_cvar.ini", audit);
    const bool ok = worst_residual <= 1e-10 && dual.violations == 0 && box.violations == 0 && cert_ok(cert) && audit_ok;
    verdict(10, ok,
            "max |g(lambda_bar)| " + fmt(worst_residual) + "; duality " + std::to_string(dual.instances) +
                " instances, violations " + std::to_string(dual.violations) + "; box violations " +
                std::to_string(box.violations) + "/" + std::to_string(box.checks) + "; " +
                cert_detail("cvar mu=0.3", cert) + "; " + audit);
  }

  // 11
  {
    const DescentStats a = descent_audit(DivergenceSpec::cressie_read(2.0, 0.3), 41);
    const DescentStats b = descent_audit(DivergenceSpec::cressie_read(1.5, 0.3), 42);
    verdict(11, a.steps == 50 && b.steps == 50 && a.violations == 0 && b.violations == 0,
            "k=2: " + std::to_string(a.violations) + "/50 violations, worst excess " + fmt(a.worst_excess) +
                "; k=1.5: " + std::to_string(b.violations) + "/50 violations, worst excess " + fmt(b.worst_excess));
  }

  std::cout << (failures ? "acceptance: " + std::to_string(failures) + " criteria failed" : "acceptance: all passed")
            << std::endl;
  return failures ? 1 : 0;
}
