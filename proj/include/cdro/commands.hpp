#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <future>
#include <iostream>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "cdro/bias.hpp"
#include "cdro/config.hpp"
#include "cdro/data.hpp"
#include "cdro/dual_objective.hpp"
#include "cdro/losses.hpp"
#include "cdro/oracle.hpp"
#include "cdro/report.hpp"
#include "cdro/solvers.hpp"
#include "json.hpp"

namespace cdro {

using json = nlohmann::ordered_json;
using AnyLoss = std::variant<SquashedLogistic, TinyMlp, ConstantLoss>;

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitNumerical = 3, kExitViolation = 4 };

struct Datasets {
  Dataset train;
  std::optional<Dataset> heldout;
};

/// Training set from the [data] section; generated data also gets a
/// balanced held-out set drawn from a separate seed.
inline Datasets make_datasets(const RunConfig& cfg) {
  Datasets d;
  const auto& dc = cfg.data;
  if (dc.source == "csv") {
    d.train = load_csv(dc.path, dc.label_column);
    return d;
  }
  std::vector<double> ratios = dc.ratios;
  if (ratios.empty()) ratios.assign(static_cast<std::size_t>(dc.classes), 1.0);
  const std::uint64_t seed = cfg.data_seed();
  d.train = gen_imbalanced(dc.classes, ratios, dc.base_n, dc.dim, dc.separation, seed);
  const std::vector<double> ones(static_cast<std::size_t>(dc.classes), 1.0);
  d.heldout = gen_imbalanced(dc.classes, ones, dc.heldout_base_n, dc.dim, dc.separation,
                             mix64(seed ^ hash_name("heldout")));
  return d;
}

inline AnyLoss make_loss(const RunConfig& cfg, const Dataset& train) {
  const auto& lc = cfg.loss;
  if (lc.model == "squashed_logistic") return SquashedLogistic(lc.scale, train);
  if (lc.model == "constant") return ConstantLoss(lc.constant, train.dim());
  const int top = *std::max_element(train.labels.begin(), train.labels.end());
  const auto classes = static_cast<std::size_t>(std::max(top + 1, cfg.data.classes));
  TinyMlp m(train.dim(), lc.hidden, classes, lc.scale);
  if (cfg.solver.cfg.mode == SolverMode::Theory) {
    RngStream rng(cfg.seed(), "certify");
    m.certify(train, lc.radius, lc.certify_draws, rng);
  }
  return m;
}

inline std::vector<double> initial_x(const AnyLoss& loss, const RunConfig& cfg, std::uint64_t seed) {
  return std::visit(
      [&](const auto& m) -> std::vector<double> {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, TinyMlp>) {
          RngStream rng(seed, "init");
          return m.init_params(rng, cfg.loss.init_sd);
        } else {
          return std::vector<double>(m.dim(), 0.0);
        }
      },
      loss);
}

/// Predicted label, or -1 when the model does not classify.
template <LossModel M>
int predict_label(const M& model, std::span<const double> x, std::span<const double> a) {
  if constexpr (std::is_same_v<M, TinyMlp>) {
    const auto p = model.predict(x, a);
    return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
  } else if constexpr (std::is_same_v<M, SquashedLogistic>) {
    return detail::dot(x, a) > 0.0 ? 1 : 0;
  } else {
    return -1;
  }
}

struct GroupStat {
  int group = 0;
  std::size_t count = 0;
  double loss = 0.0;
  double accuracy = 0.0;  // NaN when the model does not classify
};

/// Per-group mean loss and accuracy. For the binary squashed logistic a
/// label counts as correct when its sign matches (label > 0 is positive).
template <LossModel M>
std::vector<GroupStat> group_stats(const M& model, const Dataset& data, std::span<const double> x) {
  std::map<int, GroupStat> g;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto& s = g[data.group_ids[i]];
    s.group = data.group_ids[i];
    s.count += 1;
    s.loss += model.value(x, data.row(i), data.labels[i]);
    const int pred = predict_label(model, x, data.row(i));
    const bool hit = std::is_same_v<M, SquashedLogistic> ? (pred == 1) == (data.labels[i] > 0)
                                                         : pred == data.labels[i];
    s.accuracy += pred < 0 ? std::nan("") : (hit ? 1.0 : 0.0);
  }
  std::vector<GroupStat> out;
  for (auto& [_, s] : g) {
    s.loss /= static_cast<double>(s.count);
    s.accuracy /= static_cast<double>(s.count);
    out.push_back(s);
  }
  return out;
}

inline double worst_group_loss(const std::vector<GroupStat>& g) {
  double w = 0.0;
  for (const auto& s : g) w = std::max(w, s.loss);
  return w;
}

inline json group_json(const std::vector<GroupStat>& g) {
  json arr = json::array();
  for (const auto& s : g) {
    json j;
    j["group"] = s.group;
    j["count"] = s.count;
    j["loss"] = s.loss;
    if (std::isnan(s.accuracy)) j["accuracy"] = nullptr;
    else j["accuracy"] = s.accuracy;
    arr.push_back(j);
  }
  return arr;
}

/// Runs one solver by name. ERM ignores the divergence and the domain.
template <LossModel M>
SolverOutput run_solver(const std::string& algorithm, const DivergenceSpec& spec, const M& model,
                        const Dataset& data, const DualDomain& domain,
                        const ObjectiveConstants& constants, const SolverConfig& cfg,
                        std::span<const double> x0, const DualPoint& z0) {
  if (algorithm == "sfk_dro") return sfk_dro(spec, model, data, domain, cfg, x0, z0);
  if (algorithm == "pgd") return pgd(spec, model, data, domain, constants, cfg, x0, z0);
  if (algorithm == "pan_dro") return pan_dro(spec, model, data, domain.eta_lo, domain.eta_hi, cfg, x0, z0.eta);
  if (algorithm == "erm") return erm_sgd(model, data, cfg, x0);
  throw ConfigError("unknown solver '" + algorithm + "'");
}

/// Full-batch quality of a solver output at (x, z): the objective, the
/// x-gradient norm, and the gap to inf_z F(x; z) found by the oracle.
struct OutputQuality {
  double objective = 0.0;
  double grad_x_norm = 0.0;
  double dual_min_value = 0.0;
  DualPoint dual_min_z;
  double dual_gap = 0.0;
};

template <LossModel M>
OutputQuality assess_output(const DivergenceSpec& spec, const M& model, const Dataset& data,
                            std::span<const double> x, const DualPoint& z) {
  OutputQuality q;
  const DualKernel kernel(spec);
  const auto losses = loss_values(model, data, x);
  const DualMinResult dm = dual_min(spec, losses, data.weights);
  q.dual_min_value = dm.value;
  q.dual_min_z = dm.z_star;
  if (z.lambda > 0.0) {
    const BatchEval ev = full_eval(kernel, model, data, x, z, true);
    q.objective = ev.value;
    q.grad_x_norm = std::sqrt(detail::squared_norm(ev.grad_x));
    q.dual_gap = std::abs(ev.value - dm.value);
  } else {
    q.objective = mean_loss(model, data, x, all_indices(data));
    q.grad_x_norm = kInfinity;
    q.dual_gap = kInfinity;
  }
  return q;
}

/// Domain, constants and (in theory mode) the derived solver configuration.
struct Prepared {
  DualDomain domain;
  ObjectiveConstants constants;
  SolverConfig solver;
  std::optional<TheoryPlan> plan;
};

inline Prepared prepare(const RunConfig& cfg, const LossConstants& lc) {
  const DivergenceSpec spec = cfg.divergence.spec();
  Prepared p;
  p.solver = cfg.solver.cfg;
  if (p.solver.mode == SolverMode::Theory) {
    p.plan = theory_hyperparams(spec, lc, p.solver.epsilon, cfg.solver.delta_estimate, cfg.seed());
    p.domain = p.plan->domain;
    p.constants = p.plan->constants;
    SolverConfig s = p.plan->config;
    s.batch_mode = p.solver.batch_mode;
    s.fixed_lambda = p.solver.fixed_lambda;
    p.solver = s;
  } else {
    p.domain = compute_domain(spec, lc.B, cfg.solver.lambda0);
    p.constants = compute_constants(spec, p.domain, lc.B, lc.G, lc.L);
  }
  return p;
}

inline json plan_json(const TheoryPlan& p) {
  json j;
  j["lambda0"] = p.lambda0;
  j["step_alpha"] = p.config.step_alpha;
  j["constant_C"] = p.config.constant_C;
  j["n_x"] = p.nx_real;
  j["n_z"] = p.nz_real;
  j["n_z_variance_bound"] = p.nz_variance;
  j["T"] = p.T_real;
  j["L_x"] = p.constants.L_x;
  j["L_z"] = p.constants.L_z;
  j["sigma0"] = p.constants.sigma0;
  j["sigma1"] = p.constants.sigma1;
  j["D"] = p.constants.D;
  j["warnings"] = p.warnings;
  return j;
}

/// Largest count the solve command will actually execute in theory mode.
inline constexpr double kTheoryRunLimit = 1e7;

inline std::filesystem::path ensure_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir + ": " + ec.message());
  return p;
}

/// `solve`: runs the configured solver and writes trace.jsonl, curve.csv and
/// summary.json into `out_dir`. Returns the summary.
inline json cmd_solve(const RunConfig& cfg, const std::string& out_dir) {
  const auto start = std::chrono::steady_clock::now();
  const auto dir = ensure_dir(out_dir);
  const DivergenceSpec spec = cfg.divergence.spec();
  const Datasets data = make_datasets(cfg);
  const AnyLoss loss = make_loss(cfg, data.train);
  const LossConstants lc = std::visit([](const auto& m) { return m.constants(); }, loss);
  const Prepared prep = prepare(cfg, lc);

  json summary;
  summary["solver"] = cfg.solver.algorithm;
  summary["seed"] = cfg.seed();
  if (prep.plan) {
    summary["theory"] = plan_json(*prep.plan);
    for (const auto& w : prep.plan->warnings) std::cerr << "warning: " << w << '\n';
    if (prep.plan->T_real > kTheoryRunLimit || prep.plan->nx_real > kTheoryRunLimit ||
        prep.plan->nz_real > kTheoryRunLimit) {
      std::ofstream(dir / "summary.json") << summary.dump(2) << '\n';
      throw ConfigError("theory plan too large to execute (see summary.json)");
    }
  }

  std::visit(
      [&](const auto& model) {
        const auto x0 = initial_x(loss, cfg, cfg.seed());
        const DualPoint z0 = prep.domain.clamp({cfg.solver.init_lambda, cfg.solver.init_eta});
        const SolverOutput out = run_solver(cfg.solver.algorithm, spec, model, data.train,
                                            prep.domain, prep.constants, prep.solver, x0, z0);
        write_trace_jsonl((dir / "trace.jsonl").string(), out.trace);
        curve_table(out.trace, cfg.output.smoothing_window).write((dir / "curve.csv").string());

        const OutputQuality q = assess_output(spec, model, data.train, out.x_out, out.z_out);
        summary["t_prime"] = out.t_prime;
        summary["lambda_out"] = out.z_out.lambda;
        summary["eta_out"] = out.z_out.eta;
        summary["x_out"] = out.x_out;
        summary["objective"] = q.objective;
        summary["robust_value"] = q.dual_min_value;
        summary["grad_x_norm"] = std::isfinite(q.grad_x_norm) ? json(q.grad_x_norm) : json(nullptr);
        summary["dual_gap"] = std::isfinite(q.dual_gap) ? json(q.dual_gap) : json(nullptr);
        summary["groups_train"] = group_json(group_stats(model, data.train, out.x_out));
        if (data.heldout) summary["groups_heldout"] = group_json(group_stats(model, *data.heldout, out.x_out));
      },
      loss);
  summary["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::ofstream(dir / "summary.json") << summary.dump(2) << '\n';
  return summary;
}

/// `oracle`: worst case and dual minimum of the [oracle] atoms.
inline json cmd_oracle(const RunConfig& cfg, const std::string& out_dir) {
  const auto dir = ensure_dir(out_dir);
  const auto& oc = cfg.oracle;
  if (oc.losses.empty()) throw ConfigError("config: [oracle] losses required");
  std::vector<double> p0 = oc.p0;
  if (p0.empty()) p0.assign(oc.losses.size(), 1.0 / static_cast<double>(oc.losses.size()));
  const DivergenceSpec spec = cfg.divergence.spec();
  const WorstCaseResult w = primal_worst_case(spec, oc.losses, p0);
  const DualMinResult d = dual_min(spec, oc.losses, p0);
  json j;
  j["value"] = w.value;
  j["q"] = w.q;
  j["divergence_used"] = w.divergence_used;
  j["kkt_residual"] = w.kkt_residual;
  j["dual_value"] = d.value;
  j["dual_lambda"] = d.z_star.lambda;
  j["dual_eta"] = d.z_star.eta;
  std::ofstream(dir / "oracle.json") << j.dump(2) << '\n';
  return j;
}

inline const std::vector<std::string>& bias_fields() {
  static const std::vector<std::string> f{"n_z", "measured_gap", "std_error", "lemma3_bound",
                                          "fitted_slope"};
  return f;
}

inline CsvTable bias_table(const BiasReport& rep) {
  CsvTable t(bias_fields());
  for (const auto& r : rep.rows)
    t.add_row({std::to_string(r.n_z), fmt_num(r.measured_gap), fmt_num(r.std_error),
               fmt_num(r.bound), fmt_num(rep.fitted_slope)});
  return t;
}

/// `bias`: Monte-Carlo bias of the sampled dual minimum; writes bias.csv.
inline BiasReport cmd_bias(const RunConfig& cfg, const std::string& out_dir) {
  const auto dir = ensure_dir(out_dir);
  const auto& bc = cfg.bias;
  if (bc.losses.empty()) throw ConfigError("config: [bias] losses required");
  std::vector<double> p0 = bc.p0;
  if (p0.empty()) p0.assign(bc.losses.size(), 1.0 / static_cast<double>(bc.losses.size()));
  const auto grid = bc.grid.empty() ? default_bias_grid() : bc.grid;
  const BiasReport rep =
      bias_study(cfg.divergence.spec(), bc.losses, p0, bc.B, grid, bc.trials, cfg.seed());
  bias_table(rep).write((dir / "bias.csv").string());
  return rep;
}

/// One (solver, seed) cell of a benchmark.
struct BenchRun {
  std::string solver;
  std::uint64_t seed = 0;
  double train_objective = 0.0;  // F(x_T; z_T), or the mean loss for ERM
  double robust_objective = 0.0; // inf_z F(x_T; z)
  double mean_train_loss = 0.0;
  std::vector<GroupStat> train_groups;
  std::vector<GroupStat> heldout_groups;
  IterateTrace trace;
};

inline const std::vector<std::string>& bench_summary_fields() {
  static const std::vector<std::string> f{
      "solver", "seed", "train_objective", "robust_objective", "mean_train_loss",
      "worst_group_train_loss", "worst_group_heldout_loss", "mean_heldout_loss", "heldout_accuracy"};
  return f;
}

inline const std::vector<std::string>& bench_group_fields() {
  static const std::vector<std::string> f{"solver", "seed", "split", "group", "count", "loss", "accuracy"};
  return f;
}

inline const std::vector<std::string>& bench_curve_fields() {
  static const std::vector<std::string> f{"solver", "seed", "t", "objective_estimate",
                                          "objective_smoothed"};
  return f;
}

/// Runs every configured solver on every seed (seeds concurrently; each run
/// sequential). Results are ordered by seed, then by solver list order.
inline std::vector<BenchRun> run_bench(const RunConfig& base) {
  auto one_seed = [&base](std::uint64_t seed) {
    RunConfig cfg = base;
    cfg.set_seed(seed);
    const DivergenceSpec spec = cfg.divergence.spec();
    const Datasets data = make_datasets(cfg);
    const AnyLoss loss = make_loss(cfg, data.train);
    const LossConstants lc = std::visit([](const auto& m) { return m.constants(); }, loss);
    const Prepared prep = prepare(cfg, lc);
    std::vector<BenchRun> runs;
    std::visit(
        [&](const auto& model) {
          const auto x0 = initial_x(loss, cfg, seed);
          const DualPoint z0 = prep.domain.clamp({cfg.solver.init_lambda, cfg.solver.init_eta});
          const DualKernel kernel(spec);
          for (const auto& name : cfg.bench.solvers) {
            SolverOutput out = run_solver(name, spec, model, data.train, prep.domain,
                                          prep.constants, prep.solver, x0, z0);
            BenchRun r;
            r.solver = name;
            r.seed = seed;
            const auto all = all_indices(data.train);
            r.mean_train_loss = mean_loss(model, data.train, out.x_last, all);
            r.train_objective =
                name == "erm" ? r.mean_train_loss
                              : full_eval(kernel, model, data.train, out.x_last, out.z_last, false).value;
            r.robust_objective =
                dual_min(spec, loss_values(model, data.train, out.x_last), data.train.weights).value;
            r.train_groups = group_stats(model, data.train, out.x_last);
            if (data.heldout) r.heldout_groups = group_stats(model, *data.heldout, out.x_last);
            r.trace = std::move(out.trace);
            runs.push_back(std::move(r));
          }
        },
        loss);
    return runs;
  };
  std::vector<std::future<std::vector<BenchRun>>> jobs;
  for (std::uint64_t s : base.bench.seeds) jobs.push_back(std::async(std::launch::async, one_seed, s));
  std::vector<BenchRun> all;
  for (auto& j : jobs)
    for (auto& r : j.get()) all.push_back(std::move(r));
  return all;
}

/// `bench`: writes bench_summary.csv, bench_groups.csv and bench_curves.csv.
inline std::vector<BenchRun> cmd_bench(const RunConfig& cfg, const std::string& out_dir) {
  const auto dir = ensure_dir(out_dir);
  const auto runs = run_bench(cfg);
  CsvTable summary(bench_summary_fields()), groups(bench_group_fields()), curves(bench_curve_fields());
  for (const auto& r : runs) {
    double held_loss = 0.0, held_acc = 0.0;
    std::size_t held_n = 0;
    for (const auto& g : r.heldout_groups) {
      held_loss += g.loss * static_cast<double>(g.count);
      held_acc += g.accuracy * static_cast<double>(g.count);
      held_n += g.count;
    }
    const double denom = held_n ? static_cast<double>(held_n) : std::nan("");
    summary.add_row({r.solver, std::to_string(r.seed), fmt_num(r.train_objective),
                     fmt_num(r.robust_objective), fmt_num(r.mean_train_loss),
                     fmt_num(worst_group_loss(r.train_groups)), fmt_num(worst_group_loss(r.heldout_groups)),
                     fmt_num(held_loss / denom), fmt_num(held_acc / denom)});
    for (const auto* split : {"train", "heldout"}) {
      const auto& gs = std::string(split) == "train" ? r.train_groups : r.heldout_groups;
      for (const auto& g : gs)
        groups.add_row({r.solver, std::to_string(r.seed), split, std::to_string(g.group),
                        std::to_string(g.count), fmt_num(g.loss), fmt_num(g.accuracy)});
    }
    std::vector<double> obj(r.trace.size());
    for (std::size_t i = 0; i < obj.size(); ++i) obj[i] = r.trace[i].objective_estimate;
    const auto smooth = moving_average(obj, cfg.output.smoothing_window);
    for (std::size_t i = 0; i < obj.size(); ++i)
      curves.add_row({r.solver, std::to_string(r.seed), std::to_string(r.trace[i].t), fmt_num(obj[i]),
                      fmt_num(smooth[i])});
  }
  summary.write((dir / "bench_summary.csv").string());
  groups.write((dir / "bench_groups.csv").string());
  curves.write((dir / "bench_curves.csv").string());
  return runs;
}

/// Worst gradient disagreement found by a central-difference audit.
struct AuditResult {
  std::string name;
  double max_rel_error = 0.0;
  std::vector<double> worst_x;
  DualPoint worst_z;
  std::size_t worst_coord = 0;
};

inline json audit_json(const AuditResult& a) {
  json j;
  j["check"] = a.name;
  j["max_rel_error"] = a.max_rel_error;
  j["worst_coord"] = a.worst_coord;
  j["worst_lambda"] = a.worst_z.lambda;
  j["worst_eta"] = a.worst_z.eta;
  j["worst_x"] = a.worst_x;
  return j;
}

/// Central differences of the sampled dual objective against its analytic
/// x- and z-gradients at `points` random (x, z) with z inside the box and a
/// random batch of up to 16 rows per point.
template <LossModel M>
std::pair<AuditResult, AuditResult> audit_dual_gradients(const DivergenceSpec& spec, const M& model,
                                                         const Dataset& data, const DualDomain& dom,
                                                         std::size_t points, double h, RngStream& rng,
                                                         double x_scale = 1.0) {
  const DualKernel kernel(spec);
  AuditResult ax, az;
  ax.name = "dual_grad_x";
  az.name = "dual_grad_z";
  std::vector<double> x(model.dim()), fd(model.dim());
  for (std::size_t p = 0; p < points; ++p) {
    for (auto& v : x) v = rng.normal(0.0, x_scale);
    const DualPoint z{rng.uniform(dom.lambda_lo + 0.1 * (dom.lambda_hi - dom.lambda_lo), dom.lambda_hi),
                      rng.uniform(dom.eta_lo, dom.eta_hi)};
    const auto batch = sample_batch(data, std::min<std::size_t>(16, data.size()), rng);
    const BatchEval ev = batch_eval(kernel, model, data, batch, x, z, true);
    std::size_t worst = 0;
    double worst_abs = -1.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double keep = x[j];
      x[j] = keep + h;
      const double up = batch_eval(kernel, model, data, batch, x, z, false).value;
      x[j] = keep - h;
      const double dn = batch_eval(kernel, model, data, batch, x, z, false).value;
      x[j] = keep;
      fd[j] = (up - dn) / (2.0 * h);
      if (std::abs(fd[j] - ev.grad_x[j]) > worst_abs) worst_abs = std::abs(fd[j] - ev.grad_x[j]), worst = j;
    }
    const double ex = gradient_rel_error(ev.grad_x, fd);
    if (ex >= ax.max_rel_error) ax = {"dual_grad_x", ex, x, z, worst};

    const double hl = h * std::max(1.0, z.lambda), he = h * std::max(1.0, std::abs(z.eta));
    auto val = [&](double l, double e) { return batch_eval(kernel, model, data, batch, x, {l, e}, false).value; };
    const double gl = (val(z.lambda + hl, z.eta) - val(z.lambda - hl, z.eta)) / (2.0 * hl);
    const double ge = (val(z.lambda, z.eta + he) - val(z.lambda, z.eta - he)) / (2.0 * he);
    const std::array<double, 2> an{ev.d_lambda, ev.d_eta}, nu{gl, ge};
    const double ez = gradient_rel_error(an, nu);
    if (ez >= az.max_rel_error)
      az = {"dual_grad_z", ez, x, z, std::abs(gl - ev.d_lambda) >= std::abs(ge - ev.d_eta) ? 0u : 1u};
  }
  return {ax, az};
}

/// Loss-model and dual-objective gradient audits. `ok` is false when any
/// relative error exceeds `tolerance`.
template <LossModel M>
json gradcheck_report(const DivergenceSpec& spec, const M& model, const Dataset& data,
                      const DualDomain& dom, std::size_t points, double h, double tolerance,
                      std::uint64_t seed, bool& ok) {
  RngStream rng(seed, "gradcheck");
  const GradCheckReport lr = finite_diff_check(model, data, points, h, rng);
  AuditResult la{"loss_grad", lr.max_rel_error, lr.worst_x, {}, lr.worst_coord};
  const auto [ax, az] = audit_dual_gradients(spec, model, data, dom, points, h, rng);
  json j;
  j["tolerance"] = tolerance;
  j["checks"] = json::array({audit_json(la), audit_json(ax), audit_json(az)});
  j["checks"][0]["worst_sample"] = lr.worst_sample;
  ok = la.max_rel_error <= tolerance && ax.max_rel_error <= tolerance && az.max_rel_error <= tolerance;
  j["ok"] = ok;
  return j;
}

/// `gradcheck`: writes gradcheck.json; `ok` reports whether all audits pass.
inline json cmd_gradcheck(const RunConfig& cfg, const std::string& out_dir, bool& ok) {
  const auto dir = ensure_dir(out_dir);
  const DivergenceSpec spec = cfg.divergence.spec();
  const Datasets data = make_datasets(cfg);
  const AnyLoss loss = make_loss(cfg, data.train);
  const LossConstants lc = std::visit([](const auto& m) { return m.constants(); }, loss);
  const DualDomain dom = compute_domain(spec, lc.B, cfg.solver.lambda0);
  const auto& g = cfg.gradcheck;
  json j = std::visit(
      [&](const auto& model) {
        return gradcheck_report(spec, model, data.train, dom, g.points, g.h, g.tolerance, cfg.seed(), ok);
      },
      loss);
  std::ofstream(dir / "gradcheck.json") << j.dump(2) << '\n';
  return j;
}

}  // namespace cdro
