#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cdro/data.hpp"
#include "cdro/divergence.hpp"
#include "cdro/errors.hpp"
#include "cdro/solvers.hpp"

namespace cdro {

/// Everything a CLI run needs, parsed from a sectioned key=value file.
/// Keys and sections are documented in configs/README.md.
struct RunConfig {
  struct Divergence {
    Family family = Family::CressieRead;
    double k = 2.0;
    double mu = 0.5;
    double rho = 0.1;
    DivergenceSpec spec() const {
      return family == Family::CressieRead ? DivergenceSpec::cressie_read(k, rho)
                                           : DivergenceSpec::smoothed_cvar(mu, rho);
    }
  } divergence;

  struct Loss {
    std::string model = "squashed_logistic";  // squashed_logistic | tiny_mlp | constant
    double scale = 1.0;                       // B
    std::size_t hidden = 16;
    double constant = 0.5;
    double init_sd = 0.1;
    double radius = 10.0;  // parameter ball for empirical constants
    std::size_t certify_draws = 2000;
  } loss;

  struct Data {
    std::string source = "generate";  // generate | csv
    std::string path;
    std::string label_column = "label";
    int classes = 2;
    std::vector<double> ratios;  // empty = all ones
    std::size_t base_n = 1000;
    std::size_t dim = 5;
    double separation = 3.0;
    std::optional<std::uint64_t> seed;  // defaults to the master seed
    std::size_t heldout_base_n = 200;
  } data;

  struct Solver {
    std::string algorithm = "sfk_dro";  // sfk_dro | pgd | pan_dro | erm
    SolverConfig cfg;
    double lambda0 = 0.05;
    double delta_estimate = 1.0;
    double init_lambda = 1.0;
    double init_eta = 0.0;
  } solver;

  struct Output {
    std::string dir = "out";
    std::size_t smoothing_window = 5;
  } output;

  struct Oracle {
    std::vector<double> losses;
    std::vector<double> p0;  // empty = uniform
  } oracle;

  struct Bias {
    std::vector<double> losses;
    std::vector<double> p0;
    double B = 1.0;
    std::vector<std::uint64_t> grid;
    std::size_t trials = 2000;
  } bias;

  struct Bench {
    std::vector<std::string> solvers{"sfk_dro", "erm"};
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  } bench;

  struct Gradcheck {
    std::size_t points = 100;
    double h = 1e-4;
    double tolerance = 1e-5;
  } gradcheck;

  std::uint64_t seed() const { return solver.cfg.seed; }
  std::uint64_t data_seed() const { return data.seed.value_or(solver.cfg.seed); }

  void set_seed(std::uint64_t s) { solver.cfg.seed = s; }

  /// Cross-field checks; throws ConfigError.
  void validate() const {
    (void)divergence.spec();
    if (!(loss.scale > 0.0)) throw ConfigError("config: [loss] scale must be > 0");
    static const std::set<std::string> models{"squashed_logistic", "tiny_mlp", "constant"};
    if (!models.count(loss.model)) throw ConfigError("config: [loss] model '" + loss.model + "' unknown");
    if (loss.model == "constant" && !(loss.constant >= 0.0 && loss.constant <= loss.scale))
      throw ConfigError("config: [loss] constant must lie in [0, scale]");
    if (data.source != "generate" && data.source != "csv")
      throw ConfigError("config: [data] source must be 'generate' or 'csv'");
    if (data.source == "csv" && data.path.empty()) throw ConfigError("config: [data] csv source needs path");
    if (data.source == "generate" && !data.ratios.empty() &&
        data.ratios.size() != static_cast<std::size_t>(data.classes))
      throw ConfigError("config: [data] ratios must list one value per class");
    static const std::set<std::string> algos{"sfk_dro", "pgd", "pan_dro", "erm"};
    if (!algos.count(solver.algorithm))
      throw ConfigError("config: [solver] algorithm '" + solver.algorithm + "' unknown");
    for (const auto& s : bench.solvers)
      if (!algos.count(s)) throw ConfigError("config: [bench] solver '" + s + "' unknown");
    if (bench.solvers.size() < 2) throw ConfigError("config: [bench] needs at least two solvers");
    if (bench.seeds.empty()) throw ConfigError("config: [bench] needs at least one seed");
    if (!(solver.lambda0 > 0.0) && solver.cfg.mode == SolverMode::Practical)
      throw ConfigError("config: [solver] lambda0 must be > 0");
    if (output.smoothing_window < 1) throw ConfigError("config: [output] smoothing_window must be >= 1");
    solver.cfg.validate();
  }
};

namespace detail {

inline std::string trimmed(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return std::string(s);
}

class IniReader {
 public:
  IniReader(const boost::property_tree::ptree& tree, std::string section)
      : tree_(tree), section_(std::move(section)) {}

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    const auto it = tree_.find(key);
    if (it == tree_.not_found()) return;
    out = parse<T>(key, trimmed(it->second.data()));
  }

  template <class T>
  void get_list(const std::string& key, std::vector<T>& out) {
    seen_.insert(key);
    const auto it = tree_.find(key);
    if (it == tree_.not_found()) return;
    out.clear();
    std::stringstream ss(it->second.data());
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trimmed(item);
      if (!item.empty()) out.push_back(parse<T>(key, item));
    }
  }

  bool has(const std::string& key) const { return tree_.find(key) != tree_.not_found(); }
  std::string raw(const std::string& key) {
    seen_.insert(key);
    return trimmed(tree_.get<std::string>(key, ""));
  }

  void reject_unknown() const {
    for (const auto& [key, _] : tree_)
      if (!seen_.count(key)) throw ConfigError("config: unknown key '" + key + "' in [" + section_ + "]");
  }

 private:
  template <class T>
  T parse(const std::string& key, const std::string& text) const {
    if constexpr (std::is_same_v<T, std::string>) {
      return text;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (text == "true" || text == "1") return true;
      if (text == "false" || text == "0") return false;
      fail(key, text, "a boolean");
    } else {
      T v{};
      const auto* end = text.data() + text.size();
      auto [ptr, ec] = std::from_chars(text.data(), end, v);
      if (ec != std::errc() || ptr != end || text.empty())
        fail(key, text, std::is_integral_v<T> ? "an integer" : "a number");
      return v;
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& text, const char* what) const {
    throw ConfigError("config: [" + section_ + "] " + key + " = '" + text + "' is not " + what);
  }

  const boost::property_tree::ptree& tree_;
  std::string section_;
  std::set<std::string> seen_;
};

}  // namespace detail

/// Parses INI text. Unknown sections or keys, malformed numbers and
/// duplicate keys are ConfigErrors.
inline RunConfig parse_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  static const std::set<std::string> sections{"divergence", "loss",  "data",  "solver",   "output",
                                              "oracle",     "bias",  "bench", "gradcheck"};
  for (const auto& [name, sub] : tree) {
    if (!sections.count(name)) throw ConfigError("config: unknown section [" + name + "]");
    if (sub.data().size() && sub.empty())
      throw ConfigError("config: key '" + name + "' outside any section");
  }
  const pt::ptree empty;
  auto section = [&](const char* name) -> const pt::ptree& {
    const auto it = tree.find(name);
    return it == tree.not_found() ? empty : it->second;
  };

  RunConfig c;
  {
    detail::IniReader r(section("divergence"), "divergence");
    if (r.has("family")) {
      const std::string f = r.raw("family");
      if (f == "cressie_read") c.divergence.family = Family::CressieRead;
      else if (f == "smoothed_cvar") c.divergence.family = Family::SmoothedCVaR;
      else throw ConfigError("config: [divergence] family must be cressie_read or smoothed_cvar");
    }
    r.get("k", c.divergence.k);
    r.get("mu", c.divergence.mu);
    r.get("rho", c.divergence.rho);
    r.reject_unknown();
  }
  {
    detail::IniReader r(section("loss"), "loss");
    r.get("model", c.loss.model);
    r.get("scale", c.loss.scale);
    r.get("hidden", c.loss.hidden);
    r.get("constant", c.loss.constant);
    r.get("init_sd", c.loss.init_sd);
    r.get("radius", c.loss.radius);
    r.get("certify_draws", c.loss.certify_draws);
    r.reject_unknown();
  }
  {
    detail::IniReader r(section("data"), "data");
    r.get("source", c.data.source);
    r.get("path", c.data.path);
    r.get("label_column", c.data.label_column);
    r.get("classes", c.data.classes);
    if (r.has("ratios") && r.raw("ratios") == "cifar10") {
      c.data.ratios.assign(kImbalanceRatios.begin(), kImbalanceRatios.end());
    } else {
      r.get_list("ratios", c.data.ratios);
    }
    r.get("base_n", c.data.base_n);
    r.get("dim", c.data.dim);
    r.get("separation", c.data.separation);
    if (r.has("seed")) {
      std::uint64_t s = 0;
      r.get("seed", s);
      c.data.seed = s;
    }
    r.get("heldout_base_n", c.data.heldout_base_n);
    r.reject_unknown();
  }
  {
    detail::IniReader r(section("solver"), "solver");
    SolverConfig& s = c.solver.cfg;
    r.get("algorithm", c.solver.algorithm);
    if (r.has("mode")) {
      const std::string m = r.raw("mode");
      if (m == "practical") s.mode = SolverMode::Practical;
      else if (m == "theory") s.mode = SolverMode::Theory;
      else throw ConfigError("config: [solver] mode must be practical or theory");
    }
    if (r.has("batch_mode")) {
      const std::string m = r.raw("batch_mode");
      if (m == "sample") s.batch_mode = BatchMode::WithReplacement;
      else if (m == "full") s.batch_mode = BatchMode::Full;
      else throw ConfigError("config: [solver] batch_mode must be sample or full");
    }
    r.get("iterations", s.iterations);
    r.get("step_alpha", s.step_alpha);
    r.get("batch_nx", s.batch_nx);
    r.get("batch_nz", s.batch_nz);
    r.get("constant_C", s.constant_C);
    r.get("seed", s.seed);
    r.get("epsilon", s.epsilon);
    r.get("fixed_lambda", s.fixed_lambda);
    r.get("lambda0", c.solver.lambda0);
    r.get("delta_estimate", c.solver.delta_estimate);
    r.get("init_lambda", c.solver.init_lambda);
    r.get("init_eta", c.solver.init_eta);
    r.reject_unknown();
  }
  {
    detail::IniReader r(section("output"), "output");
    r.get("dir", c.output.dir);
    r.get("smoothing_window", c.output.smoothing_window);
    r.reject_unknown();
  }
  {
    detail::IniReader r(section("oracle"), "oracle");
    r.get_list("losses", c.oracle.losses);
    r.get_list("p0", c.oracle.p0);
    r.reject_unknown();
  }
  {
    detail::IniReader r(section("bias"), "bias");
    r.get_list("losses", c.bias.losses);
    r.get_list("p0", c.bias.p0);
    r.get("B", c.bias.B);
    r.get_list("grid", c.bias.grid);
    r.get("trials", c.bias.trials);
    r.reject_unknown();
  }
  {
    detail::IniReader r(section("bench"), "bench");
    r.get_list("solvers", c.bench.solvers);
    r.get_list("seeds", c.bench.seeds);
    r.reject_unknown();
  }
  {
    detail::IniReader r(section("gradcheck"), "gradcheck");
    r.get("points", c.gradcheck.points);
    r.get("h", c.gradcheck.h);
    r.get("tolerance", c.gradcheck.tolerance);
    r.reject_unknown();
  }
  c.validate();
  return c;
}

inline RunConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  return parse_config(in);
}

}  // namespace cdro
