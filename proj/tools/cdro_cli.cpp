// Command-line front end: solve, oracle, bias, bench, gradcheck.

#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "cdro/cdro.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

CLI::App* add_command(CLI::App& app, const std::string& name, const std::string& help,
                      CommonArgs& args) {
  CLI::App* sub = app.add_subcommand(name, help);
  sub->add_option("--config", args.config, "INI configuration file")->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", args.seed, "override the master seed");
  sub->add_option("--out", args.out, "output directory")->capture_default_str();
  return sub;
}

cdro::RunConfig load(const CommonArgs& args) {
  cdro::RunConfig cfg = cdro::load_config(args.config);
  if (args.seed) cfg.set_seed(*args.seed);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained distributionally robust optimization toolkit"};
  app.require_subcommand(1);
  CommonArgs args;
  auto* solve = add_command(app, "solve", "run one solver and write its trace and summary", args);
  auto* oracle = add_command(app, "oracle", "brute-force worst case and dual minimum", args);
  auto* bias = add_command(app, "bias", "Monte-Carlo bias study of the sampled dual", args);
  auto* bench = add_command(app, "bench", "compare solvers across seeds", args);
  auto* gradcheck = add_command(app, "gradcheck", "finite-difference gradient audits", args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cdro::kExitConfig;
  }

  try {
    const cdro::RunConfig cfg = load(args);
    if (solve->parsed()) {
      const auto s = cdro::cmd_solve(cfg, args.out);
      std::cout << s.dump(2) << '\n';
    } else if (oracle->parsed()) {
      std::cout << cdro::cmd_oracle(cfg, args.out).dump(2) << '\n';
    } else if (bias->parsed()) {
      const auto rep = cdro::cmd_bias(cfg, args.out);
      cdro::bias_table(rep).write(std::cout);
    } else if (bench->parsed()) {
      cdro::cmd_bench(cfg, args.out);
      std::cout << "wrote " << args.out << "/bench_summary.csv\n";
    } else if (gradcheck->parsed()) {
      bool ok = false;
      std::cout << cdro::cmd_gradcheck(cfg, args.out, ok).dump(2) << '\n';
      if (!ok) return cdro::kExitViolation;
    }
  } catch (const cdro::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cdro::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cdro::kExitNumerical;
  }
  return cdro::kExitOk;
}
