// bsep: simulate, compare, verify and curvature runs driven by config files.

#include <iostream>

#include "CLI11.hpp"
#include "bsep/cli.hpp"

namespace cli = bsep::cli;

int main(int argc, char** argv) {
  CLI::App app{"Twisted block-separable Hamiltonian systems: simulation and verification"};
  app.require_subcommand(1);

  std::string config;
  cli::Overrides ov;
  std::size_t block = 0;
  std::string out;
  std::uint64_t seed = 0;
  double rtol = 0, atol = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory");
    sub->add_flag("--svg", ov.svg, "write SVG plots");
    sub->add_option("--seed", seed, "seed for probe points");
    sub->add_option("--rtol", rtol, "relative tolerance override")->check(CLI::PositiveNumber);
    sub->add_option("--atol", atol, "absolute tolerance override")->check(CLI::NonNegativeNumber);
  };

  app.add_subcommand("list", "print catalog names");
  auto* sim = app.add_subcommand("simulate", "integrate the full system and write CSV");
  auto* cmp = app.add_subcommand("compare", "compare a block projection with its reduced orbit");
  auto* ver = app.add_subcommand("verify", "run the residual battery");
  auto* cur = app.add_subcommand("curvature", "curvature checks for the E^3 families");
  for (auto* s : {sim, cmp, ver, cur}) add_common(s);
  cmp->add_option("--block", block, "block index (1-based)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kConfigInvalid;
  }

  if (app.got_subcommand("list")) return cli::cmd_list(std::cout);

  try {
    cli::RunConfig cfg = cli::load_config(config);
    for (auto* s : {sim, cmp, ver, cur}) {
      if (!s->parsed()) continue;
      if (s->count("--out")) ov.out = out;
      if (s->count("--seed")) ov.seed = seed;
      if (s->count("--rtol")) ov.rtol = rtol;
      if (s->count("--atol")) ov.atol = atol;
      if (s == cmp && cmp->count("--block")) ov.block = block;
    }
    cli::apply(cfg, ov);
    if (sim->parsed()) return cli::cmd_simulate(cfg, std::cout, std::cerr);
    if (cmp->parsed()) return cli::cmd_compare(cfg, std::cout, std::cerr);
    if (ver->parsed()) return cli::cmd_verify(cfg, std::cout);
    return cli::cmd_curvature(cfg, std::cout);
  } catch (const cli::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return cli::kConfigInvalid;
  } catch (const bsep::IntegrationError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return cli::kNumericalFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kNumericalFailure;
  }
}
