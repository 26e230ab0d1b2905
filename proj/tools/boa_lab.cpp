// boa-lab: configuration-driven experiment runner for the adiabatic
// effective-dynamics laboratory. Subcommands:
//   run    --config <path> --experiment {thm1|thm3|remainder|naip|identities|all}
//   verify --config <path>
// Exit code 0 iff all requested acceptance bands are met.

#include "boalab/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace boalab;

namespace {

int run_experiments(const SimConfig &cfg, const std::string &experiment) {
  bool all_ok = true;
  auto announce = [](const ConvergenceReport &rep) {
    std::cout << (rep.band_ok ? "[PASS] " : "[FAIL] ") << rep.experiment
              << ": slope = " << rep.fit.slope << " (band [" << rep.band_lo
              << ", " << rep.band_hi << "], R^2 = " << rep.fit.r_squared
              << (rep.insufficient_range ? ", insufficient range" : "")
              << ")\n";
    for (const auto &s : rep.samples)
      std::cout << "        kappa = " << s.kappa << "  err = " << s.error_l2
                << "  floor = " << s.floor << "\n";
  };

  const bool all = experiment == "all";
  ExperimentContext ctx;
  if (all || experiment == "thm1" || experiment == "thm3" ||
      experiment == "remainder" || experiment == "identities")
    ctx = ExperimentContext::make(cfg);

  if (all || experiment == "thm1") {
    auto rep = run_sweep(ctx, "thm1");
    persist_report(rep, cfg.out_dir);
    announce(rep);
    all_ok &= rep.band_ok;
  }
  if (all || experiment == "thm3") {
    auto rep = run_sweep(ctx, "thm3");
    persist_report(rep, cfg.out_dir);
    announce(rep);
    auto ablated = run_sweep(ctx, "thm3_ablated");
    persist_report(ablated, cfg.out_dir);
    announce(ablated);
    all_ok &= rep.band_ok && ablated.band_ok;
  }
  if (all || experiment == "remainder") {
    auto rep = run_sweep(ctx, "remainder");
    persist_report(rep, cfg.out_dir);
    announce(rep);
    all_ok &= rep.band_ok;
  }
  if (all || experiment == "naip") {
    auto checks = naip_suite(cfg.seed);
    nlohmann::json j;
    for (const auto &c : checks) {
      std::cout << (c.ok() ? "[PASS] " : "[FAIL] ") << c.name << " = "
                << c.value << " (bound " << c.bound << ")\n";
      j[c.name] = {{"value", c.value}, {"bound", c.bound}, {"ok", c.ok()}};
      all_ok &= c.ok();
    }
    atomic_write(std::filesystem::path(cfg.out_dir) / "naip.json",
                 j.dump(2) + "\n");
  }
  if (all || experiment == "identities") {
    auto checks = identities_suite(ctx);
    nlohmann::json j;
    for (const auto &c : checks) {
      std::cout << (c.ok() ? "[PASS] " : "[FAIL] ") << c.name << " = "
                << c.value << " (bound " << c.bound << ")\n";
      j[c.name] = {{"value", c.value}, {"bound", c.bound}, {"ok", c.ok()}};
      all_ok &= c.ok();
    }
    atomic_write(std::filesystem::path(cfg.out_dir) / "identities.json",
                 j.dump(2) + "\n");
  }
  return all_ok ? 0 : 1;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"boa-lab: adiabatic effective-dynamics laboratory"};
  app.require_subcommand(1);

  std::string config_path, experiment = "all", out_dir;
  bool have_seed = false;
  std::uint64_t seed = 0;

  auto *run = app.add_subcommand("run", "run an experiment sweep");
  run->add_option("--config", config_path, "config file (dotted keys)");
  run->add_option("--experiment", experiment,
                  "thm1|thm3|remainder|naip|identities|all")
      ->check(CLI::IsMember(
          {"thm1", "thm3", "remainder", "naip", "identities", "all"}));
  run->add_option("--out", out_dir, "output directory");
  auto *seed_opt = run->add_option("--seed", seed, "override RNG seed");

  auto *verify = app.add_subcommand("verify", "assumption certificates only");
  verify->add_option("--config", config_path, "config file (dotted keys)");

  CLI11_PARSE(app, argc, argv);
  have_seed = seed_opt->count() > 0;

  try {
    SimConfig cfg =
        config_path.empty() ? SimConfig{} : load_config(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (have_seed) cfg.seed = seed;

    if (verify->parsed()) {
      const auto grid = make_grid(cfg.grid_m, cfg.grid_n, cfg.grid_l);
      const auto H = build_model(cfg.model, grid);
      const auto cert = verify_assumptions(H, 2, cfg.tol_delta_min);
      const auto b = diagonalize_fibers(H);
      std::cout << "model: " << to_string(cfg.model.kind) << "\n"
                << "measured gap delta       = " << cert.delta << "\n"
                << "simplicity margin        = " << cert.simplicity_margin
                << "\n";
      for (std::size_t s = 0; s < cert.deriv_norms.size(); ++s)
        std::cout << "max |d^" << s + 1 << " H(y)|          = "
                  << cert.deriv_norms[s] << "\n";
      std::cout << "gauge diagnostic max|a|  = " << b.a_max.maxCoeff() << "\n"
                << "born-huang max v         = " << b.v.maxCoeff() << "\n"
                << (cert.passed ? "[PASS] assumptions verified"
                                : "[FAIL] assumptions not satisfied")
                << "\n";
      return cert.passed ? 0 : 1;
    }
    return run_experiments(cfg, experiment);
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
