// adjgp: command-line front end.
//
//   adjgp simulate   --config ode.ini --out run
//   adjgp infer      --config ode.ini --out run [--jobs 8] [--slice t=5]
//   adjgp mcmc       --config pde.ini --out run
//   adjgp sweep      --config pde.ini --out sweep
//   adjgp scan-hyper --config ode.ini --out run
//   adjgp shift-demo [--config shift.ini] --out shift
//
// Exit codes: 0 success, 2 configuration error, 3 numerical error,
// 4 solver instability, 1 anything else.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "adjgp/commands.hpp"
#include "adjgp/error.hpp"
#include "adjgp/parallel.hpp"

namespace {

double parse_slice(const std::string& text) {
  if (text.rfind("t=", 0) != 0) throw adjgp::ConfigError("--slice expects t=<value>");
  try {
    std::size_t used = 0;
    const double t = std::stod(text.substr(2), &used);
    if (used != text.size() - 2) throw std::invalid_argument(text);
    return t;
  } catch (const std::exception&) {
    throw adjgp::ConfigError("--slice expects t=<value>, got '" + text + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adjoint-method inference of GP forcing functions"};
  app.require_subcommand(1);

  std::string config_path, out, data, slice;
  unsigned jobs = adjgp::default_jobs();
  std::uint64_t seed = 0;
  std::size_t repeats = 3, max_cells = 0;

  auto common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", config_path, "experiment config (INI)");
    if (config_required) c->required();
    sub->add_option("--out", out, "output directory (default: [output] dir)");
    sub->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "override seeds: data=s, basis=s+1, noise=s+2, ...");
    sub->add_option("--slice", slice, "PDE only: also export spatial slices at t=<value>");
  };
  auto* sim = app.add_subcommand("simulate", "generate a synthetic data bundle");
  common(sim, true);
  auto* inf = app.add_subcommand("infer", "posterior over the forcing from a data bundle");
  common(inf, true);
  inf->add_option("--data", data, "data bundle directory (default: --out)");
  inf->add_option("--repeats", repeats, "timing repeats (median reported)");
  auto* mc = app.add_subcommand("mcmc", "Metropolis-Hastings check against the posterior");
  common(mc, true);
  mc->add_option("--data", data, "data bundle directory (default: --out)");
  auto* sw = app.add_subcommand("sweep", "sensors x features x replicates MSE grid");
  common(sw, true);
  sw->add_option("--max-cells", max_cells, "stop after this many new cells");
  auto* sc = app.add_subcommand("scan-hyper", "grid scan of the predictive NLL");
  common(sc, true);
  sc->add_option("--data", data, "data bundle directory (default: --out)");
  auto* sd = app.add_subcommand("shift-demo", "shift-operator example end to end");
  common(sd, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    adjgp::ExperimentConfig config;
    if (!config_path.empty()) config = adjgp::load_config(config_path);
    else config = adjgp::default_shift_config();
    adjgp::CommandOptions opts;
    opts.out = out;
    opts.data = data;
    opts.jobs = jobs;
    opts.repeats = repeats;
    opts.max_cells = max_cells;
    if (!slice.empty()) opts.slice_t = parse_slice(slice);
    const bool seeded = app.get_subcommands().front()->count("--seed") > 0;
    if (seeded) adjgp::apply_seed(config, seed);

    nlohmann::json manifest;
    if (sim->parsed()) manifest = adjgp::cmd_simulate(config, opts);
    else if (inf->parsed()) manifest = adjgp::cmd_infer(config, opts);
    else if (mc->parsed()) manifest = adjgp::cmd_mcmc(config, opts);
    else if (sw->parsed()) manifest = adjgp::cmd_sweep(config, opts);
    else if (sc->parsed()) manifest = adjgp::cmd_scan(config, opts);
    else manifest = adjgp::cmd_shift_demo(config, opts);

    manifest.erase("files");
    std::cout << manifest.dump(2) << '\n';
    return 0;
  } catch (const adjgp::SolverError& e) {
    std::cerr << "solver error: " << e.what() << '\n';
    return 4;
  } catch (const adjgp::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const adjgp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const adjgp::StructuralError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const adjgp::DomainError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
