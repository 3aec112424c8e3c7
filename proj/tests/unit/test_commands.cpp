#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "adjgp/commands.hpp"
#include "adjgp/error.hpp"
#include "adjgp/log.hpp"

using namespace adjgp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() /
                     ("adjgp_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

// metric -> value from a two-column CSV
std::map<std::string, std::string> metrics(const fs::path& p) {
  std::map<std::string, std::string> out;
  const auto ls = lines(p);
  for (std::size_t i = 1; i < ls.size(); ++i) {
    const auto comma = ls[i].find(',');
    out[ls[i].substr(0, comma)] = ls[i].substr(comma + 1);
  }
  return out;
}

ExperimentConfig small_ode() {
  ExperimentConfig c;
  // long interval and short lengthscale keep Phi well conditioned for ML
  c.ode.t_end = 20.0;
  c.cells = 2000;
  c.kernel = {0.3, 1.0};
  c.features = 20;
  c.truth.features = 200;
  c.sensors.count = 30;
  c.sensors.heldout = 5;
  c.sigma = 0.01;
  c.predictive_samples = 20;
  return c;
}

ExperimentConfig small_pde() {
  ExperimentConfig c;
  c.kind = SystemKind::Pde;
  c.nt = 40;
  c.ny = 10;
  c.nx = 10;
  c.sensors.rule = "grid";
  c.sensors.count = 4;
  c.sensors.heldout = 2;
  c.truth.features = 100;
  c.features = 10;
  c.kernel = {2.0, 2.0};
  c.truth.kernel = {2.0, 2.0};
  c.predictive_samples = 10;
  c.sweep.sensors = {1, 4};
  c.sweep.features = {5, 10};
  c.sweep.replicates = 3;
  return c;
}

struct Quiet {
  WarningHandler previous = set_warning_handler([](const std::string&) {});
  ~Quiet() { set_warning_handler(previous); }
};

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ADJGP_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("simulate then infer: manifests hash every file") {
  Quiet quiet;
  const fs::path dir = scratch("ode");
  CommandOptions o;
  o.out = dir.string();
  o.repeats = 1;
  const ExperimentConfig c = small_ode();
  cmd_simulate(c, o);
  cmd_infer(c, o);
  for (const char* m : {"manifest_simulate.json", "manifest_infer.json"}) {
    const auto j = read_json(dir / m);
    CHECK(j.at("config_hash") == config_hash(c));
    REQUIRE(j.at("files").size() > 0);
    for (const auto& f : j.at("files")) {
      const fs::path p = dir / f.at("path").get<std::string>();
      CHECK(fs::exists(p));
      CHECK(f.at("sha256") == sha256_file(p.string()));
      CHECK(f.at("bytes") == fs::file_size(p));
    }
  }
  CHECK(lines(dir / "observations.csv").front() == "index,set,t,noiseless,reading");
  CHECK(lines(dir / "observations.csv").size() == 1 + 30 + 5);
  CHECK(lines(dir / "phi.csv").size() == 1 + 30);
  const auto pred = metrics(dir / "predictive.csv");
  CHECK(pred.count("heldout_predictive_mse") == 1);
  CHECK(std::stod(pred.at("heldout_predictive_mse")) < 1.0);
  // n = 30 >= M = 20: the ML estimate is reported
  CHECK(fs::exists(dir / "ml.csv"));
  CHECK(lines(dir / "ml.csv").front() == "feature,q_hat,std,q_true");
  const auto post = read_json(dir / "posterior.json");
  CHECK(post.at("M") == 20);
  CHECK(post.at("config_hash") == config_hash(c));
}

TEST_CASE("ML is skipped, not failed, when n < M") {
  Quiet quiet;
  const fs::path dir = scratch("ode_wide");
  CommandOptions o;
  o.out = dir.string();
  o.repeats = 1;
  ExperimentConfig c = small_ode();
  c.sensors.count = 10;
  cmd_simulate(c, o);
  const auto m = cmd_infer(c, o);
  CHECK_FALSE(fs::exists(dir / "ml.csv"));
  CHECK(m.at("ml").at("status") == "skipped");
}

TEST_CASE("reruns and thread counts give byte-identical outputs") {
  Quiet quiet;
  const ExperimentConfig c = small_pde();
  std::map<std::string, std::string> first;
  for (unsigned jobs : {1u, 3u}) {
    const fs::path dir = scratch("pde_jobs" + std::to_string(jobs));
    CommandOptions o;
    o.out = dir.string();
    o.jobs = jobs;
    o.repeats = 1;
    cmd_simulate(c, o);
    cmd_infer(c, o);
    for (const char* m : {"manifest_simulate.json", "manifest_infer.json"}) {
      const auto manifest = read_json(dir / m);
      for (const auto& f : manifest.at("files")) {
        if (f.value("volatile", false)) continue;
        const auto name = f.at("path").get<std::string>();
        const auto hash = f.at("sha256").get<std::string>();
        if (jobs == 1) {
          first[name] = hash;
        } else {
          REQUIRE(first.count(name) == 1);
          CHECK_MESSAGE(first.at(name) == hash, name);
        }
      }
    }
  }
  CHECK(first.count("posterior.json") == 1);
  CHECK(first.count("forcing_mean.csv") == 1);
}

TEST_CASE("infer refuses a bundle made for another grid") {
  Quiet quiet;
  const fs::path dir = scratch("mismatch");
  CommandOptions o;
  o.out = dir.string();
  ExperimentConfig c = small_ode();
  cmd_simulate(c, o);
  c.cells = 500;
  CHECK_THROWS_AS(cmd_infer(c, o), ConfigError);
}

TEST_CASE("slices are written for the PDE only") {
  Quiet quiet;
  CommandOptions o;
  o.slice_t = 5.0;
  o.out = scratch("slice_pde").string();
  cmd_simulate(small_pde(), o);
  CHECK(fs::exists(fs::path(o.out) / "solution_slice.csv"));
  o.out = scratch("slice_ode").string();
  CHECK_THROWS_AS(cmd_simulate(small_ode(), o), ConfigError);
}

TEST_CASE("sweep resumes without recomputing finished cells") {
  Quiet quiet;
  const ExperimentConfig c = small_pde();
  const fs::path full = scratch("sweep_full");
  CommandOptions o;
  o.out = full.string();
  o.jobs = 2;
  const auto done = cmd_sweep(c, o);
  CHECK(done.at("cells_done") == 12);
  const auto summary = lines(full / "summary.csv");
  CHECK(summary.front() == "sensors,features,replicates,median_mse,ci_lo,ci_hi");
  CHECK(summary.size() == 1 + 4);

  const fs::path part = scratch("sweep_part");
  o.out = part.string();
  o.max_cells = 5;
  const auto first = cmd_sweep(c, o);
  CHECK(first.at("cells_done") == 5);
  CHECK_FALSE(fs::exists(part / "sweep.csv"));
  o.max_cells = 0;
  const auto second = cmd_sweep(c, o);
  CHECK(second.at("cells_computed_this_run") == 7);
  CHECK(slurp(part / "sweep.csv") == slurp(full / "sweep.csv"));
  CHECK(slurp(part / "summary.csv") == slurp(full / "summary.csv"));

  ExperimentConfig other = c;
  other.sigma = 0.2;
  CHECK_THROWS_AS(cmd_sweep(other, o), ConfigError);
}

TEST_CASE("a one-cell sweep reproduces the infer MSE") {
  Quiet quiet;
  ExperimentConfig c = small_pde();
  c.sweep.sensors = {4};
  c.sweep.features = {10};
  c.sweep.replicates = 1;
  CommandOptions o;
  o.out = scratch("one_cell_infer").string();
  o.repeats = 1;
  cmd_simulate(c, o);
  cmd_infer(c, o);
  const auto pred = metrics(fs::path(o.out) / "predictive.csv");
  o.out = scratch("one_cell_sweep").string();
  cmd_sweep(c, o);
  const auto rows = lines(fs::path(o.out) / "sweep.csv");
  REQUIRE(rows.size() == 2);
  const std::string mse = rows[1].substr(rows[1].rfind(',') + 1);
  CHECK(std::stod(mse) == doctest::Approx(std::stod(pred.at("heldout_predictive_mse"))).epsilon(1e-12));
}

TEST_CASE("scan writes a ranked table") {
  Quiet quiet;
  ExperimentConfig c = small_ode();
  c.scan.axes = {{"lengthscale", 0.2, 2.0, 3, true}, {"p0", 4.0, 6.0, 2, false}};
  c.scan.samples = 10;
  CommandOptions o;
  o.out = scratch("scan").string();
  cmd_simulate(c, o);
  cmd_scan(c, o);
  const auto rows = lines(fs::path(o.out) / "scan.csv");
  CHECK(rows.front() == "rank,lengthscale,p0,nll");
  CHECK(rows.size() == 1 + 6);
  double prev = -INFINITY;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double nll = std::stod(rows[i].substr(rows[i].rfind(',') + 1));
    CHECK(nll >= prev);
    prev = nll;
  }
}

TEST_CASE("MCMC comparison agrees with the analytic posterior on a small problem") {
  Quiet quiet;
  ExperimentConfig c = small_pde();
  c.features = 3;
  c.mcmc.steps = 30000;
  c.mcmc.burn_in = 3000;
  const SyntheticData d = simulate(c);
  const McmcComparison r = run_mcmc_comparison(c, training_set(d, c.sigma));
  CHECK(r.tuned_in_band);
  CHECK(r.forward_evaluations >= c.mcmc.steps);
  for (Eigen::Index k = 0; k < 3; ++k) {
    const double sd = std::sqrt(r.analytic.covariance(k, k));
    CHECK(std::abs(r.mean(k) - r.analytic.mean(k)) <= 4.0 * r.mcse(k));
    CHECK(r.sd(k) == doctest::Approx(sd).epsilon(0.2));
  }
}

TEST_CASE("shift demo meets its observation MSE") {
  Quiet quiet;
  CommandOptions o;
  o.out = scratch("shift").string();
  const auto m = cmd_shift_demo(default_shift_config(), o);
  const auto s = metrics(fs::path(o.out) / "summary.csv");
  CHECK(std::stod(s.at("observation_mse")) <= 0.01);
  CHECK(default_shift_config().sensors.count == 20);
}

TEST_CASE("seed flag mapping") {
  ExperimentConfig c;
  apply_seed(c, 10);
  CHECK(c.seeds.data == 10);
  CHECK(c.seeds.basis == 11);
  CHECK(c.seeds.noise == 12);
  CHECK(c.seeds.sample == 13);
  CHECK(c.mcmc.seed == 14);
}

#ifdef ADJGP_CLI_PATH
TEST_CASE("CLI exit codes") {
  const fs::path dir = scratch("cli");
  const std::string cfg = std::string(ADJGP_SOURCE_DIR) + "/configs/shift.ini";
  CHECK(run_cli("shift-demo --out " + (dir / "ok").string()) == 0);
  CHECK(run_cli("simulate --config " + cfg + " --out " + (dir / "sim").string() + " --seed 3") == 0);
  CHECK(fs::exists(dir / "sim" / "manifest_simulate.json"));
  CHECK(run_cli("simulate --config /nonexistent.ini --out " + dir.string()) == 2);
  CHECK(run_cli("simulate") == 2);
  CHECK(run_cli("bogus") == 2);

  // a config that fails validation
  const fs::path bad = dir / "bad.ini";
  std::ofstream(bad) << "[system]\nkind = pde\n[grid]\nnt = 3\n";
  CHECK(run_cli("simulate --config " + bad.string() + " --out " + dir.string()) == 2);

  // a chain that cannot move is a numerical error: exit code 3
  const fs::path num = dir / "num.ini";
  std::ofstream(num) << "[system]\nkind = shift\n[grid]\ncells = 200\n[shift]\nshift = 2\n"
                        "[kernel]\nfeatures = 5\n[truth]\nfeatures = 50\n"
                        "[mcmc]\nsteps = 3000\nburn_in = 10\nproposal_scale = 1e6\ntune = false\n";
  CHECK(run_cli("simulate --config " + num.string() + " --out " + (dir / "n").string()) == 0);
  CHECK(run_cli("mcmc --config " + num.string() + " --out " + (dir / "n").string()) == 3);

  // stiff ODE on a coarse grid blows up: exit code 4
  const fs::path stiff = dir / "stiff.ini";
  std::ofstream(stiff) << "[ode]\np2 = 1e-6\n[grid]\ncells = 100\n[truth]\nfeatures = 50\n";
  CHECK(run_cli("simulate --config " + stiff.string() + " --out " + (dir / "s").string()) == 4);
  CHECK(run_cli("simulate --config " + cfg + " --out " + dir.string() + " --slice t=abc") == 2);
}
#endif
