#include "adjgp/commands.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <tuple>

#include "adjgp/error.hpp"
#include "adjgp/log.hpp"
#include "adjgp/parallel.hpp"

namespace fs = std::filesystem;

namespace adjgp {

void apply_seed(ExperimentConfig& c, std::uint64_t seed) {
  c.seeds = {seed, seed + 1, seed + 2, seed + 3};
  c.mcmc.seed = seed + 4;
}

namespace {

using clock_type = std::chrono::steady_clock;

double since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string out_dir(const ExperimentConfig& c, const CommandOptions& o) {
  const std::string dir = o.out.empty() ? c.output : o.out;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir + ": " + ec.message());
  return dir;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
}

class Manifest {
 public:
  Manifest(fs::path dir, std::string command, const ExperimentConfig& c)
      : dir_(std::move(dir)), name_("manifest_" + command + ".json") {
    doc_["command"] = std::move(command);
    doc_["config_hash"] = config_hash(c);
    doc_["system"] = to_string(c.kind);
    doc_["seeds"] = {{"data", c.seeds.data},
                     {"basis", c.seeds.basis},
                     {"noise", c.seeds.noise},
                     {"sample", c.seeds.sample},
                     {"mcmc", c.mcmc.seed}};
    doc_["files"] = nlohmann::json::array();
  }

  // Volatile files (timings, progress logs) are listed and hashed but are
  // not covered by the byte-identical rerun guarantee.
  void add(const std::string& name, bool is_volatile = false) {
    const fs::path p = dir_ / name;
    nlohmann::json entry = {{"path", name},
                            {"sha256", sha256_file(p.string())},
                            {"bytes", fs::file_size(p)}};
    if (is_volatile) entry["volatile"] = true;
    doc_["files"].push_back(std::move(entry));
  }

  nlohmann::json& operator[](const std::string& key) { return doc_[key]; }

  nlohmann::json write() {
    write_text(dir_ / name_, doc_.dump(2) + "\n");
    return doc_;
  }

 private:
  fs::path dir_;
  std::string name_;
  nlohmann::json doc_;
};

void write_field_files(const fs::path& dir, const std::string& stem, const Field& f,
                       Manifest& manifest) {
  write_field_csv((dir / (stem + ".csv")).string(), f);
  write_field_binary((dir / (stem + ".agpf")).string(), f);
  manifest.add(stem + ".csv");
  manifest.add(stem + ".agpf");
}

void write_slice(const fs::path& dir, const std::string& stem, const Field& f,
                 const CommandOptions& o, Manifest& manifest) {
  if (!o.slice_t) return;
  if (f.grid().ndim() != 3) throw ConfigError("--slice needs a space-time (PDE) run");
  const std::string name = stem + "_slice.csv";
  write_field_csv((dir / name).string(), time_slice(f, *o.slice_t));
  manifest.add(name);
}

const char* axis_names(std::size_t dim) { return dim == 1 ? "t" : "t,y,x"; }

void write_observations(const fs::path& path, const SyntheticData& d) {
  auto out = open_out(path);
  const std::size_t dim = d.solution.grid().ndim();
  out << "index,set," << axis_names(dim) << ",noiseless,reading\n";
  auto rows = [&](const SensorSet& s, const Eigen::VectorXd& clean,
                  const Eigen::VectorXd& noisy, const char* tag) {
    for (std::size_t i = 0; i < s.windows.size(); ++i) {
      out << i << ',' << tag;
      for (double x : s.centres[i]) out << ',' << num(x);
      out << ',' << num(clean(Eigen::Index(i))) << ',' << num(noisy(Eigen::Index(i))) << '\n';
    }
  };
  rows(d.train, d.noiseless, d.readings, "train");
  rows(d.heldout, d.heldout_noiseless, d.heldout_readings, "heldout");
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(line);
  while (std::getline(in, item, ',')) out.push_back(item);
  return out;
}

double parse_num(const std::string& s, const std::string& where) {
  if (s == "nan") return std::nan("");
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ConfigError(where + ": malformed number '" + s + "'");
  return v;
}

void write_table(const fs::path& path, const std::string& header,
                 const std::vector<std::vector<std::string>>& rows) {
  auto out = open_out(path);
  out << header << '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
    out << '\n';
  }
}

}  // namespace

// ---------------------------------------------------------------------------

SparseWindows::SparseWindows(std::span<const Field> windows) {
  if (windows.empty()) return;
  volume_ = windows.front().grid().cell_volume();
  for (const auto& w : windows) {
    std::vector<std::pair<std::size_t, double>> row;
    for (std::size_t k = 0; k < w.size(); ++k)
      if (w.defined(k) && w[k] != 0.0) row.emplace_back(k, w[k]);
    rows_.push_back(std::move(row));
  }
}

Eigen::VectorXd SparseWindows::apply(const Field& u) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows_.size()));
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    double sum = 0.0;
    for (const auto& [k, w] : rows_[i])
      if (u.defined(k)) sum += w * u[k];
    out(static_cast<Eigen::Index>(i)) = sum * volume_;
  }
  return out;
}

Bundle load_bundle(const ExperimentConfig& c, const std::string& dir) {
  const fs::path root(dir);
  std::ifstream mf(root / "manifest_simulate.json");
  if (!mf) throw ConfigError("no data bundle in " + dir + " (run simulate first)");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(dir + "/manifest_simulate.json: " + e.what());
  }
  const Grid grid = make_grid(c);
  if (!manifest.contains("grid") ||
      manifest["grid"]["dims"].get<std::vector<std::size_t>>() != grid.dims())
    throw ConfigError("data bundle in " + dir + " was simulated on a different grid");

  std::ifstream in(root / "observations.csv");
  if (!in) throw ConfigError("data bundle in " + dir + " lacks observations.csv");
  std::string line;
  std::getline(in, line);
  std::vector<double> train, held;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cols = split_csv(line);
    if (cols.size() < 4) throw ConfigError("observations.csv line " + std::to_string(lineno) + " is short");
    const double reading = parse_num(cols.back(), "observations.csv");
    (cols[1] == "train" ? train : held).push_back(reading);
  }
  Bundle b;
  const SensorSet ts = training_sensors(c, grid);
  const SensorSet hs = heldout_sensors(c, grid);
  if (ts.windows.size() != train.size() || hs.windows.size() != held.size())
    throw ConfigError("data bundle in " + dir + " has a different sensor layout than the config");
  const double sigma = std::max(c.sigma, kSigmaFloor);
  b.train = {ts.windows, Eigen::Map<Eigen::VectorXd>(train.data(), Eigen::Index(train.size())), sigma};
  b.heldout = {hs.windows, Eigen::Map<Eigen::VectorXd>(held.data(), Eigen::Index(held.size())), sigma};
  return b;
}

// ---------------------------------------------------------------------------

nlohmann::json cmd_simulate(const ExperimentConfig& c, const CommandOptions& o) {
  c.validate();
  const fs::path dir = out_dir(c, o);
  const SyntheticData d = simulate(c, o.jobs);
  Manifest m(dir, "simulate", c);

  write_text(dir / "config.ini", config_to_text(c));
  m.add("config.ini");
  write_field_files(dir, "truth_forcing", d.truth.forcing, m);
  write_field_files(dir, "solution", d.solution, m);
  write_observations(dir / "observations.csv", d);
  m.add("observations.csv");
  if (d.truth.weights) {
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index k = 0; k < d.truth.weights->size(); ++k)
      rows.push_back({std::to_string(k), num((*d.truth.weights)(k))});
    write_table(dir / "true_weights.csv", "feature,q", rows);
    m.add("true_weights.csv");
  }
  write_slice(dir, "truth_forcing", d.truth.forcing, o, m);
  write_slice(dir, "solution", d.solution, o, m);

  const Grid& g = d.solution.grid();
  m["grid"] = {{"dims", g.dims()}, {"spacing", g.spacing()}, {"origin", g.origin()}};
  m["sensor_rule"] = d.train.rule;
  m["heldout_rule"] = d.heldout.rule;
  m["n_train"] = d.train.windows.size();
  m["n_heldout"] = d.heldout.windows.size();
  return m.write();
}

nlohmann::json cmd_infer(const ExperimentConfig& c, const CommandOptions& o) {
  c.validate();
  const fs::path dir = out_dir(c, o);
  const Bundle b = load_bundle(c, o.data.empty() ? dir.string() : o.data);
  const Grid& grid = b.train.windows.front().grid();

  const std::size_t repeats = std::max<std::size_t>(o.repeats, 1);
  std::vector<std::array<double, 5>> times;
  std::optional<PipelineResult> r;
  for (std::size_t k = 0; k < repeats; ++k) {
    r = run_pipeline(c, b.train, o.jobs);
    times.push_back(r->seconds);
  }
  const PosteriorQ& post = r->posterior;
  Manifest m(dir, "infer", c);
  const std::string hash = config_hash(c);

  write_text(dir / "posterior.json", posterior_to_json(post, r->basis.seed(), hash).dump(2) + "\n");
  m.add("posterior.json");
  write_text(dir / "basis.json", basis_to_json(r->basis, true).dump(2) + "\n");
  m.add("basis.json");
  write_phi_csv((dir / "phi.csv").string(), r->phi);
  m.add("phi.csv");

  const ForcingMoments fm = posterior_forcing(post, r->basis_matrix, grid);
  write_field_files(dir, "forcing_mean", fm.mean, m);
  write_field_files(dir, "forcing_variance", fm.variance, m);
  write_slice(dir, "forcing_mean", fm.mean, o, m);
  write_slice(dir, "forcing_variance", fm.variance, o, m);

  // Predictive report.
  const SystemHandles system = make_system(c);
  const MisspecificationCheck check =
      check_misspecification(r->phi.entries, b.train.readings, b.train.sigma, post);
  const Eigen::VectorXd fitted =
      apply_windows(b.train.windows, system.forward(fm.mean));
  const double train_mse =
      (b.train.readings - fitted).squaredNorm() / double(b.train.size());
  std::vector<std::vector<std::string>> pred = {
      {"train_mean_mse", num(train_mse)},
      {"standardized_residual", num(check.standardized_residual)},
      {"misspecification_threshold", num(check.threshold)},
      {"misspecification_fired", check.fired ? "1" : "0"},
  };
  if (b.heldout.size() > 0) {
    const double mse = predictive_mse(post, r->basis_matrix, grid, system.forward, b.heldout,
                                      c.predictive_samples, c.seeds.sample, o.jobs);
    pred.push_back({"heldout_predictive_mse", num(mse)});
    pred.push_back({"predictive_samples", std::to_string(c.predictive_samples)});
  }
  write_table(dir / "predictive.csv", "metric,value", pred);
  m.add("predictive.csv");

  // ML estimate where it is defined.
  const Eigen::Index n = r->phi.entries.rows(), mm = r->phi.entries.cols();
  if (n >= mm || c.ridge > 0.0) {
    try {
      const MlEstimate ml = ml_estimate(r->phi.entries, b.train.readings, b.train.sigma, c.ridge);
      std::optional<Eigen::VectorXd> truth;
      const fs::path tw = fs::path(o.data.empty() ? dir : fs::path(o.data)) / "true_weights.csv";
      if (std::ifstream tin(tw); tin) {
        std::string line;
        std::getline(tin, line);
        std::vector<double> q;
        while (std::getline(tin, line))
          if (!line.empty()) q.push_back(parse_num(split_csv(line).back(), "true_weights.csv"));
        if (Eigen::Index(q.size()) == mm)
          truth = Eigen::Map<Eigen::VectorXd>(q.data(), mm);
      }
      std::vector<std::vector<std::string>> rows;
      for (Eigen::Index k = 0; k < mm; ++k)
        rows.push_back({std::to_string(k), num(ml.weights(k)),
                        num(std::sqrt(std::max(0.0, ml.covariance(k, k)))),
                        truth ? num((*truth)(k)) : "nan"});
      write_table(dir / "ml.csv", "feature,q_hat,std,q_true", rows);
      m.add("ml.csv");
      m["ml"] = {{"status", "ok"}, {"condition", ml.condition}};
    } catch (const NumericalError& e) {
      m["ml"] = {{"status", "skipped"}, {"reason", e.what()}};
    }
  } else {
    m["ml"] = {{"status", "skipped"},
               {"reason", "n < M; only the Bayesian posterior is defined"}};
  }

  // Timing: median of the repeats, per stage.
  std::vector<std::vector<std::string>> trows;
  for (std::size_t s = 0; s < kStageNames.size(); ++s) {
    std::vector<double> v;
    for (const auto& t : times) v.push_back(t[s]);
    std::sort(v.begin(), v.end());
    const double med = v.size() % 2 ? v[v.size() / 2]
                                    : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
    trows.push_back({kStageNames[s], num(med), std::to_string(repeats)});
  }
  write_table(dir / "timing.csv", "stage,median_seconds,repeats", trows);
  m.add("timing.csv", true);

  m["n"] = n;
  m["M"] = mm;
  m["jitter"] = post.jitter;
  m["misspecification"] = {{"standardized_residual", check.standardized_residual},
                           {"threshold", check.threshold},
                           {"fired", check.fired}};
  return m.write();
}

// ---------------------------------------------------------------------------

McmcComparison run_mcmc_comparison(const ExperimentConfig& c, const ObservationSet& obs,
                                   unsigned jobs) {
  auto t0 = clock_type::now();
  PipelineResult r = run_pipeline(c, obs, jobs);
  McmcComparison out;
  out.adjoint_seconds = since(t0);
  out.analytic = r.posterior;

  const std::size_t m = r.basis.size();
  if (m >= 50)
    warn("MH with M = " + std::to_string(m) + " features rarely converges within " +
         std::to_string(c.mcmc.steps) +
         " steps; expect R-hat above 1.05 and treat the chain as a cost benchmark");

  const SystemHandles system = make_system(c);
  const SparseWindows windows(obs.windows);
  const Grid& grid = obs.windows.front().grid();
  const Eigen::MatrixXd& basis_matrix = r.basis_matrix;
  const double inv_var = 1.0 / (obs.sigma * obs.sigma);
  const LogTarget log_target = [&](const Eigen::VectorXd& q) {
    const Field u = system.forward(forcing_from_weights(basis_matrix, q, grid));
    const Eigen::VectorXd resid = obs.readings - windows.apply(u);
    return -0.5 * q.squaredNorm() - 0.5 * inv_var * resid.squaredNorm();
  };

  ChainConfig cfg;
  cfg.steps = c.mcmc.steps;
  cfg.burn_in = c.mcmc.burn_in;
  cfg.proposal_scale = c.mcmc.proposal_scale;
  cfg.seed = c.mcmc.seed;
  cfg.batch_size = c.mcmc.batch_size;
  cfg.validate();

  t0 = clock_type::now();
  Eigen::VectorXd init = Eigen::VectorXd::Zero(Eigen::Index(m));
  if (c.mcmc.tune) {
    const Tuning t = tune_proposal_scale(log_target, init, cfg);
    cfg.proposal_scale = t.proposal_scale;
    out.tuned_in_band = t.in_band;
    out.forward_evaluations += t.evaluations;
    init = t.state;
  }
  out.proposal_scale = cfg.proposal_scale;
  out.chain = rw_mh(log_target, init, cfg);
  out.forward_evaluations += out.chain.evaluations;
  out.mcmc_seconds = since(t0);

  const Eigen::MatrixXd kept = out.chain.kept(cfg.burn_in);
  out.diagnostics = chain_diagnostics(kept);
  const double rows = double(kept.rows());
  out.mean = kept.colwise().mean().transpose();
  out.sd.resize(Eigen::Index(m));
  out.mcse.resize(Eigen::Index(m));
  for (Eigen::Index k = 0; k < Eigen::Index(m); ++k) {
    out.sd(k) = std::sqrt((kept.col(k).array() - out.mean(k)).square().sum() / (rows - 1.0));
    const double ess = out.diagnostics.ess(k);
    out.mcse(k) = ess > 0.0 ? out.sd(k) / std::sqrt(ess) : std::numeric_limits<double>::infinity();
  }
  return out;
}

nlohmann::json cmd_mcmc(const ExperimentConfig& c, const CommandOptions& o) {
  c.validate();
  const fs::path dir = out_dir(c, o);
  const Bundle b = load_bundle(c, o.data.empty() ? dir.string() : o.data);
  const McmcComparison cmp = run_mcmc_comparison(c, b.train, o.jobs);
  Manifest m(dir, "mcmc", c);

  write_chain_csv((dir / "chain.csv").string(), cmp.chain);
  m.add("chain.csv");
  std::vector<std::vector<std::string>> rows;
  for (Eigen::Index k = 0; k < cmp.mean.size(); ++k)
    rows.push_back({std::to_string(k), num(cmp.analytic.mean(k)),
                    num(std::sqrt(cmp.analytic.covariance(k, k))), num(cmp.mean(k)),
                    num(cmp.sd(k)), num(cmp.mcse(k)), num(cmp.diagnostics.ess(k)),
                    num(cmp.diagnostics.rhat(k))});
  write_table(dir / "comparison.csv",
              "feature,adjoint_mean,adjoint_std,mcmc_mean,mcmc_std,mcmc_se,ess,rhat", rows);
  m.add("comparison.csv");
  write_table(dir / "cost.csv", "method,seconds,forward_evaluations",
              {{"adjoint", num(cmp.adjoint_seconds), std::to_string(b.train.size())},
               {"mcmc", num(cmp.mcmc_seconds), std::to_string(cmp.forward_evaluations)}});
  m.add("cost.csv", true);

  m["acceptance_rate"] = cmp.chain.acceptance_rate;
  m["proposal_scale"] = cmp.proposal_scale;
  m["tuned_in_band"] = cmp.tuned_in_band;
  m["max_rhat"] = cmp.diagnostics.max_rhat();
  m["converged"] = cmp.diagnostics.converged();
  m["forward_evaluations"] = cmp.forward_evaluations;
  return m.write();
}

// ---------------------------------------------------------------------------

nlohmann::json cmd_sweep(const ExperimentConfig& c, const CommandOptions& o) {
  c.validate();
  const fs::path dir = out_dir(c, o);
  const std::string hash = config_hash(c);

  // Resume state.
  const fs::path state = dir / "sweep_state.json";
  const fs::path progress = dir / "sweep_cells.csv";
  const char* header = "sensors,features,replicate,data_seed,basis_seed,noise_seed,mse";
  using Key = std::tuple<std::size_t, std::size_t, std::size_t>;
  std::map<Key, std::vector<std::string>> done;
  if (fs::exists(state)) {
    std::ifstream sin(state);
    const auto j = nlohmann::json::parse(sin, nullptr, false);
    if (j.is_discarded() || j.value("config_hash", "") != hash)
      throw ConfigError("output directory " + dir.string() +
                        " holds a sweep for a different config; use a fresh --out");
    std::ifstream pin(progress);
    std::string line;
    std::getline(pin, line);
    while (std::getline(pin, line)) {
      const auto cols = split_csv(line);
      if (cols.size() != 7) continue;  // torn final line from an interruption
      const Key k{std::stoull(cols[0]), std::stoull(cols[1]), std::stoull(cols[2])};
      done[k] = cols;
    }
  } else {
    write_text(state, nlohmann::json{{"config_hash", hash}}.dump(2) + "\n");
    write_text(progress, std::string(header) + "\n");
  }

  auto replicate_config = [&](std::size_t rep) {
    ExperimentConfig rc = c;
    rc.seeds.data += rep;
    rc.seeds.basis += rep;
    rc.seeds.noise += rep;
    rc.seeds.sample += rep;
    return rc;
  };

  std::vector<Key> todo;
  for (std::size_t s : c.sweep.sensors)
    for (std::size_t f : c.sweep.features)
      for (std::size_t rep = 0; rep < c.sweep.replicates; ++rep)
        if (!done.contains({s, f, rep})) todo.emplace_back(s, f, rep);
  if (o.max_cells > 0 && todo.size() > o.max_cells) todo.resize(o.max_cells);

  // Truth and solution per replicate, shared by all cells of that replicate
  // unless the truth depends on the inference basis.
  const Grid grid = make_grid(c);
  const bool shared_truth = c.truth.source == "rff";
  std::vector<std::size_t> reps;
  for (const auto& [s, f, rep] : todo) reps.push_back(rep);
  std::sort(reps.begin(), reps.end());
  reps.erase(std::unique(reps.begin(), reps.end()), reps.end());
  std::map<std::size_t, std::pair<Truth, Field>> cache;
  if (shared_truth) {
    std::vector<std::optional<std::pair<Truth, Field>>> slots(reps.size());
    parallel_for(reps.size(), o.jobs, [&](std::size_t i) {
      const ExperimentConfig rc = replicate_config(reps[i]);
      Truth t = ground_truth(rc, grid);
      Field u = make_system(rc).forward(t.forcing);
      slots[i].emplace(std::move(t), std::move(u));
    });
    for (std::size_t i = 0; i < reps.size(); ++i) cache.emplace(reps[i], std::move(*slots[i]));
  }

  std::mutex log_mutex;
  std::ofstream plog(progress, std::ios::app | std::ios::binary);
  parallel_for(todo.size(), o.jobs, [&](std::size_t i) {
    const auto [s, f, rep] = todo[i];
    ExperimentConfig rc = replicate_config(rep);
    rc.sensors.count = s;
    rc.features = f;
    rc.validate();
    const SyntheticData d = shared_truth
                                ? observe(rc, grid, cache.at(rep).first, cache.at(rep).second)
                                : simulate(rc);
    const ObservationSet train = training_set(d, rc.sigma);
    const ObservationSet held = heldout_set(d, rc.sigma);
    const PipelineResult r = run_pipeline(rc, train, 1);
    const double mse = predictive_mse(r.posterior, r.basis_matrix, grid, make_system(rc).forward,
                                      held, rc.predictive_samples, rc.seeds.sample, 1);
    std::vector<std::string> row = {std::to_string(s), std::to_string(f), std::to_string(rep),
                                    std::to_string(rc.seeds.data), std::to_string(rc.seeds.basis),
                                    std::to_string(rc.seeds.noise), num(mse)};
    std::lock_guard lock(log_mutex);
    for (std::size_t k = 0; k < row.size(); ++k) plog << (k ? "," : "") << row[k];
    plog << '\n' << std::flush;
    done[{s, f, rep}] = std::move(row);
  });
  plog.close();

  Manifest m(dir, "sweep", c);
  const std::size_t total = c.sweep.sensors.size() * c.sweep.features.size() * c.sweep.replicates;
  m["cells_total"] = total;
  m["cells_done"] = done.size();
  m["cells_computed_this_run"] = todo.size();
  m["replicate_policy"] =
      "replicate r adds r to the data, basis, noise and sample seeds, so truth, noise and "
      "features are all redrawn per replicate";
  m.add("sweep_state.json");
  m.add("sweep_cells.csv", true);
  if (done.size() == total) {
    std::vector<std::vector<std::string>> rows, summary;
    for (std::size_t s : c.sweep.sensors)
      for (std::size_t f : c.sweep.features) {
        std::vector<double> mses;
        for (std::size_t rep = 0; rep < c.sweep.replicates; ++rep) {
          const auto& row = done.at({s, f, rep});
          rows.push_back(row);
          mses.push_back(parse_num(row.back(), "sweep_cells.csv"));
        }
        const MedianSummary ms = summarize_median(mses);
        summary.push_back({std::to_string(s), std::to_string(f),
                           std::to_string(c.sweep.replicates), num(ms.median), num(ms.lo),
                           num(ms.hi)});
      }
    write_table(dir / "sweep.csv", header, rows);
    write_table(dir / "summary.csv", "sensors,features,replicates,median_mse,ci_lo,ci_hi",
                summary);
    m.add("sweep.csv");
    m.add("summary.csv");
    m["complete"] = true;
  } else {
    m["complete"] = false;
  }
  return m.write();
}

// ---------------------------------------------------------------------------

nlohmann::json cmd_scan(const ExperimentConfig& c, const CommandOptions& o) {
  c.validate();
  if (c.scan.axes.empty()) throw ConfigError("[scan] declares no axes");
  const fs::path dir = out_dir(c, o);
  const Bundle b = load_bundle(c, o.data.empty() ? dir.string() : o.data);

  ScoreBudget budget;
  budget.features = c.features;
  budget.samples = c.scan.samples;
  budget.kernel = c.kernel;
  budget.basis_seed = c.seeds.basis;
  budget.sample_seed = c.seeds.sample;
  budget.jobs = o.jobs;
  const SystemFactory factory = [&c](const Theta& theta) {
    Theta system_only = theta;
    system_only.erase("lengthscale");
    system_only.erase("variance");
    return make_system(c, system_only);
  };
  const auto results = grid_scan(c.scan.axes, [&](const Theta& theta) {
    return nll_score(theta, b.train, factory, budget);
  });

  Manifest m(dir, "scan-hyper", c);
  std::string header = "rank";
  for (const auto& [k, v] : results.front().theta) header += "," + k;
  header += ",nll";
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < results.size(); ++i) {
    std::vector<std::string> row = {std::to_string(i + 1)};
    for (const auto& [k, v] : results[i].theta) row.push_back(num(v));
    row.push_back(num(results[i].nll));
    rows.push_back(std::move(row));
  }
  write_table(dir / "scan.csv", header, rows);
  m.add("scan.csv");
  m["best"] = results.front().theta;
  m["best_nll"] = results.front().nll;
  return m.write();
}

// ---------------------------------------------------------------------------

ExperimentConfig default_shift_config() {
  ExperimentConfig c;
  c.kind = SystemKind::Shift;
  c.shift.shift = 2.0;
  c.shift_lo = 0.0;
  c.shift_hi = 10.0;
  c.cells = 200;
  c.kernel = {1.0, 1.0};
  c.features = 200;
  c.truth = {"rff", {1.0, 1.0}, 2000};
  c.sensors.rule = "tile";
  c.sensors.count = 20;
  c.sensors.lo = 2.0;
  c.sensors.hi = 8.0;
  c.sensors.heldout = 0;
  c.sigma = 0.05;
  c.output = "shift_demo";
  return c;
}

nlohmann::json cmd_shift_demo(const ExperimentConfig& c, const CommandOptions& o) {
  if (c.kind != SystemKind::Shift) throw ConfigError("shift-demo needs system.kind = shift");
  c.validate();
  const fs::path dir = out_dir(c, o);
  const SyntheticData d = simulate(c, o.jobs);
  const ObservationSet train = training_set(d, c.sigma);
  const PipelineResult r = run_pipeline(c, train, o.jobs);
  const Grid& grid = d.solution.grid();
  const SystemHandles system = make_system(c);

  const ForcingMoments fm = posterior_forcing(r.posterior, r.basis_matrix, grid);
  const Field u_mean = system.forward(fm.mean);
  const Eigen::VectorXd predicted = apply_windows(train.windows, u_mean);
  const double n = double(train.size());
  const double obs_mse = (train.readings - predicted).squaredNorm() / n;
  const double predictive = predictive_mse(r.posterior, r.basis_matrix, grid, system.forward,
                                           train, c.predictive_samples, c.seeds.sample, o.jobs);
  const double mean_z = train.readings.mean();
  const double obs_std =
      std::sqrt((train.readings.array() - mean_z).square().sum() / std::max(1.0, n - 1.0));

  Manifest m(dir, "shift-demo", c);
  write_text(dir / "config.ini", config_to_text(c));
  m.add("config.ini");
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < train.size(); ++i)
    rows.push_back({std::to_string(i), num(d.train.centres[i][0]),
                    num(train.readings(Eigen::Index(i))), num(predicted(Eigen::Index(i)))});
  write_table(dir / "observations.csv", "index,t,reading,predicted_mean", rows);
  m.add("observations.csv");
  rows.clear();
  for (std::size_t k = 0; k < grid.size(); ++k)
    rows.push_back({num(grid.center(0, k)), num(d.truth.forcing[k]), num(fm.mean[k]),
                    num(fm.variance[k]), d.solution.defined(k) ? num(d.solution[k]) : "nan",
                    u_mean.defined(k) ? num(u_mean[k]) : "nan"});
  write_table(dir / "fields.csv", "t,f_true,f_mean,f_variance,u_true,u_mean", rows);
  m.add("fields.csv");
  write_table(dir / "summary.csv", "metric,value",
              {{"observation_mse", num(obs_mse)},
               {"predictive_mse", num(predictive)},
               {"observation_std", num(obs_std)},
               {"shift", num(c.shift.shift)},
               {"observations", std::to_string(train.size())}});
  m.add("summary.csv");
  m["observation_mse"] = obs_mse;
  m["observation_std"] = obs_std;
  m["sensor_rule"] = d.train.rule;
  return m.write();
}

}  // namespace adjgp
