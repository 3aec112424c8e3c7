#ifndef ADJGP_COMMANDS_HPP_
#define ADJGP_COMMANDS_HPP_

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "adjgp/experiment.hpp"
#include "adjgp/mcmc.hpp"

namespace adjgp {

struct CommandOptions {
  std::string out;   // output directory; empty means config.output
  std::string data;  // data bundle directory; empty means `out`
  unsigned jobs = 1;
  std::optional<double> slice_t;  // PDE only: also export spatial slices at t
  std::size_t repeats = 3;        // infer: timing repeats, median reported
  std::size_t max_cells = 0;      // sweep: stop after this many new cells (0 = all)
};

// --seed s sets the data, basis, noise, sample and MCMC seeds to s, s+1,
// s+2, s+3 and s+4.
void apply_seed(ExperimentConfig& config, std::uint64_t seed);

// Every command writes its files plus manifest_<command>.json (listing each
// file with its SHA-256) into the output directory and returns the
// manifest. Commands that read a data bundle look for
// manifest_simulate.json and observations.csv.

// Ground-truth forcing, solution, observation table.
nlohmann::json cmd_simulate(const ExperimentConfig& config, const CommandOptions& opts);
// Adjoint inference on a simulate bundle: posterior, forcing moments, predictive
// report, ML estimate when defined, five-stage timing.
nlohmann::json cmd_infer(const ExperimentConfig& config, const CommandOptions& opts);
// Random-walk MH against the same data, compared with the analytic posterior.
nlohmann::json cmd_mcmc(const ExperimentConfig& config, const CommandOptions& opts);
// Sensors x features x replicates grid of held-out predictive MSE.
nlohmann::json cmd_sweep(const ExperimentConfig& config, const CommandOptions& opts);
// Grid scan of the predictive NLL over the [scan] axes.
nlohmann::json cmd_scan(const ExperimentConfig& config, const CommandOptions& opts);
// End-to-end shift-operator example.
nlohmann::json cmd_shift_demo(const ExperimentConfig& config, const CommandOptions& opts);

// Defaults of the shift example: a = 2 on [0, 10] with 200 cells, 20
// windows tiling [2, 8], noise standard deviation 0.05.
ExperimentConfig default_shift_config();

struct Bundle {
  ObservationSet train;
  ObservationSet heldout;
};
// Reads a simulate bundle and rebuilds its windows from `config`; throws
// ConfigError when the bundle was made on a different grid or layout.
Bundle load_bundle(const ExperimentConfig& config, const std::string& dir);

// <h_i, u> for a fixed set of windows, touching only their nonzero cells.
class SparseWindows {
 public:
  explicit SparseWindows(std::span<const Field> windows);
  Eigen::VectorXd apply(const Field& u) const;
  std::size_t size() const noexcept { return rows_.size(); }

 private:
  std::vector<std::vector<std::pair<std::size_t, double>>> rows_;
  double volume_ = 0.0;
};

struct McmcComparison {
  PosteriorQ analytic;
  Chain chain;
  ChainDiagnostics diagnostics;
  double proposal_scale = 0.0;
  bool tuned_in_band = false;
  Eigen::VectorXd mean;   // post-burn-in chain means
  Eigen::VectorXd sd;     // post-burn-in chain standard deviations
  Eigen::VectorXd mcse;   // sd / sqrt(ESS)
  std::size_t forward_evaluations = 0;  // tuning + chain
  double adjoint_seconds = 0.0;
  double mcmc_seconds = 0.0;
};

// The log target is the unnormalized posterior with every evaluation going
// through the forward solver; the chain starts at q = 0 (after tuning, at
// the last pilot state).
McmcComparison run_mcmc_comparison(const ExperimentConfig& config,
                                   const ObservationSet& obs, unsigned jobs = 1);

}  // namespace adjgp

#endif  // ADJGP_COMMANDS_HPP_
