#ifndef ADJGP_MCMC_HPP_
#define ADJGP_MCMC_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace adjgp {

using LogTarget = std::function<double(const Eigen::VectorXd&)>;

struct ChainConfig {
  std::size_t steps = 20000;
  std::size_t burn_in = 2000;
  double proposal_scale = 0.1;
  std::uint64_t seed = 1;
  // Coordinates perturbed per proposal; 0 means min(M, 5).
  std::size_t batch_size = 0;

  void validate() const;
};

struct Chain {
  Eigen::MatrixXd samples;  // steps x M, the state after each step
  Eigen::VectorXd log_target;
  std::vector<std::uint8_t> accepted;
  double acceptance_rate = 0.0;
  // Number of log-target calls, including the one at the initial state.
  std::size_t evaluations = 0;

  // Rows from `burn_in` on.
  Eigen::MatrixXd kept(std::size_t burn_in) const;
};

// Random-walk Metropolis-Hastings. Each step draws a batch of distinct
// coordinates uniformly at random and perturbs them with N(0, scale^2)
// noise. Throws NumericalError when log_target(init) is not finite, and
// when 1000 consecutive proposals are all rejected.
Chain rw_mh(const LogTarget& log_target, const Eigen::VectorXd& init,
            const ChainConfig& cfg);

struct Tuning {
  double proposal_scale = 0.0;
  double acceptance_rate = 0.0;
  Eigen::VectorXd state;  // last state of the final pilot run
  std::size_t evaluations = 0;
  bool in_band = false;
};

// Pilot runs of `pilot_steps` that rescale the proposal until the
// acceptance rate lands in [0.25, 0.40] or `max_rounds` runs are spent.
// Each pilot starts where the previous one ended.
Tuning tune_proposal_scale(const LogTarget& log_target,
                           const Eigen::VectorXd& init, const ChainConfig& cfg,
                           std::size_t pilot_steps = 1000,
                           std::size_t max_rounds = 30);

struct ChainDiagnostics {
  Eigen::VectorXd ess;    // batch-means effective sample size per coordinate
  Eigen::VectorXd rhat;   // split-R-hat per coordinate
  std::vector<std::uint8_t> degenerate;  // coordinate never moved
  double max_rhat() const;
  bool converged() const { return max_rhat() <= 1.05; }
};

// Diagnostics of a single post-burn-in chain (rows are draws). ESS uses
// batches of floor(sqrt(N)) draws; split-R-hat compares the two halves.
ChainDiagnostics chain_diagnostics(const Eigen::MatrixXd& draws);

// CSV: step,q0,...,log_target,accepted
void write_chain_csv(const std::string& path, const Chain& chain);

}  // namespace adjgp

#endif  // ADJGP_MCMC_HPP_
