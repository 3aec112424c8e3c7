#include "adjgp/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>

#include "adjgp/error.hpp"
#include "adjgp/rng.hpp"

namespace adjgp {

void ChainConfig::validate() const {
  if (steps == 0) throw ConfigError("MCMC needs at least one step");
  if (burn_in >= steps) throw ConfigError("MCMC burn_in must be smaller than steps");
  if (!(proposal_scale > 0.0) || !std::isfinite(proposal_scale))
    throw ConfigError("MCMC proposal_scale must be positive");
}

Eigen::MatrixXd Chain::kept(std::size_t burn_in) const {
  const auto b = static_cast<Eigen::Index>(burn_in);
  if (b >= samples.rows()) throw ConfigError("burn-in covers the whole chain");
  return samples.bottomRows(samples.rows() - b);
}

namespace {

constexpr std::size_t kStallWindow = 1000;

Chain run_chain(const LogTarget& log_target, const Eigen::VectorXd& init,
                const ChainConfig& cfg, bool stall_check) {
  const Eigen::Index m = init.size();
  if (m == 0) throw StructuralError("MCMC state is empty");
  const std::size_t batch = std::min<std::size_t>(
      cfg.batch_size == 0 ? 5 : cfg.batch_size, static_cast<std::size_t>(m));

  Chain chain;
  chain.samples.resize(static_cast<Eigen::Index>(cfg.steps), m);
  chain.log_target.resize(static_cast<Eigen::Index>(cfg.steps));
  chain.accepted.assign(cfg.steps, 0);

  Eigen::VectorXd state = init;
  double current = log_target(state);
  chain.evaluations = 1;
  if (!std::isfinite(current))
    throw NumericalError("log target is not finite at the initial state");

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(static_cast<std::size_t>(m));
  Eigen::VectorXd proposal = state;
  std::size_t accepted = 0;
  std::size_t run = 0;
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    proposal = state;
    for (std::size_t k = 0; k < batch; ++k) {
      const std::size_t pick = k + rng.below(order.size() - k);
      std::swap(order[k], order[pick]);
      proposal(static_cast<Eigen::Index>(order[k])) += cfg.proposal_scale * rng.normal();
    }
    const double candidate = log_target(proposal);
    ++chain.evaluations;
    const double log_u = std::log(1.0 - rng.uniform());
    if (std::isfinite(candidate) && log_u < candidate - current) {
      state = proposal;
      current = candidate;
      chain.accepted[s] = 1;
      ++accepted;
      run = 0;
    } else if (++run >= kStallWindow && stall_check) {
      throw NumericalError(
          "MCMC rejected " + std::to_string(kStallWindow) +
          " proposals in a row; try a smaller proposal_scale");
    }
    chain.samples.row(static_cast<Eigen::Index>(s)) = state.transpose();
    chain.log_target(static_cast<Eigen::Index>(s)) = current;
  }
  chain.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(cfg.steps);
  return chain;
}

}  // namespace

Chain rw_mh(const LogTarget& log_target, const Eigen::VectorXd& init,
            const ChainConfig& cfg) {
  cfg.validate();
  return run_chain(log_target, init, cfg, true);
}

Tuning tune_proposal_scale(const LogTarget& log_target,
                           const Eigen::VectorXd& init, const ChainConfig& cfg,
                           std::size_t pilot_steps, std::size_t max_rounds) {
  if (pilot_steps == 0 || max_rounds == 0)
    throw ConfigError("tuning needs pilot steps and rounds");
  Tuning t;
  t.proposal_scale = cfg.proposal_scale;
  t.state = init;
  for (std::size_t round = 0; round < max_rounds; ++round) {
    ChainConfig pilot = cfg;
    pilot.steps = pilot_steps;
    pilot.burn_in = 0;
    pilot.proposal_scale = t.proposal_scale;
    pilot.seed = splitmix64(cfg.seed ^ (0x70696c6f74ULL + round));
    pilot.validate();
    const Chain c = run_chain(log_target, t.state, pilot, false);
    t.evaluations += c.evaluations;
    t.acceptance_rate = c.acceptance_rate;
    t.state = c.samples.row(c.samples.rows() - 1).transpose();
    if (c.acceptance_rate >= 0.25 && c.acceptance_rate <= 0.40) {
      t.in_band = true;
      return t;
    }
    // Multiplicative correction; clamp so empty or saturated pilots still move.
    const double rate = std::clamp(c.acceptance_rate, 0.01, 0.99);
    t.proposal_scale *= std::clamp(std::exp(3.0 * (rate - 0.325)), 0.2, 3.0);
  }
  return t;
}

double ChainDiagnostics::max_rhat() const {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < rhat.size(); ++k) {
    if (std::isnan(rhat(k))) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, rhat(k));
  }
  return worst;
}

ChainDiagnostics chain_diagnostics(const Eigen::MatrixXd& draws) {
  const Eigen::Index n = draws.rows();
  const Eigen::Index m = draws.cols();
  if (n < 4) throw ConfigError("chain diagnostics need at least 4 draws");
  ChainDiagnostics d;
  d.ess.resize(m);
  d.rhat.resize(m);
  d.degenerate.assign(static_cast<std::size_t>(m), 0);

  const auto b = static_cast<Eigen::Index>(std::floor(std::sqrt(static_cast<double>(n))));
  const Eigen::Index a = n / b;
  const Eigen::Index half = n / 2;
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::VectorXd x = draws.col(k);
    const double mean = x.mean();
    const double var = (x.array() - mean).square().sum() / static_cast<double>(n - 1);
    if (!(var > 0.0)) {
      d.ess(k) = 0.0;
      d.rhat(k) = 1.0;
      d.degenerate[static_cast<std::size_t>(k)] = 1;
      continue;
    }
    // Batch means over the first a*b draws.
    Eigen::VectorXd means(a);
    for (Eigen::Index j = 0; j < a; ++j) means(j) = x.segment(j * b, b).mean();
    const double grand = means.mean();
    const double batch_var =
        (means.array() - grand).square().sum() / static_cast<double>(a - 1);
    const double sigma2 = static_cast<double>(b) * batch_var;
    d.ess(k) = sigma2 > 0.0 ? static_cast<double>(n) * var / sigma2
                            : static_cast<double>(n);

    // Split-R-hat with two chains of length `half`.
    const Eigen::VectorXd c1 = x.head(half);
    const Eigen::VectorXd c2 = x.segment(half, half);
    const double m1 = c1.mean(), m2 = c2.mean();
    const double hn = static_cast<double>(half);
    const double w1 = (c1.array() - m1).square().sum() / (hn - 1.0);
    const double w2 = (c2.array() - m2).square().sum() / (hn - 1.0);
    const double w = 0.5 * (w1 + w2);
    const double mm = 0.5 * (m1 + m2);
    const double between = hn * ((m1 - mm) * (m1 - mm) + (m2 - mm) * (m2 - mm));
    if (!(w > 0.0)) {
      d.rhat(k) = std::numeric_limits<double>::infinity();
      continue;
    }
    const double var_plus = (hn - 1.0) / hn * w + between / hn;
    d.rhat(k) = std::sqrt(var_plus / w);
  }
  return d;
}

void write_chain_csv(const std::string& path, const Chain& chain) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  out << "step";
  for (Eigen::Index k = 0; k < chain.samples.cols(); ++k) out << ",q" << k;
  out << ",log_target,accepted\n" << std::setprecision(17);
  for (Eigen::Index s = 0; s < chain.samples.rows(); ++s) {
    out << s;
    for (Eigen::Index k = 0; k < chain.samples.cols(); ++k)
      out << ',' << chain.samples(s, k);
    out << ',' << chain.log_target(s) << ','
        << static_cast<int>(chain.accepted[static_cast<std::size_t>(s)]) << '\n';
  }
}

}  // namespace adjgp
