#include "adjgp/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <optional>
#include <sstream>

#include "adjgp/error.hpp"
#include "adjgp/log.hpp"
#include "adjgp/parallel.hpp"
#include "adjgp/rng.hpp"

namespace adjgp {

void ObservationSet::validate() const {
  if (windows.empty()) throw ConfigError("observation set is empty");
  if (static_cast<std::size_t>(readings.size()) != windows.size())
    throw StructuralError("observation set: " + std::to_string(readings.size()) +
                          " readings for " + std::to_string(windows.size()) +
                          " windows");
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw ConfigError("observation noise sigma must be positive");
  for (Eigen::Index i = 0; i < readings.size(); ++i)
    if (!std::isfinite(readings(i)))
      throw ConfigError("observation " + std::to_string(i) + " is not finite");
}

Eigen::VectorXd apply_windows(std::span<const Field> windows, const Field& u) {
  Eigen::VectorXd z(static_cast<Eigen::Index>(windows.size()));
  for (std::size_t i = 0; i < windows.size(); ++i)
    z(static_cast<Eigen::Index>(i)) = inner_product(windows[i], u);
  return z;
}

std::vector<Field> solve_adjoint_bank(const LinearSolve& adjoint,
                                      std::span<const Field> windows,
                                      unsigned jobs) {
  std::vector<std::optional<Field>> slots(windows.size());
  parallel_for(windows.size(), jobs,
               [&](std::size_t i) { slots[i].emplace(adjoint(windows[i])); });
  std::vector<Field> out;
  out.reserve(windows.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

PhiMatrix assemble_phi(std::span<const Field> adjoints,
                       const Eigen::MatrixXd& basis_matrix, const Grid& grid,
                       unsigned jobs) {
  if (static_cast<std::size_t>(basis_matrix.cols()) != grid.size())
    throw StructuralError("assemble_phi: basis matrix does not match grid");
  for (const auto& v : adjoints)
    if (!(v.grid() == grid))
      throw StructuralError("assemble_phi: adjoint field on a different grid");
  const auto n = static_cast<Eigen::Index>(adjoints.size());
  const Eigen::Index m = basis_matrix.rows();
  const auto g = static_cast<Eigen::Index>(grid.size());
  const double volume = grid.cell_volume();
  PhiMatrix phi;
  phi.entries.resize(n, m);
  parallel_for(adjoints.size(), jobs, [&](std::size_t i) {
    const std::vector<double> v = adjoints[i].masked_values();
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(m);
    for (Eigen::Index k = 0; k < g; ++k) {
      const double vk = v[static_cast<std::size_t>(k)];
      if (vk == 0.0) continue;
      acc += basis_matrix.col(k) * vk;
    }
    phi.entries.row(static_cast<Eigen::Index>(i)) = (acc * volume).transpose();
  });
  return phi;
}

PhiMatrix assemble_phi(std::span<const Field> adjoints,
                       const FeatureBasis& basis, const Grid& grid,
                       unsigned jobs) {
  PhiMatrix phi = assemble_phi(adjoints, eval_basis(basis, grid, jobs), grid, jobs);
  phi.basis_seed = basis.seed();
  return phi;
}

void write_phi_csv(const std::string& path, const PhiMatrix& phi) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  out << "row";
  for (Eigen::Index m = 0; m < phi.entries.cols(); ++m) out << ",phi" << m;
  out << '\n' << std::setprecision(17);
  for (Eigen::Index i = 0; i < phi.entries.rows(); ++i) {
    out << i;
    for (Eigen::Index m = 0; m < phi.entries.cols(); ++m)
      out << ',' << phi.entries(i, m);
    out << '\n';
  }
}

MlEstimate ml_estimate(const Eigen::MatrixXd& phi, const Eigen::VectorXd& z,
                       double sigma, double ridge) {
  if (phi.rows() != z.size())
    throw StructuralError("ml_estimate: Phi rows differ from readings");
  if (ridge < 0.0) throw ConfigError("ridge weight must be non-negative");
  if (ridge == 0.0 && phi.rows() < phi.cols())
    throw NumericalError("ml_estimate: n = " + std::to_string(phi.rows()) +
                         " < M = " + std::to_string(phi.cols()) +
                         "; the least-squares problem is rank deficient, use "
                         "the Bayesian posterior instead");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(phi, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd s = svd.singularValues();
  Eigen::VectorXd s2 = s.array().square();
  if (s2.size() < phi.cols()) {
    // Wide Phi with ridge: missing singular values are zero.
    Eigen::VectorXd padded = Eigen::VectorXd::Zero(phi.cols());
    padded.head(s2.size()) = s2;
    s2 = padded;
  }
  const double top = s2.maxCoeff() + ridge;
  const double bottom = s2.minCoeff() + ridge;
  MlEstimate est;
  est.condition = bottom > 0.0 ? top / bottom : std::numeric_limits<double>::infinity();
  if (!(est.condition <= 1e12))
    throw NumericalError("ml_estimate: Phi^T Phi is rank deficient (condition " +
                         std::to_string(est.condition) +
                         "); use the Bayesian posterior instead");
  const Eigen::MatrixXd& V = svd.matrixV();
  const Eigen::MatrixXd& U = svd.matrixU();
  const Eigen::Index r = s.size();
  Eigen::VectorXd gain(r), var(r);
  for (Eigen::Index k = 0; k < r; ++k) {
    gain(k) = s(k) / (s(k) * s(k) + ridge);
    var(k) = s(k) * s(k) / ((s(k) * s(k) + ridge) * (s(k) * s(k) + ridge));
  }
  est.weights = V * gain.asDiagonal() * (U.transpose() * z);
  est.covariance = sigma * sigma * V * var.asDiagonal() * V.transpose();
  return est;
}

GaussianPrior GaussianPrior::standard(std::size_t m) {
  const auto k = static_cast<Eigen::Index>(m);
  return {Eigen::VectorXd::Zero(k), Eigen::MatrixXd::Identity(k, k)};
}

Eigen::VectorXd PosteriorQ::correlate(const Eigen::VectorXd& eta) const {
  return precision_factor.transpose().triangularView<Eigen::Upper>().solve(eta);
}

Eigen::MatrixXd PosteriorQ::covariance_cholesky() const {
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success)
    throw NumericalError("posterior covariance is not numerically positive definite");
  return llt.matrixL();
}

namespace {

double condition_estimate(const Eigen::MatrixXd& sym) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();
  const double lo = ev.minCoeff();
  return lo > 0.0 ? ev.maxCoeff() / lo : std::numeric_limits<double>::infinity();
}

}  // namespace

NormalEquations normal_equations(const Eigen::MatrixXd& phi,
                                 const Eigen::VectorXd& z) {
  if (phi.rows() != z.size())
    throw StructuralError("normal_equations: Phi rows differ from readings");
  NormalEquations ne;
  const Eigen::Index m = phi.cols();
  ne.gram = Eigen::MatrixXd::Zero(m, m);
  ne.gram.selfadjointView<Eigen::Lower>().rankUpdate(phi.transpose());
  ne.gram.triangularView<Eigen::StrictlyUpper>() =
      ne.gram.transpose().triangularView<Eigen::StrictlyUpper>();
  ne.projection = phi.transpose() * z;
  return ne;
}

PosteriorQ posterior_q(const Eigen::MatrixXd& phi, const Eigen::VectorXd& z,
                       double sigma, const GaussianPrior& prior) {
  return posterior_q(normal_equations(phi, z), sigma, prior);
}

PosteriorQ posterior_q(const NormalEquations& normal, double sigma,
                       const GaussianPrior& prior) {
  const Eigen::Index m = normal.gram.cols();
  if (normal.gram.rows() != m || normal.projection.size() != m)
    throw StructuralError("posterior_q: malformed normal equations");
  if (prior.mean.size() != m || prior.covariance.rows() != m ||
      prior.covariance.cols() != m)
    throw StructuralError("posterior_q: prior dimension differs from Phi columns");
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw ConfigError("posterior_q: sigma must be positive");

  const bool identity_prior =
      prior.covariance == Eigen::MatrixXd::Identity(m, m);
  Eigen::MatrixXd prior_precision;
  if (identity_prior) {
    prior_precision = Eigen::MatrixXd::Identity(m, m);
  } else {
    Eigen::LLT<Eigen::MatrixXd> prior_llt(prior.covariance);
    if (prior_llt.info() != Eigen::Success)
      throw NumericalError("prior covariance is not positive definite");
    prior_precision = prior_llt.solve(Eigen::MatrixXd::Identity(m, m));
    prior_precision = 0.5 * (prior_precision + prior_precision.transpose());
  }
  const double inv_var = 1.0 / (sigma * sigma);
  const Eigen::MatrixXd precision = prior_precision + inv_var * normal.gram;
  const Eigen::VectorXd rhs =
      inv_var * normal.projection + prior_precision * prior.mean;

  const double scale = precision.diagonal().cwiseAbs().maxCoeff();
  const double jitters[] = {0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6};
  for (double j : jitters) {
    Eigen::MatrixXd trial = precision;
    trial.diagonal().array() += j * scale;
    Eigen::LLT<Eigen::MatrixXd> llt(trial);
    if (llt.info() != Eigen::Success) continue;
    const Eigen::MatrixXd L = llt.matrixL();
    if ((L.diagonal().array() <= 0.0).any()) continue;
    PosteriorQ post;
    post.precision_factor = L;
    post.mean = llt.solve(rhs);
    Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(m, m));
    post.covariance = 0.5 * (cov + cov.transpose());
    post.prior = prior;
    post.jitter = j * scale;
    if (j > 0.0) {
      std::ostringstream msg;
      msg << "posterior precision needed jitter " << post.jitter;
      warn(msg.str());
    }
    return post;
  }
  std::ostringstream msg;
  msg << "posterior precision is not positive definite even with jitter 1e-6 "
         "x max diagonal; condition estimate "
      << condition_estimate(precision);
  throw NumericalError(msg.str());
}

ForcingMoments posterior_forcing(const PosteriorQ& post,
                                 const Eigen::MatrixXd& basis_matrix,
                                 const Grid& grid) {
  if (basis_matrix.rows() != post.mean.size())
    throw StructuralError("posterior_forcing: basis size differs from posterior");
  Field mean = forcing_from_weights(basis_matrix, post.mean, grid);
  // phi^T Sigma phi = |R^-1 phi|^2
  const Eigen::MatrixXd whitened =
      post.precision_factor.triangularView<Eigen::Lower>().solve(basis_matrix);
  std::vector<double> var(grid.size());
  for (Eigen::Index k = 0; k < whitened.cols(); ++k)
    var[static_cast<std::size_t>(k)] = whitened.col(k).squaredNorm();
  return {std::move(mean), Field(grid, std::move(var))};
}

ForcingMoments posterior_forcing(const PosteriorQ& post,
                                 const FeatureBasis& basis, const Grid& grid) {
  return posterior_forcing(post, eval_basis(basis, grid), grid);
}

Eigen::MatrixXd sample_posterior_weights(const PosteriorQ& post,
                                         std::size_t count, std::uint64_t seed) {
  const Eigen::Index m = post.mean.size();
  Eigen::MatrixXd out(m, static_cast<Eigen::Index>(count));
  Rng rng(seed);
  Eigen::VectorXd eta(m);
  for (std::size_t s = 0; s < count; ++s) {
    for (Eigen::Index k = 0; k < m; ++k) eta(k) = rng.normal();
    out.col(static_cast<Eigen::Index>(s)) = post.mean + post.correlate(eta);
  }
  return out;
}

std::vector<Field> sample_posterior_forcing(const PosteriorQ& post,
                                            const Eigen::MatrixXd& basis_matrix,
                                            const Grid& grid, std::size_t count,
                                            std::uint64_t seed) {
  const Eigen::MatrixXd q = sample_posterior_weights(post, count, seed);
  std::vector<Field> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s)
    out.push_back(forcing_from_weights(basis_matrix, q.col(static_cast<Eigen::Index>(s)), grid));
  return out;
}

std::vector<Field> sample_posterior_forcing(const PosteriorQ& post,
                                            const FeatureBasis& basis,
                                            const Grid& grid, std::size_t count,
                                            std::uint64_t seed) {
  if (count == 0) return {};
  return sample_posterior_forcing(post, eval_basis(basis, grid), grid, count, seed);
}

double predictive_mse(const PosteriorQ& post,
                      const Eigen::MatrixXd& basis_matrix, const Grid& grid,
                      const LinearSolve& forward, const ObservationSet& heldout,
                      std::size_t samples, std::uint64_t seed, unsigned jobs) {
  heldout.validate();
  if (samples == 0) throw ConfigError("predictive_mse needs at least one sample");
  const Eigen::MatrixXd q = sample_posterior_weights(post, samples, seed);
  std::vector<double> per_sample(samples);
  parallel_for(samples, jobs, [&](std::size_t s) {
    const Field f =
        forcing_from_weights(basis_matrix, q.col(static_cast<Eigen::Index>(s)), grid);
    const Field u = forward(f);
    const Eigen::VectorXd pred = apply_windows(heldout.windows, u);
    per_sample[s] = (heldout.readings - pred).squaredNorm();
  });
  double total = 0.0;
  for (double e : per_sample) total += e;
  return total / (static_cast<double>(samples) * static_cast<double>(heldout.size()));
}

MisspecificationCheck check_misspecification(const Eigen::MatrixXd& phi,
                                             const Eigen::VectorXd& z,
                                             double sigma,
                                             const PosteriorQ& post) {
  MisspecificationCheck out;
  const auto n = static_cast<double>(phi.rows());
  const auto m = static_cast<double>(phi.cols());
  out.standardized_residual = (z - phi * post.mean).norm() / sigma;
  out.threshold = 3.0 * std::sqrt(n);
  out.fired = m < n / 2.0 && out.standardized_residual > out.threshold;
  if (out.fired) {
    std::ostringstream msg;
    msg << "standardized residual " << out.standardized_residual << " exceeds "
        << out.threshold << " with only M = " << phi.cols()
        << " features for n = " << phi.rows()
        << " observations; the truncated model looks misspecified, rerun with "
           "a larger M and compare posteriors";
    warn(msg.str());
  }
  return out;
}

nlohmann::json posterior_to_json(const PosteriorQ& post,
                                 std::uint64_t basis_seed,
                                 const std::string& config_hash) {
  auto to_rows = [](const Eigen::MatrixXd& a) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      std::vector<double> r(static_cast<std::size_t>(a.cols()));
      for (Eigen::Index j = 0; j < a.cols(); ++j) r[static_cast<std::size_t>(j)] = a(i, j);
      rows.push_back(std::move(r));
    }
    return rows;
  };
  nlohmann::json j;
  j["M"] = post.mean.size();
  j["mean"] = std::vector<double>(post.mean.data(), post.mean.data() + post.mean.size());
  j["covariance_cholesky"] = to_rows(post.covariance_cholesky());
  j["jitter"] = post.jitter;
  j["basis_seed"] = basis_seed;
  j["config_hash"] = config_hash;
  return j;
}

// ---------------------------------------------------------------------------

double nll_score(const Theta& theta, const ObservationSet& data,
                 const SystemFactory& make_system, const ScoreBudget& budget) {
  data.validate();
  KernelParams kernel = budget.kernel;
  if (auto it = theta.find("lengthscale"); it != theta.end()) kernel.lengthscale = it->second;
  if (auto it = theta.find("variance"); it != theta.end()) kernel.variance = it->second;
  kernel.validate();
  const double sigma = std::max(data.sigma, kSigmaFloor);

  auto describe = [&theta] {
    std::ostringstream s;
    s << "theta{";
    bool first = true;
    for (const auto& [k, v] : theta) {
      s << (first ? "" : ", ") << k << '=' << v;
      first = false;
    }
    s << '}';
    return s.str();
  };

  try {
    const SystemHandles system = make_system(theta);
    const Grid& grid = data.windows.front().grid();
    const FeatureBasis basis =
        sample_basis(budget.features, grid.ndim(), kernel, budget.basis_seed);
    const Eigen::MatrixXd basis_matrix = eval_basis(basis, grid, budget.jobs);
    const std::vector<Field> adjoints =
        solve_adjoint_bank(system.adjoint, data.windows, budget.jobs);
    const PhiMatrix phi = assemble_phi(adjoints, basis_matrix, grid, budget.jobs);
    const PosteriorQ post =
        posterior_q(phi.entries, data.readings, sigma, GaussianPrior::standard(budget.features));

    const std::size_t s_count = std::max<std::size_t>(budget.samples, 2);
    const Eigen::MatrixXd q = sample_posterior_weights(post, s_count, budget.sample_seed);
    const auto n = static_cast<Eigen::Index>(data.size());
    Eigen::MatrixXd pred(n, static_cast<Eigen::Index>(s_count));
    parallel_for(s_count, budget.jobs, [&](std::size_t s) {
      const auto col = static_cast<Eigen::Index>(s);
      const Field u = system.forward(forcing_from_weights(basis_matrix, q.col(col), grid));
      pred.col(col) = apply_windows(data.windows, u);
    });
    double nll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mean = pred.row(i).mean();
      const double var = (pred.row(i).array() - mean).square().sum() /
                         static_cast<double>(s_count - 1);
      const double total = var + sigma * sigma;
      const double r = data.readings(i) - mean;
      nll += 0.5 * std::log(2.0 * std::numbers::pi * total) + 0.5 * r * r / total;
    }
    return nll;
  } catch (const SolverError& e) {
    throw SolverError(e.detail() + " at " + describe(), e.step());
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(e.what()) + " at " + describe());
  } catch (const NumericalError& e) {
    throw NumericalError(std::string(e.what()) + " at " + describe());
  }
}

std::vector<double> ScanAxis::values() const {
  if (steps == 0) throw ConfigError("scan axis " + name + " needs steps >= 1");
  if (steps == 1) return {lo};
  if (log_spaced && !(lo > 0.0 && hi > 0.0))
    throw ConfigError("log-spaced scan axis " + name + " needs positive bounds");
  std::vector<double> out(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(steps - 1);
    out[k] = log_spaced ? std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo)))
                        : lo + t * (hi - lo);
  }
  out.back() = hi;
  return out;
}

std::vector<ScanResult> grid_scan(
    std::span<const ScanAxis> axes,
    const std::function<double(const Theta&)>& score) {
  if (axes.empty()) throw ConfigError("grid_scan needs at least one axis");
  std::vector<std::vector<double>> lattice;
  for (const auto& a : axes) lattice.push_back(a.values());
  std::vector<ScanResult> results;
  std::vector<std::size_t> index(axes.size(), 0);
  for (;;) {
    Theta theta;
    for (std::size_t a = 0; a < axes.size(); ++a)
      theta[axes[a].name] = lattice[a][index[a]];
    results.push_back({theta, score(theta)});
    std::size_t a = axes.size();
    bool done = true;
    while (a-- > 0) {
      if (++index[a] < lattice[a].size()) {
        done = false;
        break;
      }
      index[a] = 0;
    }
    if (done) break;
  }
  std::stable_sort(results.begin(), results.end(),
                   [](const ScanResult& x, const ScanResult& y) {
                     if (x.nll != y.nll) return x.nll < y.nll;
                     return x.theta < y.theta;
                   });
  return results;
}

}  // namespace adjgp
