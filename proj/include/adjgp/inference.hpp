#ifndef ADJGP_INFERENCE_HPP_
#define ADJGP_INFERENCE_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adjgp/features.hpp"
#include "adjgp/fields.hpp"

namespace adjgp {

// A forward or adjoint solve: maps a right-hand side field to a solution on
// the same grid.
using LinearSolve = std::function<Field(const Field&)>;

// n observation functionals h_i, their readings z and the noise scale.
struct ObservationSet {
  std::vector<Field> windows;
  Eigen::VectorXd readings;
  double sigma = 1.0;

  std::size_t size() const noexcept { return windows.size(); }
  void validate() const;
};

// Noiseless readings <h_i, u>.
Eigen::VectorXd apply_windows(std::span<const Field> windows, const Field& u);

// The adjoint bank: v_i solving L* v_i = h_i, computed on `jobs` threads.
std::vector<Field> solve_adjoint_bank(const LinearSolve& adjoint,
                                      std::span<const Field> windows,
                                      unsigned jobs = 1);

struct PhiMatrix {
  Eigen::MatrixXd entries;  // n x M
  std::uint64_t basis_seed = 0;
  std::string solver;
};

// [Phi]_im = <v_i, phi_m>. Each row is summed over cells in flat order
// exactly like inner_product, so the result is bit-identical for any
// `jobs`.
PhiMatrix assemble_phi(std::span<const Field> adjoints,
                       const Eigen::MatrixXd& basis_matrix, const Grid& grid,
                       unsigned jobs = 1);
PhiMatrix assemble_phi(std::span<const Field> adjoints,
                       const FeatureBasis& basis, const Grid& grid,
                       unsigned jobs = 1);

void write_phi_csv(const std::string& path, const PhiMatrix& phi);

struct MlEstimate {
  Eigen::VectorXd weights;
  Eigen::MatrixXd covariance;  // sigma^2 (Phi^T Phi + ridge I)^-1 Phi^T Phi (...)^-1
  double condition = 0.0;      // of Phi^T Phi + ridge I
};

// Least squares through a thin SVD of Phi. Throws NumericalError when
// n < M or cond(Phi^T Phi + ridge I) > 1e12.
MlEstimate ml_estimate(const Eigen::MatrixXd& phi, const Eigen::VectorXd& z,
                       double sigma, double ridge = 0.0);

struct GaussianPrior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;

  static GaussianPrior standard(std::size_t m);
};

// Gaussian posterior over the feature weights.
struct PosteriorQ {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  // Lower Cholesky factor R of the precision sigma^-2 Phi^T Phi + Sigma0^-1
  // (including any jitter that was needed).
  Eigen::MatrixXd precision_factor;
  GaussianPrior prior;
  double jitter = 0.0;

  std::size_t size() const noexcept { return static_cast<std::size_t>(mean.size()); }
  // Solves R^T x = eta, so mean + x ~ N(mean, covariance) for eta ~ N(0, I).
  Eigen::VectorXd correlate(const Eigen::VectorXd& eta) const;
  // Lower Cholesky factor of `covariance`.
  Eigen::MatrixXd covariance_cholesky() const;
};

// Phi^T Phi and Phi^T z.
struct NormalEquations {
  Eigen::MatrixXd gram;
  Eigen::VectorXd projection;
};
NormalEquations normal_equations(const Eigen::MatrixXd& phi,
                                 const Eigen::VectorXd& z);

// Conjugate update in precision form. The precision is factored with
// Cholesky; on failure a jitter of 1e-10, 1e-9, ..., 1e-6 times its largest
// diagonal entry is added before giving up with NumericalError.
PosteriorQ posterior_q(const Eigen::MatrixXd& phi, const Eigen::VectorXd& z,
                       double sigma, const GaussianPrior& prior);
PosteriorQ posterior_q(const NormalEquations& normal, double sigma,
                       const GaussianPrior& prior);

struct ForcingMoments {
  Field mean;
  Field variance;
};

// Pointwise posterior mean and variance phi(x)^T Sigma_n phi(x).
ForcingMoments posterior_forcing(const PosteriorQ& post,
                                 const Eigen::MatrixXd& basis_matrix,
                                 const Grid& grid);
ForcingMoments posterior_forcing(const PosteriorQ& post,
                                 const FeatureBasis& basis, const Grid& grid);

// `count` weight draws mean + R^-T eta, one column each; eta is read from
// Rng(seed) column by column.
Eigen::MatrixXd sample_posterior_weights(const PosteriorQ& post,
                                         std::size_t count, std::uint64_t seed);

std::vector<Field> sample_posterior_forcing(const PosteriorQ& post,
                                            const Eigen::MatrixXd& basis_matrix,
                                            const Grid& grid, std::size_t count,
                                            std::uint64_t seed);
std::vector<Field> sample_posterior_forcing(const PosteriorQ& post,
                                            const FeatureBasis& basis,
                                            const Grid& grid, std::size_t count,
                                            std::uint64_t seed);

inline constexpr std::size_t kDefaultPredictiveSamples = 100;

// Monte Carlo posterior predictive MSE on held-out data: each weight draw
// becomes a forcing, is pushed through `forward`, and is read by the
// held-out functionals; squared errors against the held-out readings are
// averaged over draws and observations.
double predictive_mse(const PosteriorQ& post,
                      const Eigen::MatrixXd& basis_matrix, const Grid& grid,
                      const LinearSolve& forward, const ObservationSet& heldout,
                      std::size_t samples, std::uint64_t seed, unsigned jobs = 1);

struct MisspecificationCheck {
  double standardized_residual = 0.0;  // |z - Phi mu_n| / sigma
  double threshold = 0.0;              // 3 sqrt(n)
  bool fired = false;
};

// Fires (and emits a warning) when M < n/2 and the standardized residual
// exceeds 3 sqrt(n).
MisspecificationCheck check_misspecification(const Eigen::MatrixXd& phi,
                                             const Eigen::VectorXd& z,
                                             double sigma,
                                             const PosteriorQ& post);

nlohmann::json posterior_to_json(const PosteriorQ& post,
                                 std::uint64_t basis_seed,
                                 const std::string& config_hash);

// ---------------------------------------------------------------------------
// Hyperparameter scoring.

// Named hyperparameters: "lengthscale", "variance" and any system
// parameter understood by the SystemFactory.
using Theta = std::map<std::string, double>;

struct SystemHandles {
  LinearSolve forward;
  LinearSolve adjoint;
};
using SystemFactory = std::function<SystemHandles(const Theta&)>;

struct ScoreBudget {
  std::size_t features = 100;
  std::size_t samples = kDefaultPredictiveSamples;
  KernelParams kernel;  // used for entries theta does not set
  std::uint64_t basis_seed = 1;
  std::uint64_t sample_seed = 2;
  unsigned jobs = 1;
};

inline constexpr double kSigmaFloor = 1e-6;

// Posterior predictive negative log-likelihood of the training readings.
// Predictive draws are pushed through the forward solver; each reading is
// scored under a Gaussian with the draws' mean and variance plus sigma^2,
// with sigma clamped below at kSigmaFloor.
double nll_score(const Theta& theta, const ObservationSet& data,
                 const SystemFactory& make_system, const ScoreBudget& budget);

struct ScanAxis {
  std::string name;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t steps = 1;
  bool log_spaced = false;

  std::vector<double> values() const;
  friend bool operator==(const ScanAxis&, const ScanAxis&) = default;
};

struct ScanResult {
  Theta theta;
  double nll = 0.0;
};

// Exhaustive lattice over `axes`, sorted ascending by score; ties broken by
// lexicographic theta.
std::vector<ScanResult> grid_scan(
    std::span<const ScanAxis> axes,
    const std::function<double(const Theta&)>& score);

}  // namespace adjgp

#endif  // ADJGP_INFERENCE_HPP_
