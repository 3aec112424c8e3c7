#ifndef ADJGP_FEATURES_HPP_
#define ADJGP_FEATURES_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "adjgp/fields.hpp"

namespace adjgp {

// Isotropic exponentiated-quadratic kernel parameters.
struct KernelParams {
  double lengthscale = 1.0;
  double variance = 1.0;

  void validate() const;
  friend bool operator==(const KernelParams&, const KernelParams&) = default;
};

// tau^2 * exp(-|x - x'|^2 / (2 lambda^2))
double eq_kernel(std::span<const double> x, std::span<const double> xp,
                 const KernelParams& k);

// M random Fourier features approximating the EQ kernel:
//   phi_m(x) = sqrt(2 tau^2 / M) * cos(w_m . x / lambda + b_m)
// with w_m ~ N(0, I) and b_m ~ U[0, 2 pi). Feature m is drawn from
// Rng::stream(seed, m): `dim` normals for w_m, then one uniform for b_m.
class FeatureBasis {
 public:
  FeatureBasis(KernelParams kernel, std::uint64_t seed,
               Eigen::MatrixXd frequencies, Eigen::VectorXd phases);

  std::size_t size() const noexcept { return phases_.size(); }
  std::size_t dim() const noexcept { return frequencies_.cols(); }
  const KernelParams& kernel() const noexcept { return kernel_; }
  std::uint64_t seed() const noexcept { return seed_; }
  // Row m holds w_m.
  const Eigen::MatrixXd& frequencies() const noexcept { return frequencies_; }
  const Eigen::VectorXd& phases() const noexcept { return phases_; }
  double amplitude() const noexcept { return amplitude_; }

  double feature(std::size_t m, std::span<const double> x) const;
  // phi(x) for all m.
  Eigen::VectorXd features(std::span<const double> x) const;

  // Same frequencies with every feature translated: phi'_m(x) = phi_m(x + d).
  FeatureBasis translated(std::span<const double> d) const;

 private:
  KernelParams kernel_;
  std::uint64_t seed_;
  Eigen::MatrixXd frequencies_;
  Eigen::VectorXd phases_;
  double amplitude_;
};

FeatureBasis sample_basis(std::size_t count, std::size_t dim,
                          const KernelParams& kernel, std::uint64_t seed);

// M x G matrix of phi_m evaluated at every cell center. Rows are computed
// independently, optionally on `jobs` threads; the result does not depend on
// the thread count.
Eigen::MatrixXd eval_basis(const FeatureBasis& basis, const Grid& grid,
                           unsigned jobs = 1);

double kernel_approx(const FeatureBasis& basis, std::span<const double> x,
                     std::span<const double> xp);

// sum_m q_m phi_m at every cell center, evaluated cell by cell.
Field forcing_from_weights(const FeatureBasis& basis,
                           const Eigen::VectorXd& weights, const Grid& grid,
                           unsigned jobs = 1);
// Same, reusing a precomputed eval_basis matrix.
Field forcing_from_weights(const Eigen::MatrixXd& basis_matrix,
                           const Eigen::VectorXd& weights, const Grid& grid);

// q ~ N(0, I_M) drawn from Rng(seed), and the forcing it induces.
std::pair<Eigen::VectorXd, Field> sample_prior_forcing(
    const FeatureBasis& basis, const Grid& grid, std::uint64_t seed,
    unsigned jobs = 1);

// JSON: {"seed", "M", "dim", "kernel": {"lengthscale", "variance"}} plus
// "frequencies" (M rows) and "phases" when `explicit_arrays` is set.
// Reading without explicit arrays resamples from the seed.
nlohmann::json basis_to_json(const FeatureBasis& basis, bool explicit_arrays);
FeatureBasis basis_from_json(const nlohmann::json& j);

}  // namespace adjgp

#endif  // ADJGP_FEATURES_HPP_
