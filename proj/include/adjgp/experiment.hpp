#ifndef ADJGP_EXPERIMENT_HPP_
#define ADJGP_EXPERIMENT_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adjgp/features.hpp"
#include "adjgp/fields.hpp"
#include "adjgp/inference.hpp"
#include "adjgp/ode.hpp"
#include "adjgp/pde.hpp"
#include "adjgp/shift.hpp"

namespace adjgp {

enum class SystemKind { Ode, Pde, Shift };

std::string to_string(SystemKind kind);

// Observation layout.
//
// 1-D systems (rule "tile"): `count` windows of equal length tiling
// [lo, hi) (default: the whole domain).
//
// PDE: spatial sensor squares of side `width`, each read over
// `time_windows` windows of length `time_width` centred at (j + 0.5) T / W.
//   rule "grid": count = k^2 sensors at ((i + 0.5) L / k) on each axis.
//   rule "list": explicit (x, y) centres in `points`.
// `heldout` extra sensors are placed uniformly at random (data seed) and
// read over the same time windows; for 1-D systems `heldout` windows of
// the same length are placed at random inside [lo, hi).
struct SensorLayout {
  std::string rule = "tile";
  std::size_t count = 10;
  std::vector<std::array<double, 2>> points;
  std::optional<double> lo;
  std::optional<double> hi;
  double width = 0.5;
  std::size_t time_windows = 5;
  double time_width = 1.0;
  std::size_t heldout = 10;

  friend bool operator==(const SensorLayout&, const SensorLayout&) = default;
};

// Ground-truth forcing for synthetic data. "rff": an independent RFF draw
// with `features` features from the data seed. "shared": the inference
// basis itself with weights q* drawn from the data seed, so q* is
// recoverable.
struct TruthSpec {
  std::string source = "rff";
  KernelParams kernel;
  std::size_t features = 2000;

  friend bool operator==(const TruthSpec&, const TruthSpec&) = default;
};

struct Seeds {
  std::uint64_t data = 1;
  std::uint64_t basis = 2;
  std::uint64_t noise = 3;
  std::uint64_t sample = 4;

  friend bool operator==(const Seeds&, const Seeds&) = default;
};

struct McmcSpec {
  std::size_t steps = 20000;
  std::size_t burn_in = 2000;
  double proposal_scale = 0.1;
  std::size_t batch_size = 0;
  std::uint64_t seed = 5;
  bool tune = true;

  friend bool operator==(const McmcSpec&, const McmcSpec&) = default;
};

struct SweepSpec {
  std::vector<std::size_t> sensors{1, 4, 16};
  std::vector<std::size_t> features{10, 200};
  std::size_t replicates = 10;

  friend bool operator==(const SweepSpec&, const SweepSpec&) = default;
};

struct ScanSpec {
  std::vector<ScanAxis> axes;
  std::size_t samples = kDefaultPredictiveSamples;

  friend bool operator==(const ScanSpec&, const ScanSpec&) = default;
};

struct ExperimentConfig {
  SystemKind kind = SystemKind::Ode;
  OdeParams ode;
  PdeParams pde;
  ShiftParams shift;
  double shift_lo = 0.0;
  double shift_hi = 10.0;

  std::size_t cells = 2000;  // 1-D systems
  std::size_t nt = 50, ny = 30, nx = 30;

  TruthSpec truth;
  KernelParams kernel;
  std::size_t features = 100;
  double ridge = 0.0;
  SensorLayout sensors;
  double sigma = 0.1;
  Seeds seeds;
  std::size_t predictive_samples = kDefaultPredictiveSamples;
  McmcSpec mcmc;
  SweepSpec sweep;
  ScanSpec scan;
  std::string output = "out";

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;

  // Checks every parameter against the module preconditions; throws
  // ConfigError naming the offending key.
  void validate() const;
};

// INI-style text: [section] headers and key = value lines; '#' and ';'
// start comments. Unknown sections or keys are errors.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
// Canonical text with every key; parse_config(config_to_text(c)) == c.
std::string config_to_text(const ExperimentConfig& config);
// SHA-256 of the canonical text.
std::string config_hash(const ExperimentConfig& config);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

Grid make_grid(const ExperimentConfig& config);

// Forward and adjoint solvers for the configured system, with any of the
// theta keys p0, p1, p2 (ODE), velocity_x, velocity_y, diffusivity (PDE)
// or shift (shift) overriding the configured parameters.
SystemHandles make_system(const ExperimentConfig& config, const Theta& theta = {});
// Keys accepted in theta for this config: the kernel keys plus the
// system's parameters.
std::vector<std::string> theta_keys(const ExperimentConfig& config);

struct SensorSet {
  std::vector<Field> windows;
  // One row per window: centre of the window's box, axis order of the grid.
  std::vector<std::vector<double>> centres;
  std::string rule;  // human-readable placement description
};

SensorSet training_sensors(const ExperimentConfig& config, const Grid& grid);
SensorSet heldout_sensors(const ExperimentConfig& config, const Grid& grid);

// Basis used for inference: config.features features of config.kernel from
// the basis seed.
FeatureBasis inference_basis(const ExperimentConfig& config);

struct Truth {
  Field forcing;
  std::optional<Eigen::VectorXd> weights;  // set for source = "shared"
};
Truth ground_truth(const ExperimentConfig& config, const Grid& grid,
                   unsigned jobs = 1);

struct SyntheticData {
  Truth truth;
  Field solution;
  SensorSet train;
  SensorSet heldout;
  Eigen::VectorXd noiseless;
  Eigen::VectorXd readings;
  Eigen::VectorXd heldout_noiseless;
  Eigen::VectorXd heldout_readings;
};

// Draws the truth, solves forward and observes the solution.
SyntheticData simulate(const ExperimentConfig& config, unsigned jobs = 1);
// Builds both sensor sets for `solution` and adds N(0, sigma^2) noise:
// training noise from Rng(noise seed), held-out noise from a separate
// sub-stream, so the held-out readings do not depend on the training layout.
SyntheticData observe(const ExperimentConfig& config, const Grid& grid, Truth truth,
                      Field solution);

// Observation sets built from synthetic data.
ObservationSet training_set(const SyntheticData& data, double sigma);
ObservationSet heldout_set(const SyntheticData& data, double sigma);

// The five pipeline stages with their wall times in seconds.
inline constexpr std::array<const char*, 5> kStageNames = {
    "adjoint_solves", "basis_eval", "phi_assembly", "gram", "solve"};

struct PipelineResult {
  FeatureBasis basis;
  Eigen::MatrixXd basis_matrix;
  PhiMatrix phi;
  PosteriorQ posterior;
  std::array<double, 5> seconds{};
};

// Adjoint inference on `obs` with the configured basis and system.
PipelineResult run_pipeline(const ExperimentConfig& config,
                            const ObservationSet& obs, unsigned jobs = 1);

// Largest k with P(Bin(n, 1/2) < k) <= 0.025, so [x_(k), x_(n+1-k)] is a
// distribution-free interval for the median with coverage >= 95%; 1 when
// n is too small for that coverage.
std::size_t median_interval_rank(std::size_t n);

struct MedianSummary {
  double median = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};
MedianSummary summarize_median(std::vector<double> values);

}  // namespace adjgp

#endif  // ADJGP_EXPERIMENT_HPP_
