#include "adjgp/features.hpp"

#include <cmath>
#include <numbers>

#include "adjgp/error.hpp"
#include "adjgp/parallel.hpp"
#include "adjgp/rng.hpp"

namespace adjgp {

void KernelParams::validate() const {
  if (!(lengthscale > 0.0) || !std::isfinite(lengthscale))
    throw ConfigError("kernel lengthscale must be positive");
  if (!(variance > 0.0) || !std::isfinite(variance))
    throw ConfigError("kernel variance must be positive");
}

double eq_kernel(std::span<const double> x, std::span<const double> xp,
                 const KernelParams& k) {
  if (x.size() != xp.size())
    throw StructuralError("eq_kernel: point dimensions differ");
  double r2 = 0.0;
  for (std::size_t a = 0; a < x.size(); ++a) {
    const double d = x[a] - xp[a];
    r2 += d * d;
  }
  return k.variance * std::exp(-r2 / (2.0 * k.lengthscale * k.lengthscale));
}

FeatureBasis::FeatureBasis(KernelParams kernel, std::uint64_t seed,
                           Eigen::MatrixXd frequencies, Eigen::VectorXd phases)
    : kernel_(kernel),
      seed_(seed),
      frequencies_(std::move(frequencies)),
      phases_(std::move(phases)) {
  kernel_.validate();
  if (phases_.size() == 0) throw ConfigError("basis needs at least 1 feature");
  if (frequencies_.rows() != phases_.size())
    throw StructuralError("basis frequency/phase counts differ");
  if (frequencies_.cols() == 0) throw ConfigError("basis dimension must be >= 1");
  amplitude_ =
      std::sqrt(2.0 * kernel_.variance / static_cast<double>(phases_.size()));
}

double FeatureBasis::feature(std::size_t m, std::span<const double> x) const {
  if (x.size() != dim())
    throw StructuralError("feature: point dimension differs from basis");
  double arg = 0.0;
  for (std::size_t a = 0; a < x.size(); ++a)
    arg += frequencies_(static_cast<Eigen::Index>(m),
                        static_cast<Eigen::Index>(a)) *
           x[a];
  return amplitude_ *
         std::cos(arg / kernel_.lengthscale +
                  phases_(static_cast<Eigen::Index>(m)));
}

Eigen::VectorXd FeatureBasis::features(std::span<const double> x) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(size()));
  for (std::size_t m = 0; m < size(); ++m)
    out(static_cast<Eigen::Index>(m)) = feature(m, x);
  return out;
}

FeatureBasis FeatureBasis::translated(std::span<const double> d) const {
  if (d.size() != dim())
    throw StructuralError("translated: offset dimension differs from basis");
  const Eigen::Map<const Eigen::VectorXd> offset(d.data(),
                                                 static_cast<Eigen::Index>(d.size()));
  Eigen::VectorXd phases =
      phases_ + frequencies_ * offset / kernel_.lengthscale;
  const double two_pi = 2.0 * std::numbers::pi;
  for (Eigen::Index m = 0; m < phases.size(); ++m) {
    phases(m) = std::fmod(phases(m), two_pi);
    if (phases(m) < 0.0) phases(m) += two_pi;
  }
  return FeatureBasis(kernel_, seed_, frequencies_, std::move(phases));
}

FeatureBasis sample_basis(std::size_t count, std::size_t dim,
                          const KernelParams& kernel, std::uint64_t seed) {
  if (count == 0) throw ConfigError("sample_basis: M must be >= 1");
  if (dim == 0) throw ConfigError("sample_basis: dim must be >= 1");
  kernel.validate();
  Eigen::MatrixXd w(static_cast<Eigen::Index>(count),
                    static_cast<Eigen::Index>(dim));
  Eigen::VectorXd b(static_cast<Eigen::Index>(count));
  for (std::size_t m = 0; m < count; ++m) {
    Rng rng = Rng::stream(seed, m);
    for (std::size_t a = 0; a < dim; ++a)
      w(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(a)) =
          rng.normal();
    b(static_cast<Eigen::Index>(m)) = 2.0 * std::numbers::pi * rng.uniform();
  }
  return FeatureBasis(kernel, seed, std::move(w), std::move(b));
}

Eigen::MatrixXd eval_basis(const FeatureBasis& basis, const Grid& grid,
                           unsigned jobs) {
  if (grid.ndim() != basis.dim())
    throw StructuralError("eval_basis: grid dimension " +
                          std::to_string(grid.ndim()) + " vs basis dimension " +
                          std::to_string(basis.dim()));
  const std::size_t d = grid.ndim();
  const std::size_t g = grid.size();
  // Cell centers, one row per axis.
  Eigen::MatrixXd centers(static_cast<Eigen::Index>(d),
                          static_cast<Eigen::Index>(g));
  std::vector<double> point(d);
  for (std::size_t k = 0; k < g; ++k) {
    grid.center_point(k, point);
    for (std::size_t a = 0; a < d; ++a)
      centers(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(k)) =
          point[a];
  }
  const double inv_l = 1.0 / basis.kernel().lengthscale;
  const double amp = basis.amplitude();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(basis.size()),
                      static_cast<Eigen::Index>(g));
  parallel_for(basis.size(), jobs, [&](std::size_t m) {
    const auto row = static_cast<Eigen::Index>(m);
    const double bm = basis.phases()(row);
    for (std::size_t k = 0; k < g; ++k) {
      double arg = 0.0;
      for (std::size_t a = 0; a < d; ++a)
        arg += basis.frequencies()(row, static_cast<Eigen::Index>(a)) *
               centers(static_cast<Eigen::Index>(a),
                       static_cast<Eigen::Index>(k));
      out(row, static_cast<Eigen::Index>(k)) = amp * std::cos(arg * inv_l + bm);
    }
  });
  return out;
}

double kernel_approx(const FeatureBasis& basis, std::span<const double> x,
                     std::span<const double> xp) {
  if (x.size() != basis.dim() || xp.size() != basis.dim())
    throw StructuralError("kernel_approx: point dimension differs from basis");
  double sum = 0.0;
  for (std::size_t m = 0; m < basis.size(); ++m)
    sum += basis.feature(m, x) * basis.feature(m, xp);
  return sum;
}

Field forcing_from_weights(const Eigen::MatrixXd& basis_matrix,
                           const Eigen::VectorXd& weights, const Grid& grid) {
  if (weights.size() != basis_matrix.rows())
    throw StructuralError("forcing_from_weights: " +
                          std::to_string(weights.size()) + " weights for " +
                          std::to_string(basis_matrix.rows()) + " features");
  if (static_cast<std::size_t>(basis_matrix.cols()) != grid.size())
    throw StructuralError("forcing_from_weights: basis matrix/grid mismatch");
  std::vector<double> values(grid.size());
  Eigen::Map<Eigen::VectorXd>(values.data(),
                              static_cast<Eigen::Index>(values.size())) =
      basis_matrix.transpose() * weights;
  return Field(grid, std::move(values));
}

Field forcing_from_weights(const FeatureBasis& basis,
                           const Eigen::VectorXd& weights, const Grid& grid,
                           unsigned jobs) {
  if (static_cast<std::size_t>(weights.size()) != basis.size())
    throw StructuralError("forcing_from_weights: " +
                          std::to_string(weights.size()) + " weights for " +
                          std::to_string(basis.size()) + " features");
  if (grid.ndim() != basis.dim())
    throw StructuralError("forcing_from_weights: grid dimension differs from basis");
  // Cell by cell, so large bases never materialize the M x G matrix.
  const std::size_t d = grid.ndim();
  const double inv_l = 1.0 / basis.kernel().lengthscale;
  const Eigen::VectorXd scaled = weights * basis.amplitude();
  std::vector<double> values(grid.size());
  parallel_for(grid.size(), jobs, [&](std::size_t k) {
    double point[3];
    std::vector<double> wide;
    std::span<double> x;
    if (d <= 3) {
      x = std::span<double>(point, d);
    } else {
      wide.resize(d);
      x = wide;
    }
    grid.center_point(k, x);
    double sum = 0.0;
    for (std::size_t m = 0; m < basis.size(); ++m) {
      const auto row = static_cast<Eigen::Index>(m);
      double arg = 0.0;
      for (std::size_t a = 0; a < d; ++a)
        arg += basis.frequencies()(row, static_cast<Eigen::Index>(a)) * x[a];
      sum += scaled(row) * std::cos(arg * inv_l + basis.phases()(row));
    }
    values[k] = sum;
  });
  return Field(grid, std::move(values));
}

std::pair<Eigen::VectorXd, Field> sample_prior_forcing(
    const FeatureBasis& basis, const Grid& grid, std::uint64_t seed,
    unsigned jobs) {
  Rng rng(seed);
  Eigen::VectorXd q(static_cast<Eigen::Index>(basis.size()));
  for (Eigen::Index m = 0; m < q.size(); ++m) q(m) = rng.normal();
  Field f = forcing_from_weights(basis, q, grid, jobs);
  return {std::move(q), std::move(f)};
}

nlohmann::json basis_to_json(const FeatureBasis& basis, bool explicit_arrays) {
  nlohmann::json j;
  j["seed"] = basis.seed();
  j["M"] = basis.size();
  j["dim"] = basis.dim();
  j["kernel"] = {{"lengthscale", basis.kernel().lengthscale},
                 {"variance", basis.kernel().variance}};
  if (explicit_arrays) {
    nlohmann::json w = nlohmann::json::array();
    for (Eigen::Index m = 0; m < basis.frequencies().rows(); ++m) {
      std::vector<double> row(basis.dim());
      for (std::size_t a = 0; a < basis.dim(); ++a)
        row[a] = basis.frequencies()(m, static_cast<Eigen::Index>(a));
      w.push_back(row);
    }
    j["frequencies"] = std::move(w);
    j["phases"] = std::vector<double>(basis.phases().data(),
                                      basis.phases().data() +
                                          basis.phases().size());
  }
  return j;
}

FeatureBasis basis_from_json(const nlohmann::json& j) {
  KernelParams k{j.at("kernel").at("lengthscale").get<double>(),
                 j.at("kernel").at("variance").get<double>()};
  const auto seed = j.at("seed").get<std::uint64_t>();
  const auto count = j.at("M").get<std::size_t>();
  const auto dim = j.at("dim").get<std::size_t>();
  if (!j.contains("frequencies")) return sample_basis(count, dim, k, seed);
  const auto& w = j.at("frequencies");
  const auto phases = j.at("phases").get<std::vector<double>>();
  if (w.size() != count || phases.size() != count)
    throw StructuralError("basis JSON: array lengths differ from M");
  Eigen::MatrixXd freq(static_cast<Eigen::Index>(count),
                       static_cast<Eigen::Index>(dim));
  Eigen::VectorXd b(static_cast<Eigen::Index>(count));
  for (std::size_t m = 0; m < count; ++m) {
    const auto row = w[m].get<std::vector<double>>();
    if (row.size() != dim)
      throw StructuralError("basis JSON: frequency row has wrong dimension");
    for (std::size_t a = 0; a < dim; ++a)
      freq(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(a)) = row[a];
    b(static_cast<Eigen::Index>(m)) = phases[m];
  }
  return FeatureBasis(k, seed, std::move(freq), std::move(b));
}

}  // namespace adjgp
