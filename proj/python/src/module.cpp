#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "adjgp/commands.hpp"
#include "adjgp/error.hpp"
#include "adjgp/experiment.hpp"
#include "adjgp/features.hpp"
#include "adjgp/inference.hpp"
#include "adjgp/ode.hpp"
#include "adjgp/pde.hpp"
#include "adjgp/shift.hpp"

namespace py = pybind11;
using namespace adjgp;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Field to_field(const Grid& grid, const Array& a) {
  if (static_cast<std::size_t>(a.size()) != grid.size())
    throw StructuralError("array has " + std::to_string(a.size()) + " values, grid has " +
                          std::to_string(grid.size()) + " cells");
  return Field(grid, std::vector<double>(a.data(), a.data() + a.size()));
}

// Undefined cells come back as NaN.
Array to_array(const Field& f) {
  const Grid& g = f.grid();
  std::vector<py::ssize_t> shape;
  for (std::size_t a = 0; a < g.ndim(); ++a) shape.push_back(py::ssize_t(g.dims()[a]));
  Array out(shape);
  double* p = out.mutable_data();
  for (std::size_t k = 0; k < f.size(); ++k) p[k] = f.defined(k) ? f[k] : std::nan("");
  return out;
}

Grid pde_grid_for(const PdeParams& p, const Array& a) {
  if (a.ndim() != 3) throw StructuralError("PDE fields are (nt, ny, nx) arrays");
  return pde_grid(p, a.shape(0), a.shape(1), a.shape(2));
}

PdeParams pde_params(std::array<double, 2> velocity, double diffusivity, double t_end,
                     std::array<double, 4> extent) {
  PdeParams p;
  p.velocity = velocity;
  p.diffusivity = diffusivity;
  p.t_end = t_end;
  p.x_lo = extent[0];
  p.x_hi = extent[1];
  p.y_lo = extent[2];
  p.y_hi = extent[3];
  return p;
}

ExperimentConfig config_from(const std::string& path, std::optional<std::uint64_t> seed) {
  ExperimentConfig c = path.empty() ? default_shift_config() : load_config(path);
  if (seed) apply_seed(c, *seed);
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Adjoint-method inference of GP forcing functions";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<SolverError>(m, "SolverError", base.ptr());
  py::register_exception<StructuralError>(m, "StructuralError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());

  m.def("inner_product", [](const Array& a, const Array& b, double cell_volume) {
        if (a.size() != b.size()) throw StructuralError("inner_product: sizes differ");
        double s = 0.0;
        for (py::ssize_t k = 0; k < a.size(); ++k) s += a.data()[k] * b.data()[k];
        return s * cell_volume;
      },
      py::arg("a"), py::arg("b"), py::arg("cell_volume"));

  // ODE p2 u'' + p1 u' + p0 u = f on [0, t_end]
  m.def("ode_forward",
        [](const Array& f, double p0, double p1, double p2, double t_end) {
          const OdeParams p{p0, p1, p2, t_end};
          return to_array(ode_forward(p, to_field(Grid::interval(0.0, t_end, f.size()), f)));
        },
        py::arg("forcing"), py::arg("p0") = 5.0, py::arg("p1") = 1.0, py::arg("p2") = 0.5,
        py::arg("t_end") = 1.0);
  m.def("ode_adjoint",
        [](const Array& h, double p0, double p1, double p2, double t_end) {
          const OdeParams p{p0, p1, p2, t_end};
          return to_array(ode_adjoint(p, to_field(Grid::interval(0.0, t_end, h.size()), h)));
        },
        py::arg("observation"), py::arg("p0") = 5.0, py::arg("p1") = 1.0,
        py::arg("p2") = 0.5, py::arg("t_end") = 1.0);

  // Advection-diffusion; arrays are (nt, ny, nx), extent is (x_lo, x_hi, y_lo, y_hi).
  m.def("pde_forward",
        [](const Array& f, std::array<double, 2> velocity, double diffusivity, double t_end,
           std::array<double, 4> extent, bool check_cfl) {
          const PdeParams p = pde_params(velocity, diffusivity, t_end, extent);
          return to_array(pde_forward(p, to_field(pde_grid_for(p, f), f), {check_cfl}));
        },
        py::arg("forcing"), py::arg("velocity") = std::array<double, 2>{0.4, 0.4},
        py::arg("diffusivity") = 0.01, py::arg("t_end") = 10.0,
        py::arg("extent") = std::array<double, 4>{0.0, 10.0, 0.0, 10.0},
        py::arg("check_cfl") = true);
  m.def("pde_adjoint",
        [](const Array& h, std::array<double, 2> velocity, double diffusivity, double t_end,
           std::array<double, 4> extent, bool check_cfl) {
          const PdeParams p = pde_params(velocity, diffusivity, t_end, extent);
          return to_array(pde_adjoint(p, to_field(pde_grid_for(p, h), h), {check_cfl}));
        },
        py::arg("observation"), py::arg("velocity") = std::array<double, 2>{0.4, 0.4},
        py::arg("diffusivity") = 0.01, py::arg("t_end") = 10.0,
        py::arg("extent") = std::array<double, 4>{0.0, 10.0, 0.0, 10.0},
        py::arg("check_cfl") = true);
  m.def("cfl_limit",
        [](std::array<double, 2> velocity, double diffusivity, double t_end,
           std::array<double, 4> extent, std::size_t nt, std::size_t ny, std::size_t nx) {
          const PdeParams p = pde_params(velocity, diffusivity, t_end, extent);
          return cfl_limit(p, pde_grid(p, nt, ny, nx));
        },
        py::arg("velocity"), py::arg("diffusivity"), py::arg("t_end"), py::arg("extent"),
        py::arg("nt"), py::arg("ny"), py::arg("nx"));

  // u(t + a) = f(t) on [lo, hi]
  m.def("shift_forward",
        [](const Array& f, double shift, double lo, double hi) {
          return to_array(shift_forward({shift}, to_field(Grid::interval(lo, hi, f.size()), f)));
        },
        py::arg("forcing"), py::arg("shift") = 2.0, py::arg("lo") = 0.0, py::arg("hi") = 10.0);
  m.def("shift_adjoint",
        [](const Array& h, double shift, double lo, double hi) {
          return to_array(shift_adjoint({shift}, to_field(Grid::interval(lo, hi, h.size()), h)));
        },
        py::arg("observation"), py::arg("shift") = 2.0, py::arg("lo") = 0.0,
        py::arg("hi") = 10.0);

  m.def("eq_kernel",
        [](std::vector<double> x, std::vector<double> y, double lengthscale, double variance) {
          return eq_kernel(x, y, {lengthscale, variance});
        },
        py::arg("x"), py::arg("y"), py::arg("lengthscale") = 1.0, py::arg("variance") = 1.0);
  m.def("kernel_approx",
        [](std::vector<double> x, std::vector<double> y, std::size_t features,
           double lengthscale, double variance, std::uint64_t seed) {
          const FeatureBasis b = sample_basis(features, x.size(), {lengthscale, variance}, seed);
          return kernel_approx(b, x, y);
        },
        py::arg("x"), py::arg("y"), py::arg("features"), py::arg("lengthscale") = 1.0,
        py::arg("variance") = 1.0, py::arg("seed") = 0);
  // N x M matrix of feature values at the rows of `points`.
  m.def("rff_features",
        [](const Eigen::MatrixXd& points, std::size_t features, double lengthscale,
           double variance, std::uint64_t seed) {
          const FeatureBasis b =
              sample_basis(features, points.cols(), {lengthscale, variance}, seed);
          Eigen::MatrixXd out(points.rows(), Eigen::Index(features));
          std::vector<double> x(points.cols());
          for (Eigen::Index i = 0; i < points.rows(); ++i) {
            for (Eigen::Index a = 0; a < points.cols(); ++a) x[a] = points(i, a);
            out.row(i) = b.features(x).transpose();
          }
          return out;
        },
        py::arg("points"), py::arg("features"), py::arg("lengthscale") = 1.0,
        py::arg("variance") = 1.0, py::arg("seed") = 0);

  m.def("posterior",
        [](const Eigen::MatrixXd& phi, const Eigen::VectorXd& z, double sigma) {
          const PosteriorQ p = posterior_q(phi, z, sigma, GaussianPrior::standard(phi.cols()));
          return py::make_tuple(p.mean, p.covariance);
        },
        py::arg("phi"), py::arg("readings"), py::arg("sigma"),
        "Posterior mean and covariance of the weights under a N(0, I) prior.");
  m.def("ml_estimate",
        [](const Eigen::MatrixXd& phi, const Eigen::VectorXd& z, double sigma, double ridge) {
          const MlEstimate e = ml_estimate(phi, z, sigma, ridge);
          return py::make_tuple(e.weights, e.covariance, e.condition);
        },
        py::arg("phi"), py::arg("readings"), py::arg("sigma"), py::arg("ridge") = 0.0);

  m.def("config_text",
        [](const std::string& path) { return config_to_text(load_config(path)); },
        py::arg("path"));
  m.def("config_hash",
        [](const std::string& path) { return config_hash(load_config(path)); },
        py::arg("path"));

  // Simulate and run adjoint inference in memory.
  m.def("infer_config",
        [](const std::string& path, unsigned jobs, std::optional<std::uint64_t> seed) {
          const ExperimentConfig c = config_from(path, seed);
          py::gil_scoped_release release;
          const SyntheticData d = simulate(c, jobs);
          const PipelineResult r = run_pipeline(c, training_set(d, c.sigma), jobs);
          const ForcingMoments fm =
              posterior_forcing(r.posterior, r.basis_matrix, make_grid(c));
          py::gil_scoped_acquire acquire;
          py::dict out;
          out["readings"] = d.readings;
          out["noiseless"] = d.noiseless;
          out["truth"] = to_array(d.truth.forcing);
          out["phi"] = r.phi.entries;
          out["mean"] = r.posterior.mean;
          out["covariance"] = r.posterior.covariance;
          out["forcing_mean"] = to_array(fm.mean);
          out["forcing_variance"] = to_array(fm.variance);
          py::dict seconds;
          for (std::size_t s = 0; s < kStageNames.size(); ++s) seconds[kStageNames[s]] = r.seconds[s];
          out["seconds"] = seconds;
          return out;
        },
        py::arg("config"), py::arg("jobs") = 1, py::arg("seed") = py::none());

  // CLI subcommands; returns the manifest as JSON text.
  m.def("run_command",
        [](const std::string& command, const std::string& config, const std::string& out,
           unsigned jobs, std::optional<std::uint64_t> seed, std::optional<double> slice_t) {
          if (config.empty() && command != "shift-demo")
            throw ConfigError(command + " needs a config file");
          const ExperimentConfig c = config_from(config, seed);
          CommandOptions o;
          o.out = out;
          o.jobs = jobs;
          o.slice_t = slice_t;
          py::gil_scoped_release release;
          nlohmann::json manifest;
          if (command == "simulate") manifest = cmd_simulate(c, o);
          else if (command == "infer") manifest = cmd_infer(c, o);
          else if (command == "mcmc") manifest = cmd_mcmc(c, o);
          else if (command == "sweep") manifest = cmd_sweep(c, o);
          else if (command == "scan-hyper") manifest = cmd_scan(c, o);
          else if (command == "shift-demo") manifest = cmd_shift_demo(c, o);
          else throw ConfigError("unknown command '" + command + "'");
          return manifest.dump();
        },
        py::arg("command"), py::arg("config") = "", py::arg("out") = "", py::arg("jobs") = 1,
        py::arg("seed") = py::none(), py::arg("slice_t") = py::none());
}
