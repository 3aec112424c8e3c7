#include "adjgp/ode.hpp"

#include <cmath>
#include <complex>
#include <limits>
#include <sstream>

#include "adjgp/error.hpp"
#include "adjgp/log.hpp"

namespace adjgp {

void OdeParams::validate() const {
  if (!(p2 != 0.0) || !std::isfinite(p2))
    throw ConfigError("ODE coefficient p2 must be nonzero");
  if (!std::isfinite(p0) || !std::isfinite(p1))
    throw ConfigError("ODE coefficients must be finite");
  if (!(t_end > 0.0) || !std::isfinite(t_end))
    throw ConfigError("ODE horizon T must be positive");
}

double ode_euler_step_limit(const OdeParams& params) {
  // Roots of p2 mu^2 + p1 mu + p0; Euler is contractive on mode mu iff
  // |1 + dt mu| <= 1, i.e. dt <= -2 Re(mu) / |mu|^2.
  const std::complex<double> disc =
      std::sqrt(std::complex<double>(params.p1 * params.p1 -
                                     4.0 * params.p2 * params.p0));
  const std::complex<double> roots[2] = {(-params.p1 + disc) / (2.0 * params.p2),
                                         (-params.p1 - disc) / (2.0 * params.p2)};
  double limit = std::numeric_limits<double>::infinity();
  for (const auto& mu : roots) {
    if (mu.real() < 0.0)
      limit = std::min(limit, -2.0 * mu.real() / std::norm(mu));
  }
  return limit;
}

namespace {

double checked_step(const Grid& grid, const OdeParams& params) {
  if (grid.ndim() != 1) throw StructuralError("ODE fields must be 1-D");
  const double extent = grid.upper(0) - grid.lower(0);
  if (std::abs(grid.lower(0)) > 1e-12 * params.t_end ||
      std::abs(extent - params.t_end) > 1e-9 * params.t_end)
    throw StructuralError("ODE grid must cover [0, T]");
  const double dt = grid.spacing()[0];
  const double limit = ode_euler_step_limit(params);
  if (dt > limit) {
    std::ostringstream msg;
    msg << "ODE step " << dt << " exceeds the explicit Euler stability limit "
        << limit << "; the solution may grow spuriously";
    warn(msg.str());
  }
  return dt;
}

void require_finite(double a, double b, std::size_t step, const char* what) {
  if (!std::isfinite(a) || !std::isfinite(b))
    throw SolverError(std::string(what) + " produced a non-finite value", step);
}

}  // namespace

Field ode_forward(const OdeParams& params, const Field& forcing) {
  params.validate();
  const Grid& grid = forcing.grid();
  const double dt = checked_step(grid, params);
  const std::size_t n = grid.size();
  const auto f = forcing.values();
  std::vector<double> out(n);
  double u = 0.0, w = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double u_next = u + dt * w;
    const double w_next = w + dt / params.p2 * (f[k] - params.p1 * w - params.p0 * u);
    require_finite(u_next, w_next, k, "ode_forward");
    out[k] = 0.5 * (u + u_next);
    u = u_next;
    w = w_next;
  }
  return Field(grid, std::move(out));
}

Field ode_adjoint(const OdeParams& params, const Field& observation) {
  params.validate();
  const Grid& grid = observation.grid();
  const double dt = checked_step(grid, params);
  const std::size_t n = grid.size();
  const auto h = observation.values();
  std::vector<double> out(n);
  const double ratio = params.p1 / params.p2;
  double v = 0.0, a = 0.0;  // final conditions at t = T
  for (std::size_t j = n; j-- > 0;) {
    const double v_prev = v + dt * (a - ratio * v);
    const double a_prev = a + dt / params.p2 * (h[j] - params.p0 * v);
    require_finite(v_prev, a_prev, j, "ode_adjoint");
    out[j] = 0.5 * (v + v_prev);
    v = v_prev;
    a = a_prev;
  }
  return Field(grid, std::move(out));
}

}  // namespace adjgp
