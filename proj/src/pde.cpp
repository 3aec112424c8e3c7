#include "adjgp/pde.hpp"

#include <cmath>
#include <sstream>
#include <vector>

#include "adjgp/error.hpp"

namespace adjgp {

void PdeParams::validate() const {
  if (!(diffusivity > 0.0) || !std::isfinite(diffusivity))
    throw ConfigError("PDE diffusivity p2 must be positive");
  if (!std::isfinite(velocity[0]) || !std::isfinite(velocity[1]))
    throw ConfigError("PDE velocity p1 must be finite");
  if (!(x_hi > x_lo) || !(y_hi > y_lo))
    throw ConfigError("PDE spatial box is degenerate");
  if (!(t_end > 0.0) || !std::isfinite(t_end))
    throw ConfigError("PDE horizon T must be positive");
}

Grid pde_grid(const PdeParams& params, std::size_t nt, std::size_t ny,
              std::size_t nx) {
  params.validate();
  return Grid::space_time(params.t_end, nt, params.y_lo, params.y_hi, ny,
                          params.x_lo, params.x_hi, nx);
}

double cfl_limit(const PdeParams& params, const Grid& grid) {
  if (grid.ndim() != 3) throw StructuralError("PDE grids are (t, y, x)");
  const double dy = grid.spacing()[1];
  const double dx = grid.spacing()[2];
  const double rate = std::abs(params.velocity[0]) / dx +
                      std::abs(params.velocity[1]) / dy +
                      2.0 * params.diffusivity * (1.0 / (dx * dx) + 1.0 / (dy * dy));
  return 0.9 / rate;
}

namespace {

void check_grid(const PdeParams& params, const Grid& grid,
                const PdeOptions& options) {
  params.validate();
  if (grid.ndim() != 3) throw StructuralError("PDE grids are (t, y, x)");
  auto close = [](double a, double b, double scale) {
    return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(scale));
  };
  if (!close(grid.lower(0), 0.0, params.t_end) ||
      !close(grid.upper(0), params.t_end, params.t_end) ||
      !close(grid.lower(1), params.y_lo, params.y_hi - params.y_lo) ||
      !close(grid.upper(1), params.y_hi, params.y_hi - params.y_lo) ||
      !close(grid.lower(2), params.x_lo, params.x_hi - params.x_lo) ||
      !close(grid.upper(2), params.x_hi, params.x_hi - params.x_lo))
    throw StructuralError("PDE grid does not match the parameter box");
  if (options.check_cfl) {
    const double limit = cfl_limit(params, grid);
    if (grid.spacing()[0] > limit) {
      std::ostringstream msg;
      msg << "time step " << grid.spacing()[0]
          << " violates the CFL limit; maximal admissible dt is " << limit
          << " (at least " << static_cast<std::size_t>(
                                  std::ceil(params.t_end / limit))
          << " time cells)";
      throw ConfigError(msg.str());
    }
  }
}

// Finite-volume tendency -div(F) of `u` for velocity (vx, vy) and
// diffusivity d, accumulated into `out` (which must be zeroed). With
// `open_walls` the advective wall flux is (v . n) u_wall; otherwise every
// wall face carries zero total flux.
void tendency(const double* u, double* out, std::size_t ny, std::size_t nx,
              double dy, double dx, double vx, double vy, double d,
              bool open_walls) {
  const double inv_dx = 1.0 / dx;
  const double inv_dy = 1.0 / dy;
  // x faces
  for (std::size_t j = 0; j < ny; ++j) {
    const double* row = u + j * nx;
    double* o = out + j * nx;
    for (std::size_t i = 0; i + 1 < nx; ++i) {
      const double up = vx >= 0.0 ? row[i] : row[i + 1];
      const double flux = vx * up - d * (row[i + 1] - row[i]) * inv_dx;
      o[i] -= flux * inv_dx;
      o[i + 1] += flux * inv_dx;
    }
    if (open_walls) {
      o[0] += vx * row[0] * inv_dx;
      o[nx - 1] -= vx * row[nx - 1] * inv_dx;
    }
  }
  // y faces
  for (std::size_t j = 0; j + 1 < ny; ++j) {
    const double* lo = u + j * nx;
    const double* hi = u + (j + 1) * nx;
    double* o_lo = out + j * nx;
    double* o_hi = out + (j + 1) * nx;
    for (std::size_t i = 0; i < nx; ++i) {
      const double up = vy >= 0.0 ? lo[i] : hi[i];
      const double flux = vy * up - d * (hi[i] - lo[i]) * inv_dy;
      o_lo[i] -= flux * inv_dy;
      o_hi[i] += flux * inv_dy;
    }
  }
  if (open_walls) {
    const double* first = u;
    const double* last = u + (ny - 1) * nx;
    double* o_first = out;
    double* o_last = out + (ny - 1) * nx;
    for (std::size_t i = 0; i < nx; ++i) {
      o_first[i] += vy * first[i] * inv_dy;
      o_last[i] -= vy * last[i] * inv_dy;
    }
  }
}

// Shared explicit stepper. `backward` runs from the last time cell to the
// first; `sign` flips the velocity for the adjoint.
Field march(const PdeParams& params, const Field& rhs, const PdeOptions& options,
            bool backward) {
  const Grid& grid = rhs.grid();
  check_grid(params, grid, options);
  const std::size_t nt = grid.dims()[0];
  const std::size_t ny = grid.dims()[1];
  const std::size_t nx = grid.dims()[2];
  const std::size_t slab = ny * nx;
  const double dt = grid.spacing()[0];
  const double dy = grid.spacing()[1];
  const double dx = grid.spacing()[2];
  const double sign = backward ? -1.0 : 1.0;
  const double vx = sign * params.velocity[0];
  const double vy = sign * params.velocity[1];

  const auto source = rhs.values();
  std::vector<double> out(grid.size());
  std::vector<double> state(slab, 0.0), rate(slab);
  for (std::size_t s = 0; s < nt; ++s) {
    const std::size_t k = backward ? nt - 1 - s : s;
    std::fill(rate.begin(), rate.end(), 0.0);
    tendency(state.data(), rate.data(), ny, nx, dy, dx, vx, vy,
             params.diffusivity, !backward);
    const double* f = source.data() + k * slab;
    double* o = out.data() + k * slab;
    for (std::size_t c = 0; c < slab; ++c) {
      const double next = state[c] + dt * (rate[c] + f[c]);
      o[c] = 0.5 * (state[c] + next);
      state[c] = next;
    }
    for (std::size_t c = 0; c < slab; ++c) {
      if (!std::isfinite(state[c]))
        throw SolverError(backward ? "pde_adjoint produced a non-finite value"
                                   : "pde_forward produced a non-finite value",
                          k);
    }
  }
  return Field(grid, std::move(out));
}

}  // namespace

Field pde_forward(const PdeParams& params, const Field& forcing,
                  PdeOptions options) {
  return march(params, forcing, options, false);
}

Field pde_adjoint(const PdeParams& params, const Field& observation,
                  PdeOptions options) {
  return march(params, observation, options, true);
}

Field sensor_field(const Grid& grid, const SpatialBox& region, double t_lo,
                   double t_hi) {
  if (grid.ndim() != 3) throw StructuralError("sensor fields need a (t, y, x) grid");
  const double lo[3] = {t_lo, region.y_lo, region.x_lo};
  const double hi[3] = {t_hi, region.y_hi, region.x_hi};
  return window_indicator(grid, lo, hi);
}

}  // namespace adjgp
