#ifndef ADJGP_PDE_HPP_
#define ADJGP_PDE_HPP_

#include <array>

#include "adjgp/fields.hpp"

namespace adjgp {

// du/dt + p1 . grad u - div(p2 grad u) = f on [x_lo, x_hi] x [y_lo, y_hi] x
// [0, T] with u(x, 0) = 0 and zero normal derivative on the walls.
struct PdeParams {
  std::array<double, 2> velocity{0.4, 0.4};  // p1 = (x, y) components
  double diffusivity = 0.01;                 // p2
  double x_lo = 0.0, x_hi = 10.0;
  double y_lo = 0.0, y_hi = 10.0;
  double t_end = 10.0;

  void validate() const;
  friend bool operator==(const PdeParams&, const PdeParams&) = default;
};

struct PdeOptions {
  // Disables the CFL guard; only stability experiments want this.
  bool check_cfl = true;
};

// Largest stable explicit step for the upwind/centered scheme:
//   0.9 / (sum_i |p1_i| / dx_i + 2 p2 sum_i 1 / dx_i^2)
// For p1 = 0 and dx = dy this is 0.9 dx^2 / (4 p2).
double cfl_limit(const PdeParams& params, const Grid& grid);

// Explicit finite-volume stepping on the (t, y, x) grid, one step per time
// cell: first-order upwind advective fluxes, centered diffusive fluxes,
// zero diffusive flux through the walls and advective wall flux taken from
// the wall cell (a reflected ghost). Returns time-cell averages
// (u_k + u_{k+1}) / 2.
Field pde_forward(const PdeParams& params, const Field& forcing,
                  PdeOptions options = {});

// -dv/dt - p1 . grad v - div(p2 grad v) = h with v(x, T) = 0 and
// (p1 . n) v + p2 dv/dn = 0 on the walls, stepped backward from T. The
// advective fluxes upwind against the reversed velocity -p1 and the wall
// condition is imposed as zero total (advective + diffusive) flux through
// each wall face. This spatial operator is the exact transpose of the one in
// pde_forward, so <h, pde_forward(f)> == <pde_adjoint(h), f> up to rounding.
Field pde_adjoint(const PdeParams& params, const Field& observation,
                  PdeOptions options = {});

// Sensor functional: normalized indicator of region x window, where region
// is {x_lo, x_hi, y_lo, y_hi} and the window is [t_lo, t_hi).
struct SpatialBox {
  double x_lo, x_hi, y_lo, y_hi;
};
Field sensor_field(const Grid& grid, const SpatialBox& region, double t_lo,
                   double t_hi);

// The (t, y, x) grid matching params with the given cell counts.
Grid pde_grid(const PdeParams& params, std::size_t nt, std::size_t ny,
              std::size_t nx);

}  // namespace adjgp

#endif  // ADJGP_PDE_HPP_
