#ifndef ADJGP_ODE_HPP_
#define ADJGP_ODE_HPP_

#include "adjgp/fields.hpp"

namespace adjgp {

// p2 u'' + p1 u' + p0 u = f on [0, T], u(0) = u'(0) = 0.
struct OdeParams {
  double p0 = 5.0;
  double p1 = 1.0;
  double p2 = 0.5;
  double t_end = 1.0;

  void validate() const;
  friend bool operator==(const OdeParams&, const OdeParams&) = default;
};

// Largest step for which explicit Euler on the homogeneous system does not
// amplify; +infinity when no root has a negative real part to bound it and
// the scheme is never strictly contractive.
double ode_euler_step_limit(const OdeParams& params);

// Explicit Euler on (u, u') at the nodes t_k = k dt, with f_k taken from
// cell k. The returned field holds the cell averages (u_k + u_{k+1}) / 2.
Field ode_forward(const OdeParams& params, const Field& forcing);

// Solves p2 v'' - p1 v' + p0 v = h with v(T) = v'(T) = 0 by stepping
// backward from T on the first-order system
//   -v' = a - (p1/p2) v,    -a' = (h - p0 v) / p2,
// using the explicit update that is the exact transpose of ode_forward's
// Euler step. Consequently <h, ode_forward(f)> == <ode_adjoint(h), f> up to
// rounding for every f and h on the same grid.
Field ode_adjoint(const OdeParams& params, const Field& observation);

}  // namespace adjgp

#endif  // ADJGP_ODE_HPP_
