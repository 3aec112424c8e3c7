#ifndef ADJGP_SHIFT_HPP_
#define ADJGP_SHIFT_HPP_

#include "adjgp/fields.hpp"

namespace adjgp {

// Right-shift system L_a u(t) = u(t + a) = f(t) on a 1-D grid. Shifts must
// be whole multiples of the cell width.
struct ShiftParams {
  double shift = 2.0;

  // Shift in cells; throws ConfigError for fractional or oversized shifts.
  long long cells(const Grid& grid) const;
  friend bool operator==(const ShiftParams&, const ShiftParams&) = default;
};

// Solves L_a u = f: u(t) = f(t - a). Cells without source data are undefined.
Field shift_forward(const ShiftParams& params, const Field& forcing);

// Solves L*_a v = h: v(t) = h(t + a).
Field shift_adjoint(const ShiftParams& params, const Field& observation);

// The operators themselves: (L_a u)(t) = u(t + a), (L*_a v)(t) = v(t - a).
Field apply_shift(const ShiftParams& params, const Field& u);
Field apply_shift_adjoint(const ShiftParams& params, const Field& v);

}  // namespace adjgp

#endif  // ADJGP_SHIFT_HPP_
