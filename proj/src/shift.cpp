#include "adjgp/shift.hpp"

#include <cmath>

#include "adjgp/error.hpp"

namespace adjgp {

long long ShiftParams::cells(const Grid& grid) const {
  if (grid.ndim() != 1) throw StructuralError("shift fields must be 1-D");
  if (!std::isfinite(shift)) throw ConfigError("shift must be finite");
  const double length = grid.upper(0) - grid.lower(0);
  if (!(std::abs(shift) < length))
    throw ConfigError("shift must be shorter than the domain");
  const double ratio = shift / grid.spacing()[0];
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, std::abs(ratio)))
    throw ConfigError("shift must be a whole multiple of the cell width");
  return static_cast<long long>(rounded);
}

namespace {

// out[k] = in[k + offset] where that index exists and is defined.
Field translate(const Field& in, long long offset) {
  const auto n = static_cast<long long>(in.size());
  std::vector<double> values(in.size(), 0.0);
  std::vector<std::uint8_t> mask(in.size(), 0);
  for (long long k = 0; k < n; ++k) {
    const long long src = k + offset;
    if (src < 0 || src >= n) continue;
    const auto s = static_cast<std::size_t>(src);
    if (!in.defined(s)) continue;
    values[static_cast<std::size_t>(k)] = in[s];
    mask[static_cast<std::size_t>(k)] = 1;
  }
  return Field(in.grid(), std::move(values), std::move(mask));
}

}  // namespace

Field shift_forward(const ShiftParams& params, const Field& forcing) {
  return translate(forcing, -params.cells(forcing.grid()));
}

Field shift_adjoint(const ShiftParams& params, const Field& observation) {
  return translate(observation, params.cells(observation.grid()));
}

Field apply_shift(const ShiftParams& params, const Field& u) {
  return translate(u, params.cells(u.grid()));
}

Field apply_shift_adjoint(const ShiftParams& params, const Field& v) {
  return translate(v, -params.cells(v.grid()));
}

}  // namespace adjgp
