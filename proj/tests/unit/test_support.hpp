#ifndef ADJGP_TEST_SUPPORT_HPP_
#define ADJGP_TEST_SUPPORT_HPP_

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "adjgp/fields.hpp"
#include "adjgp/rng.hpp"

namespace testing {

// Smooth seeded field: a few random low-frequency cosines in every axis,
// optionally multiplied by an envelope that vanishes at the domain edges.
inline adjgp::Field smooth_field(const adjgp::Grid& g, std::uint64_t seed,
                                 int terms = 4, bool taper = false) {
  adjgp::Rng rng(seed);
  const std::size_t d = g.ndim();
  std::vector<std::vector<double>> freq(terms, std::vector<double>(d));
  std::vector<double> amp(terms), phase(terms);
  for (int k = 0; k < terms; ++k) {
    for (std::size_t a = 0; a < d; ++a)
      freq[k][a] = (0.5 + 2.0 * rng.uniform()) * std::numbers::pi /
                   (g.upper(a) - g.lower(a));
    amp[k] = rng.normal();
    phase[k] = 2.0 * std::numbers::pi * rng.uniform();
  }
  std::vector<double> values(g.size()), x(d);
  for (std::size_t c = 0; c < g.size(); ++c) {
    g.center_point(c, x);
    double v = 0.0;
    for (int k = 0; k < terms; ++k) {
      double arg = phase[k];
      for (std::size_t a = 0; a < d; ++a) arg += freq[k][a] * (x[a] - g.lower(a));
      v += amp[k] * std::cos(arg);
    }
    if (taper) {
      for (std::size_t a = 0; a < d; ++a) {
        const double s = (x[a] - g.lower(a)) / (g.upper(a) - g.lower(a));
        v *= std::sin(std::numbers::pi * s);
      }
    }
    values[c] = v;
  }
  return adjgp::Field(g, std::move(values));
}

inline adjgp::Field field_from(const adjgp::Grid& g,
                               const std::function<double(std::span<const double>)>& f) {
  std::vector<double> values(g.size()), x(g.ndim());
  for (std::size_t c = 0; c < g.size(); ++c) {
    g.center_point(c, x);
    values[c] = f(x);
  }
  return adjgp::Field(g, std::move(values));
}

inline adjgp::Field random_field(const adjgp::Grid& g, std::uint64_t seed) {
  adjgp::Rng rng(seed);
  std::vector<double> v(g.size());
  for (auto& x : v) x = rng.normal();
  return adjgp::Field(g, std::move(v));
}

// Naive re-summation used as the inner-product oracle.
inline double naive_dot(const adjgp::Field& a, const adjgp::Field& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.defined(i) && b.defined(i)) s += a[i] * b[i];
  double vol = 1.0;
  for (double h : a.grid().spacing()) vol *= h;
  return s * vol;
}

// d/dx along `axis` with centered differences inside and one-sided
// differences at the two ends.
inline std::vector<double> diff(const adjgp::Field& f, std::size_t axis) {
  const adjgp::Grid& g = f.grid();
  const std::size_t n = g.dims()[axis];
  const std::size_t s = g.stride(axis);
  const double h = g.spacing()[axis];
  std::vector<double> out(g.size());
  for (std::size_t c = 0; c < g.size(); ++c) {
    const std::size_t i = (c / s) % n;
    if (i == 0) out[c] = (f[c + s] - f[c]) / h;
    else if (i + 1 == n) out[c] = (f[c] - f[c - s]) / h;
    else out[c] = (f[c + s] - f[c - s]) / (2.0 * h);
  }
  return out;
}

// Second derivative along `axis`: centered inside, one-sided three-point
// stencils at the ends.
inline std::vector<double> diff2(const adjgp::Field& f, std::size_t axis) {
  const adjgp::Grid& g = f.grid();
  const std::size_t n = g.dims()[axis];
  const std::size_t s = g.stride(axis);
  const double h = g.spacing()[axis];
  std::vector<double> out(g.size());
  for (std::size_t c = 0; c < g.size(); ++c) {
    const std::size_t i = (c / s) % n;
    if (i == 0) out[c] = (f[c] - 2.0 * f[c + s] + f[c + 2 * s]) / (h * h);
    else if (i + 1 == n) out[c] = (f[c] - 2.0 * f[c - s] + f[c - 2 * s]) / (h * h);
    else out[c] = (f[c + s] - 2.0 * f[c] + f[c - s]) / (h * h);
  }
  return out;
}

}  // namespace testing

#endif  // ADJGP_TEST_SUPPORT_HPP_
