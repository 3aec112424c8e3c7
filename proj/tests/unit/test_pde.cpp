#include <doctest.h>

#include <cmath>
#include <numeric>

#include "adjgp/error.hpp"
#include "adjgp/pde.hpp"
#include "test_support.hpp"

using namespace adjgp;

namespace {

// Total mass of time slab k.
double slab_mass(const Field& u, std::size_t k) {
  const Grid& g = u.grid();
  const std::size_t slab = g.dims()[1] * g.dims()[2];
  double s = 0.0;
  for (std::size_t c = 0; c < slab; ++c) s += u[k * slab + c];
  return s * g.spacing()[1] * g.spacing()[2];
}

// Mass-weighted (x, y) centre of time slab k.
std::array<double, 2> slab_centroid(const Field& u, std::size_t k) {
  const Grid& g = u.grid();
  const std::size_t ny = g.dims()[1], nx = g.dims()[2];
  double m = 0.0, cx = 0.0, cy = 0.0;
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) {
      const double w = u[(k * ny + j) * nx + i];
      m += w;
      cx += w * g.center(2, i);
      cy += w * g.center(1, j);
    }
  return {cx / m, cy / m};
}

// Forcing concentrated in the first time cell around (x0, y0).
Field pulse(const Grid& g, double x0, double y0, double width) {
  return testing::field_from(g, [&](auto p) {
    if (p[0] > g.spacing()[0]) return 0.0;
    const double r2 = (p[2] - x0) * (p[2] - x0) + (p[1] - y0) * (p[1] - y0);
    return std::exp(-r2 / (2.0 * width * width));
  });
}

}  // namespace

TEST_CASE("CFL limit formula") {
  PdeParams p;
  p.velocity = {0.0, 0.0};
  p.diffusivity = 0.5;
  const Grid g = pde_grid(p, 100, 20, 20);  // dx = dy = 0.5
  CHECK(cfl_limit(p, g) == doctest::Approx(0.9 * 0.25 / (4.0 * 0.5)));
  const PdeParams d;
  const Grid g2 = pde_grid(d, 50, 30, 30);
  const double dx = 10.0 / 30.0;
  CHECK(cfl_limit(d, g2) ==
        doctest::Approx(0.9 / (0.8 / dx + 0.02 * 2.0 / (dx * dx))));
}

TEST_CASE("a step above the CFL limit is rejected with the admissible step") {
  PdeParams p;
  p.diffusivity = 1.0;
  const Grid g = pde_grid(p, 10, 20, 20);
  try {
    pde_forward(p, Field::zeros(g));
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("maximal admissible dt") != std::string::npos);
  }
  CHECK_THROWS_AS(pde_adjoint(p, Field::zeros(g)), ConfigError);
}

TEST_CASE("ignoring the CFL limit leads to blow-up; respecting it does not") {
  PdeParams p;
  p.velocity = {0.0, 0.0};
  p.diffusivity = 1.0;
  p.t_end = 200.0;
  const Grid unstable = pde_grid(p, 400, 20, 20);  // dt = 0.5, limit 0.056
  const Field f = testing::random_field(unstable, 3);
  PdeOptions opts;
  opts.check_cfl = false;
  CHECK_THROWS_AS(pde_forward(p, f, opts), SolverError);
  CHECK_THROWS_AS(pde_adjoint(p, f, opts), SolverError);

  p.t_end = 10.0;
  const Grid stable = pde_grid(p, 180, 20, 20);  // dt just below the limit
  REQUIRE(stable.spacing()[0] <= cfl_limit(p, stable));
  const Field u = pde_forward(p, testing::random_field(stable, 4));
  double peak = 0.0;
  for (std::size_t c = 0; c < u.size(); ++c) peak = std::max(peak, std::abs(u[c]));
  CHECK(peak < 100.0);
}

TEST_CASE("pure diffusion conserves mass") {
  PdeParams p;
  p.velocity = {0.0, 0.0};
  p.diffusivity = 0.2;
  p.t_end = 5.0;
  const Grid g = pde_grid(p, 200, 20, 20);
  const Field f = pulse(g, 3.0, 6.0, 0.8);
  const Field u = pde_forward(p, f);
  // Everything injected in the first time cell: after it the mass is fixed.
  const double injected = slab_mass(f, 0) * g.spacing()[0];
  for (std::size_t k = 1; k < g.dims()[0]; ++k)
    CHECK(slab_mass(u, k) == doctest::Approx(injected).epsilon(1e-12));
}

TEST_CASE("the advected pulse travels with the velocity") {
  PdeParams p;
  p.velocity = {0.4, 0.2};
  p.diffusivity = 0.01;
  const Grid g = pde_grid(p, 200, 50, 50);
  const Field u = pde_forward(p, pulse(g, 3.0, 3.0, 0.5));
  const double dt = g.spacing()[0];
  for (std::size_t k : {20u, 60u, 100u}) {
    const auto c = slab_centroid(u, k);
    const double t = g.center(0, k) - dt;
    CHECK(c[0] == doctest::Approx(3.0 + 0.4 * t).epsilon(0.03));
    CHECK(c[1] == doctest::Approx(3.0 + 0.2 * t).epsilon(0.03));
    // mass is conserved while the pulse stays off the walls
    CHECK(slab_mass(u, k) == doctest::Approx(slab_mass(u, 5)).epsilon(1e-3));
  }
}

TEST_CASE("adjoint sensitivity travels upstream") {
  // A sensor at (7, 6) late in time is sensitive to sources upstream of it
  // at earlier times.
  PdeParams p;
  p.velocity = {0.4, 0.2};
  p.diffusivity = 0.01;
  const Grid g = pde_grid(p, 200, 50, 50);
  const std::size_t last = g.dims()[0] - 1;
  const Field h = testing::field_from(g, [&](auto x) {
    if (x[0] < p.t_end - g.spacing()[0]) return 0.0;
    const double r2 = (x[2] - 7.0) * (x[2] - 7.0) + (x[1] - 6.0) * (x[1] - 6.0);
    return std::exp(-r2 / (2.0 * 0.25));
  });
  const Field v = pde_adjoint(p, h);
  for (std::size_t back : {40u, 100u}) {
    const std::size_t k = last - back;
    const auto c = slab_centroid(v, k);
    const double lag = p.t_end - g.center(0, k) - 0.5 * g.spacing()[0];
    CHECK(c[0] == doctest::Approx(7.0 - 0.4 * lag).epsilon(0.03));
    CHECK(c[1] == doctest::Approx(6.0 - 0.2 * lag).epsilon(0.03));
  }
}

TEST_CASE("nonnegative forcing gives a nonnegative solution whose peak decays") {
  PdeParams p;
  p.velocity = {-0.3, 0.5};
  p.diffusivity = 0.05;
  p.t_end = 8.0;
  const Grid g = pde_grid(p, 200, 25, 25);
  const Field u = pde_forward(p, pulse(g, 5.0, 5.0, 1.0));
  const std::size_t slab = g.dims()[1] * g.dims()[2];
  double prev_max = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < g.dims()[0]; ++k) {
    double mx = 0.0, mn = 0.0;
    for (std::size_t c = 0; c < slab; ++c) {
      mx = std::max(mx, u[k * slab + c]);
      mn = std::min(mn, u[k * slab + c]);
    }
    CHECK(mn >= 0.0);
    CHECK(mx <= prev_max * (1.0 + 1e-12));
    prev_max = mx;
  }
}

TEST_CASE("uniform forcing grows linearly everywhere") {
  const PdeParams p;
  const Grid g = pde_grid(p, 60, 15, 15);
  const Field u = pde_forward(p, Field::constant(g, 2.0));
  for (std::size_t c = 0; c < g.size(); ++c) {
    const double t = g.center(0, c / (15 * 15));
    CHECK(u[c] == doctest::Approx(2.0 * t).epsilon(1e-12));
  }
}

TEST_CASE("discrete adjoint is the exact transpose of the forward solve") {
  PdeParams p;
  for (int trial = 0; trial < 4; ++trial) {
    p.velocity = {trial % 2 ? -0.4 : 0.4, trial / 2 ? -0.3 : 0.3};
    p.diffusivity = 0.01 + 0.02 * trial;
    const Grid g = pde_grid(p, 60, 12, 14);
    const Field f = testing::random_field(g, 10 + trial);
    const Field h = testing::random_field(g, 20 + trial);
    const double lhs = inner_product(h, pde_forward(p, f));
    const double rhs = inner_product(pde_adjoint(p, h), f);
    CHECK(std::abs(lhs - rhs) <= 1e-12 * norm(h) * norm(f));
  }
}

TEST_CASE("bilinear identity for smooth fields on refined grids") {
  // Smooth forcing and sensor functional; the identity holds on each grid
  // and the reading converges at first order under refinement.
  PdeParams p;
  p.t_end = 5.0;
  std::vector<double> readings;
  for (std::size_t n : {20u, 40u, 80u}) {
    const std::size_t nt = static_cast<std::size_t>(
        std::ceil(p.t_end / cfl_limit(p, pde_grid(p, 2, n, n)))) + 1;
    const Grid g = pde_grid(p, std::max<std::size_t>(nt, 2), n, n);
    const Field f = testing::field_from(g, [](auto x) {
      return std::exp(-((x[2] - 3.0) * (x[2] - 3.0) + (x[1] - 4.0) * (x[1] - 4.0)) / 2.0) *
             (1.0 + 0.2 * x[0]);
    });
    const Field h = testing::field_from(g, [](auto x) {
      return std::exp(-((x[2] - 5.0) * (x[2] - 5.0) + (x[1] - 5.0) * (x[1] - 5.0)) / 2.0) *
             (x[0] > 3.0 ? 1.0 : 0.0);
    });
    const double lhs = inner_product(h, pde_forward(p, f));
    const double rhs = inner_product(pde_adjoint(p, h), f);
    CHECK(std::abs(lhs - rhs) <= 1e-12 * std::abs(lhs));
    readings.push_back(lhs);
  }
  const double d1 = std::abs(readings[1] - readings[0]);
  const double d2 = std::abs(readings[2] - readings[1]);
  // first-order scheme: each halving of the cells roughly halves the change
  CHECK(d1 / d2 >= 1.6);
}

TEST_CASE("bilinear identity at the experiment resolution") {
  PdeParams p;
  const Grid g = pde_grid(p, 50, 20, 20);
  const Field f = testing::smooth_field(g, 5);
  const Field h = testing::smooth_field(g, 6);
  const double lhs = inner_product(h, pde_forward(p, f));
  const double rhs = inner_product(pde_adjoint(p, h), f);
  CHECK(std::abs(lhs - rhs) <= 0.05 * std::abs(lhs));
  CHECK(std::abs(lhs - rhs) <= 1e-12 * norm(h) * norm(f));
}

TEST_CASE("sensor fields average over their box") {
  const PdeParams p;
  const Grid g = pde_grid(p, 10, 10, 10);
  const Field s = sensor_field(g, {2.0, 4.0, 6.0, 8.0}, 3.0, 5.0);
  CHECK(inner_product(s, Field::constant(g, 1.0)) == doctest::Approx(1.0));
  const Field u = testing::field_from(g, [](auto x) { return x[2]; });
  CHECK(inner_product(s, u) == doctest::Approx(3.0));
  CHECK_THROWS_AS(pde_forward(p, Field::zeros(pde_grid(PdeParams{{0.4, 0.4}, 0.01, 0, 5, 0, 10, 10}, 10, 10, 10))),
                  StructuralError);
}
