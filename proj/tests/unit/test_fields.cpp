#include <doctest.h>

#include <cmath>
#include <sstream>

#include "adjgp/error.hpp"
#include "adjgp/fields.hpp"
#include "test_support.hpp"

using namespace adjgp;

TEST_CASE("grid invariants") {
  CHECK_THROWS_AS(Grid({1}, {0.1}, {0.0}), ConfigError);
  CHECK_THROWS_AS(Grid({4}, {0.0}, {0.0}), ConfigError);
  CHECK_THROWS_AS(Grid({4, 3}, {0.1}, {0.0}), StructuralError);
  const Grid g({3, 4, 5}, {0.5, 0.25, 2.0}, {0.0, 1.0, -1.0});
  CHECK(g.size() == 60);
  CHECK(g.cell_volume() == doctest::Approx(0.25));
  CHECK(g.stride(0) == 20);
  CHECK(g.stride(2) == 1);
  for (std::size_t c = 0; c < g.size(); ++c) CHECK(g.ravel(g.unravel(c)) == c);
  double x[3];
  g.center_point(g.ravel(std::vector<std::size_t>{1, 2, 3}), x);
  CHECK(x[0] == doctest::Approx(0.75));
  CHECK(x[1] == doctest::Approx(1.625));
  CHECK(x[2] == doctest::Approx(6.0));
}

TEST_CASE("inner product of constants on [0, 1]") {
  const Grid g = Grid::interval(0.0, 1.0, 100);
  const Field one = Field::constant(g, 1.0);
  CHECK(std::abs(inner_product(one, one) - 1.0) <= 1e-12);
}

TEST_CASE("inner product of t against 1") {
  const Grid g = Grid::interval(0.0, 1.0, 100);
  const Field t = testing::field_from(g, [](auto x) { return x[0]; });
  CHECK(std::abs(inner_product(t, Field::constant(g, 1.0)) - 0.5) <= 1e-3);
}

TEST_CASE("inner product matches a naive re-summation exactly") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Grid g({7, 6, 5}, {0.3, 0.2, 0.1}, {0.0, 0.0, 0.0});
    const Field a = testing::random_field(g, seed);
    const Field b = testing::random_field(g, seed + 100);
    CHECK(inner_product(a, b) == testing::naive_dot(a, b));
  }
}

TEST_CASE("inner product properties") {
  const Grid g = Grid::interval(0.0, 2.0, 50);
  const Field a = testing::random_field(g, 1);
  const Field b = testing::random_field(g, 2);
  const Field c = testing::random_field(g, 3);
  const double alpha = 0.7, beta = -1.3;
  const double lhs = inner_product(linear_combination(alpha, a, beta, b), c);
  const double rhs = alpha * inner_product(a, c) + beta * inner_product(b, c);
  CHECK(std::abs(lhs - rhs) <= 1e-13 * (std::abs(lhs) + 1.0));
  CHECK(inner_product(a, b) == inner_product(b, a));
  CHECK(inner_product(a, a) > 0.0);
  CHECK(inner_product(Field::zeros(g), Field::zeros(g)) == 0.0);
}

TEST_CASE("grid mismatch is a structural error") {
  const Field a = Field::zeros(Grid::interval(0.0, 1.0, 10));
  const Field b = Field::zeros(Grid::interval(0.0, 1.0, 11));
  CHECK_THROWS_AS(inner_product(a, b), StructuralError);
  CHECK_THROWS_AS(Field(Grid::interval(0.0, 1.0, 10), std::vector<double>(3)), StructuralError);
}

TEST_CASE("window over the whole domain") {
  const Grid g = Grid::interval(0.0, 2.0, 40);
  const double lo[1] = {0.0}, hi[1] = {2.0};
  const Field h = window_indicator(g, lo, hi);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(h[i] == doctest::Approx(0.5));
  CHECK(std::abs(inner_product(h, Field::constant(g, 1.0)) - 1.0) <= 1e-12);
}

TEST_CASE("window covering exactly one cell") {
  const Grid g = Grid::interval(0.0, 1.0, 10);
  const double lo[1] = {0.3}, hi[1] = {0.4};
  const Field h = window_indicator(g, lo, hi);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(h[i] == doctest::Approx(i == 3 ? 10.0 : 0.0));
}

TEST_CASE("window [0.25, 0.35] averages ten cells") {
  const Grid g = Grid::interval(0.0, 1.0, 100);
  const double lo[1] = {0.25}, hi[1] = {0.35};
  const Field h = window_indicator(g, lo, hi);
  int inside = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (h[i] != 0.0) {
      ++inside;
      CHECK(h[i] == doctest::Approx(10.0));
      CHECK(i >= 25);
      CHECK(i <= 34);
    }
  }
  CHECK(inside == 10);
  const Field u = testing::random_field(g, 9);
  double mean = 0.0;
  for (std::size_t i = 25; i < 35; ++i) mean += u[i];
  mean /= 10.0;
  CHECK(inner_product(h, u) == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("windows integrate to one") {
  Rng rng(4);
  const Grid g({8, 9, 10}, {0.5, 0.4, 0.3}, {0.0, 0.0, 0.0});
  const Field one = Field::constant(g, 1.0);
  for (int k = 0; k < 50; ++k) {
    double lo[3], hi[3];
    for (std::size_t a = 0; a < 3; ++a) {
      const double l = g.lower(a) + rng.uniform() * (g.upper(a) - g.lower(a));
      lo[a] = l;
      hi[a] = l + 0.01 + rng.uniform() * (g.upper(a) - l);
    }
    const Field h = window_indicator(g, lo, hi);
    CHECK(std::abs(inner_product(h, one) - 1.0) <= 1e-12);
  }
}

TEST_CASE("point-like window snaps to one cell, disjoint window is an error") {
  const Grid g = Grid::interval(0.0, 1.0, 10);
  const double lo[1] = {0.51}, hi[1] = {0.52};
  const Field h = window_indicator(g, lo, hi);
  CHECK(h[5] == doctest::Approx(10.0));
  const double flo[1] = {1.5}, fhi[1] = {2.0};
  CHECK_THROWS_AS(window_indicator(g, flo, fhi), DomainError);
}

TEST_CASE("masked cells drop out of inner products") {
  const Grid g = Grid::interval(0.0, 1.0, 4);
  const Field a(g, {1.0, 2.0, 3.0, 4.0}, {1, 0, 1, 1});
  const Field b = Field::constant(g, 1.0);
  CHECK(inner_product(a, b) == doctest::Approx((1.0 + 3.0 + 4.0) * 0.25));
}

TEST_CASE("CSV export has a header and one row per cell") {
  const Grid g({2, 3}, {1.0, 0.5}, {0.0, 0.0});
  const Field f(g, {1, 2, 3, 4, 5, 6}, {1, 1, 1, 1, 0, 1});
  std::ostringstream out;
  write_field_csv(out, f);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "i0,i1,x0,x1,value");
  int rows = 0;
  std::string last_nan;
  while (std::getline(in, line)) {
    ++rows;
    if (line.find("nan") != std::string::npos) last_nan = line;
  }
  CHECK(rows == 6);
  CHECK(last_nan.rfind("1,1,", 0) == 0);
}

TEST_CASE("binary dump round-trips bit-exactly") {
  const Grid g({3, 4, 5}, {0.1, 0.2, 0.3}, {1.0, -2.0, 0.5});
  std::vector<std::uint8_t> mask(g.size(), 1);
  mask[7] = 0;
  const Field f(g, testing::random_field(g, 12).masked_values(), mask);
  std::stringstream buf;
  write_field_binary(buf, f);
  const Field r = read_field_binary(buf);
  CHECK(r.grid() == g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(r[i] == f[i]);
    CHECK(r.defined(i) == f.defined(i));
  }
  std::stringstream bad("XXXX");
  CHECK_THROWS(read_field_binary(bad));
}

TEST_CASE("time slice extracts the slab containing t") {
  const Grid g = Grid::space_time(10.0, 5, 0.0, 1.0, 2, 0.0, 1.0, 3);
  std::vector<double> v(g.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = double(i);
  const Field f(g, v);
  const Field s = time_slice(f, 4.5);  // cell 2 covers [4, 6)
  CHECK(s.grid().ndim() == 2);
  CHECK(s.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(s[i] == double(12 + i));
  CHECK_THROWS(time_slice(f, 11.0));
}
