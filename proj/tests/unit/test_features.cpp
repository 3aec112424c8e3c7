#include <doctest.h>

#include <cmath>
#include <numbers>

#include "adjgp/error.hpp"
#include "adjgp/features.hpp"
#include "test_support.hpp"

using namespace adjgp;

TEST_CASE("EQ kernel values") {
  const KernelParams k{2.0, 3.0};
  const double a[2] = {0.0, 0.0}, b[2] = {2.0, 0.0};
  CHECK(eq_kernel(a, a, k) == 3.0);
  CHECK(eq_kernel(a, b, k) == doctest::Approx(3.0 * std::exp(-0.5)));
  CHECK_THROWS_AS(KernelParams({0.0, 1.0}).validate(), ConfigError);
  CHECK_THROWS_AS(KernelParams({1.0, -1.0}).validate(), ConfigError);
}

TEST_CASE("features follow the documented draw order and formula") {
  const KernelParams k{0.7, 1.5};
  const FeatureBasis basis = sample_basis(8, 3, k, 99);
  CHECK(basis.size() == 8);
  CHECK(basis.dim() == 3);
  for (std::size_t m = 0; m < 8; ++m) {
    Rng r = Rng::stream(99, m);
    double w[3];
    for (double& x : w) x = r.normal();
    const double b = 2.0 * std::numbers::pi * r.uniform();
    const double x[3] = {0.3, -1.2, 2.5};
    const double expect =
        std::sqrt(2.0 * 1.5 / 8.0) * std::cos((w[0] * x[0] + w[1] * x[1] + w[2] * x[2]) / 0.7 + b);
    CHECK(basis.feature(m, x) == doctest::Approx(expect).epsilon(1e-14));
  }
}

TEST_CASE("same seed, same basis; feature m does not depend on M") {
  const KernelParams k;
  const FeatureBasis a = sample_basis(10, 1, k, 5);
  const FeatureBasis b = sample_basis(10, 1, k, 5);
  const FeatureBasis c = sample_basis(20, 1, k, 5);
  CHECK(a.frequencies() == b.frequencies());
  CHECK(a.phases() == b.phases());
  CHECK(c.frequencies().topRows(10) == a.frequencies());
  CHECK(sample_basis(10, 1, k, 6).phases() != a.phases());
}

TEST_CASE("kernel approximation is unbiased over seeds") {
  const KernelParams k{1.0, 2.0};
  const double x[2] = {0.1, 0.2}, y[2] = {0.9, -0.4};
  double sum = 0.0;
  const int reps = 400;
  for (int s = 0; s < reps; ++s) sum += kernel_approx(sample_basis(50, 2, k, s), x, y);
  // per-draw variance is at most (2 tau^2)^2 / M
  const double se = 2.0 * 2.0 / std::sqrt(50.0 * reps);
  CHECK(std::abs(sum / reps - eq_kernel(x, y, k)) <= 4.0 * se);
}

TEST_CASE("kernel approximation error shrinks like 1/sqrt(M)") {
  const KernelParams k{1.0, 1.0};
  Rng pts(17);
  std::vector<std::array<double, 2>> xs(200), ys(200);
  for (int i = 0; i < 200; ++i) {
    xs[i] = {3.0 * pts.uniform(), 3.0 * pts.uniform()};
    ys[i] = {3.0 * pts.uniform(), 3.0 * pts.uniform()};
  }
  auto mean_error = [&](std::size_t m) {
    const FeatureBasis b = sample_basis(m, 2, k, 3);
    double e = 0.0;
    for (int i = 0; i < 200; ++i) e += std::abs(kernel_approx(b, xs[i], ys[i]) - eq_kernel(xs[i], ys[i], k));
    return e / 200.0;
  };
  const double small = mean_error(100), large = mean_error(10000);
  CHECK(large <= 0.05);
  CHECK(small / large >= 5.0);
}

TEST_CASE("basis evaluation does not depend on the thread count") {
  const Grid g({6, 7, 8}, {1.0, 0.5, 0.25}, {0.0, 0.0, 0.0});
  const FeatureBasis basis = sample_basis(13, 3, KernelParams{1.5, 0.5}, 4);
  const Eigen::MatrixXd one = eval_basis(basis, g, 1);
  const Eigen::MatrixXd many = eval_basis(basis, g, 4);
  CHECK(one == many);
  double x[3];
  g.center_point(100, x);
  CHECK(one(7, 100) == basis.feature(7, x));
}

TEST_CASE("forcing from weights agrees across evaluation paths") {
  const Grid g = Grid::interval(0.0, 5.0, 300);
  const FeatureBasis basis = sample_basis(40, 1, KernelParams{0.5, 2.0}, 8);
  Eigen::VectorXd q = Eigen::VectorXd::LinSpaced(40, -1.0, 1.0);
  const Field a = forcing_from_weights(basis, q, g, 3);
  const Field b = forcing_from_weights(eval_basis(basis, g), q, g);
  for (std::size_t c = 0; c < g.size(); ++c) {
    double x[1];
    g.center_point(c, x);
    const double direct = basis.features(x).dot(q);
    CHECK(a[c] == doctest::Approx(direct).epsilon(1e-12).scale(1e-12));
    CHECK(b[c] == doctest::Approx(direct).epsilon(1e-12).scale(1e-12));
  }
}

TEST_CASE("prior draws have the kernel's variance") {
  const KernelParams k{1.0, 2.0};
  const Grid g = Grid::interval(0.0, 1.0, 4);
  const FeatureBasis basis = sample_basis(500, 1, k, 12);
  // Under q ~ N(0, I) the variance at x is |phi(x)|^2 ~ tau^2.
  double x[1];
  g.center_point(1, x);
  const double exact = basis.features(x).squaredNorm();
  CHECK(exact == doctest::Approx(2.0).epsilon(0.15));
  double s2 = 0.0;
  const int reps = 4000;
  for (int s = 0; s < reps; ++s) {
    const auto draw = sample_prior_forcing(basis, g, 1000 + s);
    s2 += draw.second[1] * draw.second[1];
  }
  CHECK(s2 / reps == doctest::Approx(exact).epsilon(4.0 * std::sqrt(2.0 / reps)));
}

TEST_CASE("translated basis evaluates at shifted points") {
  const FeatureBasis basis = sample_basis(10, 2, KernelParams{0.8, 1.0}, 2);
  const double d[2] = {1.5, -0.25};
  const FeatureBasis t = basis.translated(d);
  const double x[2] = {0.3, 0.6}, xd[2] = {1.8, 0.35};
  for (std::size_t m = 0; m < 10; ++m)
    CHECK(t.feature(m, x) == doctest::Approx(basis.feature(m, xd)).epsilon(1e-12));
}

TEST_CASE("JSON round trip with and without arrays") {
  const FeatureBasis basis = sample_basis(6, 3, KernelParams{2.0, 0.5}, 77);
  for (bool arrays : {true, false}) {
    const FeatureBasis back = basis_from_json(basis_to_json(basis, arrays));
    CHECK(back.seed() == 77);
    CHECK(back.kernel() == basis.kernel());
    CHECK(back.frequencies() == basis.frequencies());
    CHECK(back.phases() == basis.phases());
  }
}
