#include <doctest.h>

#include <cmath>

#include "ces/gaussian_measure.hpp"
#include "ces/random.hpp"

using namespace ces;

TEST_CASE("scalar measure applies sigma^2 arithmetic") {
  auto mu = GaussianMeasure::scalar_identity(4, 2.0);
  Vector x(4);
  x << 1, -2, 3, 0.5;
  CHECK(mu.apply_cov(x).isApprox(4.0 * x));
  CHECK(mu.apply_sqrt(x).isApprox(2.0 * x));
  CHECK(mu.apply_inv_sqrt(x).isApprox(0.5 * x));
  CHECK(mu.apply_inv(x).isApprox(0.25 * x));
  CHECK(mu.cov_diagonal().isApprox(Vector::Constant(4, 4.0)));
}

TEST_CASE("sqrt composes to the covariance") {
  GridGeometry grid{7};
  auto mu = GaussianMeasure::exponential_grid(grid, 1.25, 0.0625);
  RngStream rng(3);
  for (int t = 0; t < 5; ++t) {
    Vector x = rng.normal_vector(grid.dim());
    Vector via_sqrt = mu.apply_sqrt(mu.apply_sqrt(x));
    Vector direct = mu.apply_cov(x);
    CHECK((via_sqrt - direct).norm() < 1e-10 * direct.norm());
    Vector round = mu.apply_inv_sqrt(mu.apply_sqrt(x));
    CHECK((round - x).norm() < 1e-8 * x.norm());
    Vector inv_round = mu.apply_inv(mu.apply_cov(x));
    CHECK((inv_round - x).norm() < 1e-7 * x.norm());
  }
}

TEST_CASE("exponential kernel entries match the formula") {
  GridGeometry grid{5};
  double sigma = 1.25, s0 = 0.0625;
  auto mu = GaussianMeasure::exponential_grid(grid, sigma, s0);
  // Reconstitute C e_k and compare against direct kernel evaluation.
  int k = grid.index(2, 1);
  Vector ek = Vector::Zero(grid.dim());
  ek[k] = 1.0;
  Vector col = mu.apply_cov(ek);
  for (int iy = 0; iy < grid.n; ++iy)
    for (int ix = 0; ix < grid.n; ++ix) {
      double dx = grid.x(ix) - grid.x(2);
      double dy = grid.y(iy) - grid.y(1);
      double want =
          sigma * sigma * std::exp(-std::sqrt(dx * dx + dy * dy) / (2.0 * s0));
      CHECK(col[grid.index(ix, iy)] == doctest::Approx(want).epsilon(1e-10));
    }
}

TEST_CASE("samples have the right covariance scale") {
  GridGeometry grid{4};
  auto mu = GaussianMeasure::exponential_grid(grid, 1.0, 0.2);
  RngStream rng(19);
  const int n = 20000;
  Vector mean = Vector::Zero(grid.dim());
  double var0 = 0.0;
  for (int i = 0; i < n; ++i) {
    Vector s = mu.sample(rng);
    mean += s;
    var0 += s[0] * s[0];
  }
  mean /= n;
  var0 /= n;
  CHECK(mean.norm() < 0.05 * std::sqrt(static_cast<double>(grid.dim())));
  CHECK(var0 == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("explicit matrix must be SPD") {
  Matrix bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0; // indefinite
  CHECK_THROWS_AS(GaussianMeasure::explicit_matrix(bad), ConfigError);
  Matrix asym(2, 2);
  asym << 1.0, 0.3, 0.1, 1.0;
  CHECK_THROWS_AS(GaussianMeasure::explicit_matrix(asym), ConfigError);
  Matrix good(2, 2);
  good << 2.0, 0.5, 0.5, 1.0;
  auto mu = GaussianMeasure::explicit_matrix(good);
  Vector x(2);
  x << 1, 1;
  CHECK(mu.apply_cov(x).isApprox(good * x, 1e-12));
}
