#include <doctest.h>

#include <cmath>

#include "ces/forward_model.hpp"
#include "ces/random.hpp"

using namespace ces;

namespace {

// Central finite-difference gradient of the potential; the oracle every
// exact gradient is judged against.
Vector fd_grad(const ForwardModel& model, const Vector& u,
               const ObservationSet& obs, double eps = 1e-6) {
  Vector g(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    Vector up = u, dn = u;
    up[i] += eps;
    dn[i] -= eps;
    g[i] = (potential(model, up, obs) - potential(model, dn, obs)) / (2 * eps);
  }
  return g;
}

} // namespace

TEST_CASE("scalar posterior arithmetic pins the linear Gaussian formula") {
  // One parameter, one observation: precision 1/s0^2 + a^2/g^2.
  double a = 2.0, g2 = 0.5, s02 = 4.0, y = 3.0;
  Matrix am(1, 1), gm(1, 1), sm(1, 1);
  am << a;
  gm << g2;
  sm << s02;
  Vector yv(1);
  yv << y;
  auto post = linear_gaussian_posterior(am, gm, sm, yv);
  double prec = 1.0 / s02 + a * a / g2;
  CHECK(post.cov(0, 0) == doctest::Approx(1.0 / prec).epsilon(1e-12));
  CHECK(post.mean[0] == doctest::Approx((a * y / g2) / prec).epsilon(1e-12));
}

TEST_CASE("posterior solves a full-rank system consistently") {
  RngStream rng(23);
  int d = 3, m = 8;
  Matrix a = rng.normal_matrix(m, d);
  Matrix gamma = 0.1 * Matrix::Identity(m, m);
  Matrix sigma0 = Matrix::Identity(d, d);
  Vector y = rng.normal_vector(m);
  auto post = linear_gaussian_posterior(a, gamma, sigma0, y);
  // Identity the posterior must satisfy: Sigma^{-1} mu = A^T Gamma^{-1} y.
  Matrix prec = sigma0.inverse() + a.transpose() * gamma.inverse() * a;
  Vector lhs = prec * post.mean;
  Vector rhs = a.transpose() * gamma.inverse() * y;
  CHECK((lhs - rhs).norm() < 1e-10 * rhs.norm());
  CHECK((post.cov * prec - Matrix::Identity(d, d)).norm() < 1e-10);
}

TEST_CASE("linear model gradient matches finite differences") {
  RngStream rng(31);
  Matrix a = rng.normal_matrix(6, 3);
  LinearModel model(a);
  auto obs = ObservationSet::iso(rng.normal_vector(6), 0.1);
  for (int t = 0; t < 5; ++t) {
    Vector u = rng.normal_vector(3);
    Vector g = grad_potential(model, u, obs);
    Vector g_fd = fd_grad(model, u, obs);
    CHECK((g - g_fd).norm() < 1e-6 * (1.0 + g_fd.norm()));
  }
}

TEST_CASE("squashed model output and gradient") {
  Matrix a(2, 4);
  a << 1, 0, 2, 0, 0, 1, 0, 3;
  BbdModel model(a);
  Vector u(4);
  u << 1.0, 2.0, -1.0, 0.5;
  // S(u) = (1, 4, -1, 0.25): odd slots pass through, even slots square.
  Vector s = BbdModel::squash(u);
  CHECK(s[0] == 1.0);
  CHECK(s[1] == 4.0);
  CHECK(s[2] == -1.0);
  CHECK(s[3] == 0.25);
  CHECK(model.evaluate(u).isApprox(a * s, 1e-14));

  RngStream rng(37);
  auto obs = ObservationSet::iso(rng.normal_vector(2), 1.0);
  for (int t = 0; t < 5; ++t) {
    Vector x = rng.normal_vector(4);
    Vector g = grad_potential(model, x, obs);
    Vector g_fd = fd_grad(model, x, obs);
    CHECK((g - g_fd).norm() < 1e-6 * (1.0 + g_fd.norm()));
  }
}

TEST_CASE("full noise covariance agrees with the scalar path") {
  RngStream rng(41);
  Vector y = rng.normal_vector(5);
  Vector r = rng.normal_vector(5);
  auto iso = ObservationSet::iso(y, 0.3);
  auto full = ObservationSet::full(y, 0.3 * Matrix::Identity(5, 5));
  CHECK(iso.sq_norm_gamma(r) == doctest::Approx(full.sq_norm_gamma(r)).epsilon(1e-12));
  CHECK(iso.apply_gamma_inv(r).isApprox(full.apply_gamma_inv(r), 1e-12));
}

TEST_CASE("data generation honors the noise spec") {
  RngStream rng(43);
  Matrix a = rng.normal_matrix(4, 2);
  LinearModel model(a);
  Vector u(2);
  u << 1.0, -1.0;

  SUBCASE("zero noise returns the exact forward value") {
    auto obs = generate_data(model, u, NoiseSpec::absolute(0.0), 99);
    CHECK(obs.y().isApprox(model.evaluate(u), 1e-15));
    CHECK(obs.sigma2() == 0.0);
  }
  SUBCASE("pinned seed reproduces") {
    auto o1 = generate_data(model, u, NoiseSpec::absolute(0.5), 7);
    auto o2 = generate_data(model, u, NoiseSpec::absolute(0.5), 7);
    CHECK(o1.y().isApprox(o2.y()));
    CHECK(o1.sigma2() == doctest::Approx(0.25));
  }
  SUBCASE("snr sets the noise variance from the mean signal power") {
    auto obs = generate_data(model, u, NoiseSpec::snr(50.0), 7);
    Vector g = model.evaluate(u);
    double power = g.squaredNorm() / g.size();
    CHECK(obs.sigma2() == doctest::Approx(power / 50.0).epsilon(1e-12));
  }
}

TEST_CASE("potential is half the weighted squared misfit") {
  Matrix a(2, 2);
  a << 1, 0, 0, 1;
  LinearModel model(a);
  Vector y(2);
  y << 1.0, 2.0;
  auto obs = ObservationSet::iso(y, 2.0);
  Vector u = Vector::Zero(2);
  // r = (1,2), ||r||^2_Gamma = 5/2.
  CHECK(potential(model, u, obs) == doctest::Approx(1.25).epsilon(1e-14));
}

TEST_CASE("solve counters track evaluations") {
  Matrix a = Matrix::Identity(3, 3);
  LinearModel model(a);
  model.reset_solve_count();
  Vector u = Vector::Zero(3);
  auto obs = ObservationSet::iso(Vector::Zero(3), 1.0);
  model.evaluate(u);
  model.evaluate(u);
  grad_potential(model, u, obs);
  CHECK(model.solve_count() == 3);
  model.reset_solve_count();
  CHECK(model.solve_count() == 0);
}

TEST_CASE("uniform design matrix is pinned to its seed") {
  Matrix a1 = random_uniform_matrix(10, 4, 1234);
  Matrix a2 = random_uniform_matrix(10, 4, 1234);
  Matrix b = random_uniform_matrix(10, 4, 1235);
  CHECK(a1.isApprox(a2));
  CHECK_FALSE(a1.isApprox(b));
  CHECK(a1.minCoeff() >= 0.0);
  CHECK(a1.maxCoeff() <= 1.0);
}
