#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "ces/network.hpp"

using namespace ces;

namespace {

// Scalar probe L(x) = c . f(x); its FD gradient is the oracle for every
// reverse sweep, its FD directional derivative the oracle for tangents.
double probe(const Network& net, const Vector& x, const Vector& c) {
  return c.dot(net.evaluate(x));
}

Vector fd_input_grad(const Network& net, const Vector& x, const Vector& c,
                     double eps = 1e-6) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector up = x, dn = x;
    up[i] += eps;
    dn[i] -= eps;
    g[i] = (probe(net, up, c) - probe(net, dn, c)) / (2 * eps);
  }
  return g;
}

Vector fd_param_grad(Network& net, const Vector& x, const Vector& c,
                     double eps = 1e-6) {
  Vector theta = net.parameters();
  Vector g(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Vector up = theta, dn = theta;
    up[i] += eps;
    dn[i] -= eps;
    net.set_parameters(up);
    double lu = probe(net, x, c);
    net.set_parameters(dn);
    double ld = probe(net, x, c);
    g[i] = (lu - ld) / (2 * eps);
  }
  net.set_parameters(theta);
  return g;
}

void check_gradients(Network& net, std::uint64_t seed, double tol = 2e-6) {
  RngStream rng(seed);
  net.initialize(rng);
  Vector x = rng.normal_vector(net.input_size());
  Vector c = rng.normal_vector(net.output_size());

  std::vector<LayerContext> ctx;
  net.forward_cached(x, ctx, false, nullptr);
  Vector pgrad;
  Vector xgrad = net.backward(ctx, c, pgrad);

  Vector xg_fd = fd_input_grad(net, x, c);
  CHECK((xgrad - xg_fd).norm() < tol * (1.0 + xg_fd.norm()));
  Vector pg_fd = fd_param_grad(net, x, c);
  CHECK((pgrad - pg_fd).norm() < tol * (1.0 + pg_fd.norm()));

  // Tangent sweep against an FD directional derivative.
  Vector v = rng.normal_vector(net.input_size());
  double eps = 1e-6;
  Vector f_up = net.evaluate(x + eps * v);
  Vector f_dn = net.evaluate(x - eps * v);
  Vector dir_fd = (f_up - f_dn) / (2 * eps);
  Vector dir = net.jvp(x, v);
  CHECK((dir - dir_fd).norm() < tol * (1.0 + dir_fd.norm()));

  // Both Jacobian sweeps agree.
  Matrix jr = net.jacobian_reverse(x);
  Matrix jf = net.jacobian_forward(x);
  CHECK((jr - jf).norm() < 1e-11 * (1.0 + jr.norm()));
}

} // namespace

TEST_CASE("dense stacks differentiate correctly across activations") {
  SUBCASE("tanh and linear") {
    Network net(4);
    net.add_dense(7, Activation::Tanh).add_dense(3, Activation::Linear);
    check_gradients(net, 101);
  }
  SUBCASE("softplus") {
    Network net(5);
    net.add_dense(6, Activation::Softplus).add_dense(2, Activation::Softplus);
    check_gradients(net, 102);
  }
  SUBCASE("relu and leaky relu") {
    Network net(6);
    net.add_dense(8, Activation::Relu)
        .add_dense(8, Activation::LeakyRelu, 0.1)
        .add_dense(4, Activation::Linear);
    check_gradients(net, 103);
  }
  SUBCASE("elu") {
    Network net(4);
    net.add_dense(5, Activation::Elu, 1.0).add_dense(3, Activation::Linear);
    check_gradients(net, 104);
  }
  SUBCASE("prelu learns its slope") {
    Network net(4);
    net.add_dense(6, Activation::Prelu).add_dense(2, Activation::Linear);
    // Parameter count includes the learned slope.
    CHECK(net.parameter_count() == (4 * 6 + 6 + 1) + (6 * 2 + 2));
    check_gradients(net, 105);
  }
  SUBCASE("softmax head") {
    Network net(5);
    net.add_dense(6, Activation::Tanh).add_dense(4, Activation::Softmax);
    check_gradients(net, 106);
    RngStream rng(107);
    net.initialize(rng);
    Vector y = net.evaluate(rng.normal_vector(5));
    CHECK(y.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(y.minCoeff() > 0.0);
  }
}

TEST_CASE("softmax is invariant to input shifts") {
  Network net(3);
  net.add_dense(3, Activation::Softmax);
  Vector theta(net.parameter_count());
  // Identity weights, zero bias: softmax acts on the raw input.
  theta.setZero();
  theta[0] = theta[4] = theta[8] = 1.0;
  net.set_parameters(theta);
  Vector a(3), b(3);
  a << 1.0, 2.0, 3.0;
  b = a.array() + 500.0; // large shift must not overflow
  CHECK(net.evaluate(a).isApprox(net.evaluate(b), 1e-12));
}

TEST_CASE("convolution matches a hand-computed example") {
  // 1 channel 3x3 input, one 2x2 kernel, stride 1, linear activation.
  Network net(9);
  net.add_conv2d(1, 3, 3, 1, 2, 1, Activation::Linear);
  Vector theta(net.parameter_count());
  REQUIRE(theta.size() == 5); // 4 kernel + 1 bias
  theta << 1.0, 2.0, 3.0, 4.0, 0.5;
  net.set_parameters(theta);
  Vector x(9);
  x << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  // Window at (0,0): 1*1 + 2*2 + 3*4 + 4*5 + 0.5 = 37.5, etc.
  Vector y = net.evaluate(x);
  REQUIRE(y.size() == 4);
  CHECK(y[0] == doctest::Approx(37.5));
  CHECK(y[1] == doctest::Approx(47.5));
  CHECK(y[2] == doctest::Approx(67.5));
  CHECK(y[3] == doctest::Approx(77.5));
}

TEST_CASE("convolution stacks differentiate correctly") {
  Network net(2 * 6 * 6);
  net.add_conv2d(2, 6, 6, 3, 3, 1, Activation::Softplus)
      .add_pool(3, 4, 4, 2, 2, PoolKind::Avg)
      .add_flatten()
      .add_dense(5, Activation::Linear);
  check_gradients(net, 201);
}

TEST_CASE("strided convolution differentiates correctly") {
  Network net(5 * 5);
  net.add_conv2d(1, 5, 5, 2, 3, 2, Activation::Tanh)
      .add_flatten()
      .add_dense(3, Activation::Linear);
  check_gradients(net, 202);
}

TEST_CASE("max pooling takes window maxima and breaks ties first") {
  Network net(16);
  net.add_pool(1, 4, 4, 2, 2, PoolKind::Max);
  Vector x(16);
  x << 1, 2, 0, 0, 3, 4, 0, 0, 5, 5, 7, 6, 5, 5, 8, 9;
  Vector y = net.evaluate(x);
  REQUIRE(y.size() == 4);
  CHECK(y[0] == 4.0);
  CHECK(y[1] == 0.0);
  CHECK(y[2] == 5.0);
  CHECK(y[3] == 9.0);

  // Tie in the third window (all 5s): the subgradient goes to the first
  // element in row-major order, index 8.
  std::vector<LayerContext> ctx;
  net.forward_cached(x, ctx, false, nullptr);
  Vector dy(4);
  dy << 0, 0, 1, 0;
  Vector dx = net.input_gradient(ctx, dy);
  CHECK(dx[8] == 1.0);
  CHECK(dx.sum() == 1.0);
}

TEST_CASE("max pooling gradients agree with finite differences") {
  // Distinct values keep the argmax stable under the FD perturbation.
  Network net(9);
  net.add_pool(1, 3, 3, 2, 1, PoolKind::Max);
  Vector x(9);
  x << 0.9, -0.4, 0.1, 0.3, 1.4, -0.8, -0.2, 0.6, 2.2;
  Vector c(4);
  c << 1.0, -2.0, 0.5, 1.5;
  std::vector<LayerContext> ctx;
  net.forward_cached(x, ctx, false, nullptr);
  Vector g = net.input_gradient(ctx, c);
  Vector g_fd = fd_input_grad(net, x, c);
  CHECK((g - g_fd).norm() < 1e-8);
}

TEST_CASE("dropout is identity at inference and unbiased in training") {
  Network net(100);
  net.add_dropout(0.4);
  RngStream rng(301);
  Vector x = Vector::Ones(100);
  CHECK(net.evaluate(x).isApprox(x));

  // Training mode: entries are 0 or 1/keep, mean near 1.
  double total = 0.0;
  int zeros = 0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    std::vector<LayerContext> ctx;
    Vector y = net.forward_cached(x, ctx, true, &rng);
    for (int i = 0; i < 100; ++i) {
      if (y[i] == 0.0)
        ++zeros;
      else
        CHECK(y[i] == doctest::Approx(1.0 / 0.6).epsilon(1e-12));
    }
    total += y.sum();
  }
  double drop_frac = static_cast<double>(zeros) / (100.0 * reps);
  CHECK(drop_frac == doctest::Approx(0.4).epsilon(0.05));
  CHECK(total / (100.0 * reps) == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("shape mismatches are rejected at construction") {
  Network net(10);
  CHECK_THROWS_AS(net.add_conv2d(1, 3, 3, 1, 2, 1, Activation::Linear),
                  ConfigError);
  CHECK_THROWS_AS(net.add_pool(1, 5, 5, 2, 1, PoolKind::Max), ConfigError);
  net.add_dense(9, Activation::Tanh);
  net.add_conv2d(1, 3, 3, 1, 2, 1, Activation::Linear); // now consistent
  CHECK(net.output_size() == 4);
  CHECK_THROWS_AS(Conv2dLayer(1, 2, 2, 1, 3, 1, Activation::Linear),
                  ConfigError);
  CHECK_THROWS_AS(DropoutLayer(4, 1.0), ConfigError);
}

TEST_CASE("network serialization round trips bit-exactly") {
  Network net(6);
  net.add_dense(8, Activation::Softplus)
      .add_dropout(0.3)
      .add_dense(4, Activation::Prelu)
      .add_dense(2, Activation::Linear);
  RngStream rng(401);
  net.initialize(rng);

  auto path = std::filesystem::temp_directory_path() / "ces_net.net";
  save_network(path.string(), net);
  Network back = load_network(path.string());
  std::filesystem::remove(path);

  CHECK(back.input_size() == 6);
  CHECK(back.output_size() == 2);
  CHECK((back.parameters() - net.parameters()).norm() == 0.0); // bit exact
  Vector x = rng.normal_vector(6);
  CHECK((back.evaluate(x) - net.evaluate(x)).norm() == 0.0);
}

TEST_CASE("conv network serialization preserves structure") {
  Network net(16);
  net.add_conv2d(1, 4, 4, 2, 2, 1, Activation::Elu, 1.0)
      .add_pool(2, 3, 3, 2, 1, PoolKind::Max)
      .add_flatten()
      .add_dense(3, Activation::Softmax);
  RngStream rng(402);
  net.initialize(rng);
  std::stringstream ss;
  write_network(ss, net);
  Network back = read_network(ss);
  Vector x = rng.normal_vector(16);
  CHECK((back.evaluate(x) - net.evaluate(x)).norm() == 0.0);
}
