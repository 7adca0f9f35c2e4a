#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "ces/emulator.hpp"

using namespace ces;

TEST_CASE("surrogate potential gradient matches finite differences") {
  // The network is an arbitrary smooth map; only the reverse-sweep wiring
  // of the weighted misfit is under test.
  Network net(3);
  net.add_dense(10, Activation::Softplus).add_dense(4, Activation::Linear);
  RngStream rng(11);
  net.initialize(rng);
  Emulator em(net, ObservationSet::iso(rng.normal_vector(4), 0.3));

  for (int t = 0; t < 5; ++t) {
    Vector u = rng.normal_vector(3);
    Vector g = em.grad_potential(u);
    Vector fd(3);
    const double eps = 1e-6;
    for (int i = 0; i < 3; ++i) {
      Vector up = u, dn = u;
      up[i] += eps;
      dn[i] -= eps;
      fd[i] = (em.potential(up) - em.potential(dn)) / (2 * eps);
    }
    CHECK((g - fd).norm() < 1e-6 * (1.0 + fd.norm()));
  }
}

TEST_CASE("trained surrogate reproduces a linear forward map") {
  RngStream rng(13);
  Matrix a = rng.normal_matrix(5, 2);
  LinearModel model(a);

  // Training pairs drawn from the prior range.
  const int n = 600;
  Matrix inputs(2, n), targets(5, n);
  for (int i = 0; i < n; ++i) {
    inputs.col(i) = rng.normal_vector(2);
    targets.col(i) = model.evaluate(inputs.col(i));
  }
  TrainingSet set{inputs, targets};
  auto obs = ObservationSet::iso(rng.normal_vector(5), 0.5);
  TrainConfig cfg;
  cfg.epochs = 400;
  cfg.seed = 14;
  auto fit = train_emulator(set, obs, 3, 0.0, cfg);

  Matrix probes = rng.normal_matrix(2, 50);
  double err = emulator_rms_error(fit.emulator, model, probes);
  CHECK(err < 0.05);

  // Potentials agree where the surrogate is accurate.
  Vector u = rng.normal_vector(2) * 0.5;
  CHECK(fit.emulator.potential(u) ==
        doctest::Approx(potential(model, u, obs)).epsilon(0.15));
}

TEST_CASE("surrogate never touches the reference model") {
  RngStream rng(15);
  Matrix a = rng.normal_matrix(3, 2);
  LinearModel model(a);
  Network net(2);
  net.add_dense(6, Activation::Tanh).add_dense(3, Activation::Linear);
  net.initialize(rng);
  Emulator em(net, ObservationSet::iso(rng.normal_vector(3), 1.0));
  model.reset_solve_count();
  Vector u = rng.normal_vector(2);
  em.potential(u);
  em.grad_potential(u);
  em.evaluate(u);
  CHECK(model.solve_count() == 0);
}

TEST_CASE("history flattening concatenates snapshots member-major") {
  CalibrationHistory hist;
  Matrix p0(2, 3), p1(2, 3), g0(1, 3), g1(1, 3);
  p0 << 1, 2, 3, 4, 5, 6;
  p1 << 7, 8, 9, 10, 11, 12;
  g0 << 0.1, 0.2, 0.3;
  g1 << 0.4, 0.5, 0.6;
  hist.params = {p0, p1};
  hist.outputs = {g0, g1};
  TrainingSet set = flatten_history(hist);
  REQUIRE(set.inputs.cols() == 6);
  CHECK(set.inputs.col(0).isApprox(p0.col(0)));
  CHECK(set.inputs.col(3).isApprox(p1.col(0)));
  CHECK(set.targets(0, 5) == doctest::Approx(0.6));
}

TEST_CASE("interpolated widths step between endpoint dimensions") {
  Network net = make_dense_emulator_network(4, 100, 3, 0.0);
  // Hidden widths 28, 52, 76 interpolate 4 -> 100 linearly.
  REQUIRE(net.layer_count() == 4);
  CHECK(net.layer(0).output_size() == 28);
  CHECK(net.layer(1).output_size() == 52);
  CHECK(net.layer(2).output_size() == 76);
  CHECK(net.layer(3).output_size() == 100);
}

TEST_CASE("conv surrogate handles grid fields and extracts exact gradients") {
  // 16-node side: conv 3x3 -> 14, pool 2x2 -> 7, conv 3x3 -> 5.
  Network net = make_conv_emulator_network(16, 25, 4, 64, 0.0);
  CHECK(net.input_size() == 256);
  CHECK(net.output_size() == 25);

  RngStream rng(23);
  net.initialize(rng);
  Emulator em(net, ObservationSet::iso(rng.normal_vector(25), 0.4));

  for (int t = 0; t < 5; ++t) {
    Vector u = rng.normal_vector(256);
    Vector g = em.grad_potential(u);
    const double eps = 1e-6;
    for (int i : {0, 17, 128, 255}) {
      Vector up = u, dn = u;
      up[i] += eps;
      dn[i] -= eps;
      const double fd = (em.potential(up) - em.potential(dn)) / (2 * eps);
      CHECK(g[i] == doctest::Approx(fd).epsilon(1e-5));
    }
  }

  // Odd post-conv side (5 -> 3) skips pooling and still reaches the head.
  Network tiny = make_conv_emulator_network(5, 7, 2, 16, 0.0);
  RngStream rng2(29);
  tiny.initialize(rng2);
  Vector out = tiny.evaluate(rng2.normal_vector(25));
  CHECK(out.size() == 7);
  CHECK(out.allFinite());

  CHECK_THROWS_AS(make_conv_emulator_network(4, 7, 2, 16, 0.0), ConfigError);
}

TEST_CASE("conv surrogate round trips through serialization") {
  Network net = make_conv_emulator_network(8, 9, 3, 32, 0.0);
  RngStream rng(31);
  net.initialize(rng);
  auto path = std::filesystem::temp_directory_path() / "ces_conv_em.net";
  save_network(path.string(), net);
  Network back = load_network(path.string());
  Vector probe = rng.normal_vector(64);
  CHECK((back.evaluate(probe) - net.evaluate(probe)).norm() == 0.0);
  std::filesystem::remove(path);
}
