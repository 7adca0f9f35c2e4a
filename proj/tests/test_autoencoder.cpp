#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "ces/autoencoder.hpp"

using namespace ces;

namespace {

// Data concentrated on a 2-plane in R^5 plus small noise.
Matrix planar_data(int n, std::uint64_t seed) {
  RngStream rng(seed);
  Matrix basis = rng.normal_matrix(5, 2);
  Eigen::HouseholderQR<Matrix> qr(basis);
  Matrix q = qr.householderQ() * Matrix::Identity(5, 2);
  Matrix data(5, n);
  for (int i = 0; i < n; ++i)
    data.col(i) = q * (2.0 * rng.normal_vector(2)) + 0.01 * rng.normal_vector(5);
  return data;
}

} // namespace

TEST_CASE("linear reduction recovers a planar structure like a projection") {
  Matrix data = planar_data(500, 21);
  AutoencoderSpec spec;
  spec.latent_dim = 2;
  spec.linear = true;
  TrainConfig cfg;
  cfg.epochs = 400;
  cfg.learning_rate = 5e-3;
  cfg.seed = 22;
  auto fit = train_autoencoder(data, spec, cfg);

  // Orthogonal-projection oracle via the SVD of the data matrix.
  Eigen::JacobiSVD<Matrix> svd(data, Eigen::ComputeThinU);
  Matrix top = svd.matrixU().leftCols(2);
  double pca_err = 0.0, ae_err = 0.0, scale = 0.0;
  for (int i = 0; i < data.cols(); ++i) {
    Vector u = data.col(i);
    pca_err += (u - top * (top.transpose() * u)).squaredNorm();
    ae_err += (u - fit.ae.decode(fit.ae.encode(u))).squaredNorm();
    scale += u.squaredNorm();
  }
  CHECK(ae_err / scale < 0.02);
  CHECK(ae_err < 4.0 * pca_err + 0.05 * scale / data.cols());
}

TEST_CASE("jacobians of both halves match finite differences") {
  Matrix data = planar_data(300, 23);
  AutoencoderSpec spec;
  spec.latent_dim = 2;
  spec.hidden_activation = Activation::LeakyRelu;
  spec.alpha = 2.0;
  TrainConfig cfg;
  cfg.epochs = 150;
  cfg.seed = 24;
  auto fit = train_autoencoder(data, spec, cfg);
  const Autoencoder& ae = fit.ae;

  RngStream rng(25);
  const double eps = 1e-6;
  for (int t = 0; t < 3; ++t) {
    Vector u = data.col(t * 7);
    Matrix je = ae.encoder_jacobian(u);
    REQUIRE(je.rows() == 2);
    REQUIRE(je.cols() == 5);
    Matrix je_fd(2, 5);
    for (int i = 0; i < 5; ++i) {
      Vector up = u, dn = u;
      up[i] += eps;
      dn[i] -= eps;
      je_fd.col(i) = (ae.encode(up) - ae.encode(dn)) / (2 * eps);
    }
    CHECK((je - je_fd).norm() < 2e-6 * (1.0 + je_fd.norm()));

    Vector z = ae.encode(u);
    Matrix jd = ae.decoder_jacobian(z);
    REQUIRE(jd.rows() == 5);
    REQUIRE(jd.cols() == 2);
    Matrix jd_fd(5, 2);
    for (int i = 0; i < 2; ++i) {
      Vector up = z, dn = z;
      up[i] += eps;
      dn[i] -= eps;
      jd_fd.col(i) = (ae.decode(up) - ae.decode(dn)) / (2 * eps);
    }
    CHECK((jd - jd_fd).norm() < 2e-6 * (1.0 + jd_fd.norm()));
  }
}

TEST_CASE("volume element equals the Gram determinant oracle") {
  // 20 random rectangular Jacobians, d <= 20, d_L <= 5: the sum of log
  // singular values must equal half the log-determinant of J^T J.
  RngStream rng(26);
  for (int t = 0; t < 20; ++t) {
    int d = 2 + static_cast<int>(rng.uniform() * 18);
    int dl = 1 + std::min(4, static_cast<int>(rng.uniform() * 5));
    dl = std::min(dl, d);
    Matrix j = rng.normal_matrix(d, dl);
    double lv = log_volume_of_jacobian(j, "probe");
    Matrix gram = j.transpose() * j;
    double want = 0.5 * std::log(gram.determinant());
    CHECK(lv == doctest::Approx(want).epsilon(1e-8));
  }
}

TEST_CASE("rank deficiency is reported with the map name") {
  Matrix j = Matrix::Zero(4, 2);
  j(0, 0) = 1.0; // second column identically zero
  try {
    log_volume_of_jacobian(j, "decoder");
    FAIL("expected rank deficiency");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("decoder") != std::string::npos);
  }
}

TEST_CASE("autoencoder serialization round trips") {
  Matrix data = planar_data(200, 27);
  AutoencoderSpec spec;
  spec.latent_dim = 2;
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.seed = 28;
  auto fit = train_autoencoder(data, spec, cfg);

  auto path = std::filesystem::temp_directory_path() / "ces_ae.net";
  save_autoencoder(path.string(), fit.ae);
  Autoencoder back = load_autoencoder(path.string());
  std::filesystem::remove(path);

  Vector u = data.col(0);
  CHECK((back.encode(u) - fit.ae.encode(u)).norm() == 0.0);
  CHECK((back.decode(back.encode(u)) - fit.ae.decode(fit.ae.encode(u))).norm() ==
        0.0);
  CHECK(back.latent_dim() == 2);
  CHECK(back.full_dim() == 5);
}

TEST_CASE("mismatched halves are rejected") {
  Network enc(5);
  enc.add_dense(2, Activation::Linear);
  Network dec(3);
  dec.add_dense(5, Activation::Linear);
  CHECK_THROWS_AS(Autoencoder(enc, dec), ConfigError);
}
