#include "ces/forward_model.hpp"

#include <cmath>

namespace ces {

ObservationSet ObservationSet::iso(Vector y, double sigma2) {
  require(y.size() >= 1, "observation set needs at least one entry");
  require(sigma2 >= 0.0, "noise variance must be nonnegative");
  ObservationSet obs;
  obs.y_ = std::move(y);
  obs.scalar_ = true;
  obs.sigma2_ = sigma2;
  return obs;
}

ObservationSet ObservationSet::full(Vector y, Matrix gamma) {
  require(y.size() >= 1, "observation set needs at least one entry");
  require(gamma.rows() == y.size() && gamma.cols() == y.size(),
          "noise covariance shape does not match observations");
  require(gamma.isApprox(gamma.transpose(), 1e-12),
          "noise covariance must be symmetric");
  ObservationSet obs;
  obs.y_ = std::move(y);
  obs.scalar_ = false;
  obs.gamma_ = std::move(gamma);
  obs.gamma_llt_.compute(obs.gamma_);
  require(obs.gamma_llt_.info() == Eigen::Success,
          "noise covariance must be positive definite");
  return obs;
}

double ObservationSet::sigma2() const {
  require(scalar_, "observation set does not carry scalar noise");
  return sigma2_;
}

Vector ObservationSet::apply_gamma_inv(const Vector& r) const {
  if (scalar_) {
    if (sigma2_ <= 0.0)
      throw NumericalError("noise covariance is singular (sigma = 0)");
    return r / sigma2_;
  }
  return gamma_llt_.solve(r);
}

double ObservationSet::sq_norm_gamma(const Vector& r) const {
  return r.dot(apply_gamma_inv(r));
}

Vector ObservationSet::sample_noise(RngStream& rng, double scale) const {
  Vector z = rng.normal_vector(m());
  if (scalar_) return (scale * std::sqrt(sigma2_)) * z;
  Vector lz = gamma_llt_.matrixL() * z;
  return scale * lz;
}

Matrix ObservationSet::gamma_matrix() const {
  if (scalar_) return sigma2_ * Matrix::Identity(m(), m());
  return gamma_;
}

Vector ForwardModel::grad_potential(const Vector&, const ObservationSet&) const {
  throw ConfigError("forward model does not provide an exact gradient");
}

LinearModel::LinearModel(Matrix a) : a_(std::move(a)) {
  require(a_.rows() >= 1 && a_.cols() >= 1, "linear model matrix is empty");
}

Vector LinearModel::evaluate(const Vector& u) const {
  require(u.size() == a_.cols(), "parameter dimension mismatch");
  count_solve();
  return a_ * u;
}

Vector LinearModel::grad_potential(const Vector& u, const ObservationSet& obs) const {
  require(u.size() == a_.cols(), "parameter dimension mismatch");
  require(obs.m() == a_.rows(), "observation dimension mismatch");
  count_solve();
  Vector r = obs.y() - a_ * u;
  return -a_.transpose() * obs.apply_gamma_inv(r);
}

BbdModel::BbdModel(Matrix a) : a_(std::move(a)) {
  require(a_.rows() >= 1 && a_.cols() >= 1, "model matrix is empty");
}

Vector BbdModel::squash(const Vector& u) {
  Vector s(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i)
    s[i] = (i % 2 == 0) ? u[i] : u[i] * u[i];
  return s;
}

Vector BbdModel::evaluate(const Vector& u) const {
  require(u.size() == a_.cols(), "parameter dimension mismatch");
  count_solve();
  return a_ * squash(u);
}

Vector BbdModel::grad_potential(const Vector& u, const ObservationSet& obs) const {
  require(u.size() == a_.cols(), "parameter dimension mismatch");
  require(obs.m() == a_.rows(), "observation dimension mismatch");
  count_solve();
  Vector r = obs.y() - a_ * squash(u);
  Vector g = -a_.transpose() * obs.apply_gamma_inv(r);
  for (Eigen::Index i = 0; i < u.size(); ++i)
    if (i % 2 != 0) g[i] *= 2.0 * u[i];
  return g;
}

double potential(const ForwardModel& model, const Vector& u,
                 const ObservationSet& obs) {
  Vector r = obs.y() - model.evaluate(u);
  return 0.5 * obs.sq_norm_gamma(r);
}

Vector grad_potential(const ForwardModel& model, const Vector& u,
                      const ObservationSet& obs) {
  return model.grad_potential(u, obs);
}

GaussianPosterior linear_gaussian_posterior(const Matrix& a, const Matrix& gamma,
                                            const Matrix& sigma0,
                                            const Vector& y) {
  require(a.rows() == gamma.rows() && a.rows() == y.size(),
          "observation dimension mismatch");
  require(a.cols() == sigma0.rows(), "parameter dimension mismatch");
  Eigen::LLT<Matrix> gamma_llt(gamma);
  require(gamma_llt.info() == Eigen::Success,
          "noise covariance must be positive definite");
  Eigen::LLT<Matrix> prior_llt(sigma0);
  require(prior_llt.info() == Eigen::Success,
          "prior covariance must be positive definite");

  const Eigen::Index d = a.cols();
  Matrix prec = prior_llt.solve(Matrix::Identity(d, d)) +
                a.transpose() * gamma_llt.solve(a);
  Eigen::LLT<Matrix> prec_llt(prec);
  require(prec_llt.info() == Eigen::Success,
          "posterior precision must be positive definite");
  GaussianPosterior post;
  post.cov = prec_llt.solve(Matrix::Identity(d, d));
  post.cov = 0.5 * (post.cov + post.cov.transpose());
  post.mean = post.cov * (a.transpose() * gamma_llt.solve(y));
  return post;
}

ObservationSet generate_data(const ForwardModel& model, const Vector& u_true,
                             const NoiseSpec& noise, std::uint64_t seed) {
  Vector g = model.evaluate(u_true);
  double sigma = 0.0;
  if (noise.kind == NoiseSpec::Kind::Absolute) {
    require(noise.value >= 0.0, "noise level must be nonnegative");
    sigma = noise.value;
  } else {
    require(noise.value > 0.0, "signal-to-noise ratio must be positive");
    // Power convention: sigma^2 = mean signal power / SNR.
    sigma = std::sqrt(g.squaredNorm() / g.size() / noise.value);
  }
  Vector y = g;
  if (sigma > 0.0) {
    RngStream rng(seed);
    y += sigma * rng.normal_vector(g.size());
  }
  return ObservationSet::iso(std::move(y), sigma * sigma);
}

Matrix random_uniform_matrix(int rows, int cols, std::uint64_t seed) {
  RngStream rng(seed);
  return rng.uniform_matrix(rows, cols);
}

} // namespace ces
