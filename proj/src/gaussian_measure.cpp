#include "ces/gaussian_measure.hpp"

#include <cmath>

namespace ces {

GaussianMeasure GaussianMeasure::scalar_identity(int dim, double sigma) {
  require(dim >= 1, "prior dimension must be >= 1");
  require(sigma > 0.0, "prior sigma must be positive");
  GaussianMeasure m;
  m.kind_ = CovarianceKind::ScalarIdentity;
  m.dim_ = dim;
  m.sigma2_ = sigma * sigma;
  return m;
}

GaussianMeasure GaussianMeasure::exponential_grid(GridGeometry grid,
                                                  double sigma,
                                                  double correlation_length) {
  require(grid.n >= 2, "grid must have at least 2 nodes per side");
  require(sigma > 0.0 && correlation_length > 0.0,
          "kernel parameters must be positive");
  const int d = grid.dim();
  Matrix cov(d, d);
  for (int jy = 0; jy < grid.n; ++jy)
    for (int jx = 0; jx < grid.n; ++jx) {
      const int j = grid.index(jx, jy);
      for (int iy = 0; iy < grid.n; ++iy)
        for (int ix = 0; ix < grid.n; ++ix) {
          const int i = grid.index(ix, iy);
          const double dx = grid.x(ix) - grid.x(jx);
          const double dy = grid.y(iy) - grid.y(jy);
          const double dist = std::sqrt(dx * dx + dy * dy);
          cov(i, j) =
              sigma * sigma * std::exp(-dist / (2.0 * correlation_length));
        }
    }
  GaussianMeasure m = explicit_matrix(cov);
  m.kind_ = CovarianceKind::ExponentialGrid;
  m.grid_ = grid;
  return m;
}

GaussianMeasure GaussianMeasure::explicit_matrix(const Matrix& cov) {
  require(cov.rows() == cov.cols() && cov.rows() >= 1,
          "covariance must be square");
  require(cov.isApprox(cov.transpose(), 1e-12), "covariance must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  require(es.info() == Eigen::Success, "covariance eigendecomposition failed");
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw ConfigError("covariance is not positive definite");
  GaussianMeasure m;
  m.kind_ = CovarianceKind::ExplicitMatrix;
  m.dim_ = static_cast<int>(cov.rows());
  m.eigvecs_ = es.eigenvectors();
  m.eigvals_ = es.eigenvalues();
  m.sqrt_eigvals_ = m.eigvals_.array().sqrt();
  return m;
}

Vector GaussianMeasure::apply_cov(const Vector& x) const {
  require(x.size() == dim_, "dimension mismatch in apply_cov");
  if (kind_ == CovarianceKind::ScalarIdentity) return sigma2_ * x;
  return eigvecs_ * (eigvals_.asDiagonal() * (eigvecs_.transpose() * x));
}

Vector GaussianMeasure::apply_sqrt(const Vector& x) const {
  require(x.size() == dim_, "dimension mismatch in apply_sqrt");
  if (kind_ == CovarianceKind::ScalarIdentity) return std::sqrt(sigma2_) * x;
  return eigvecs_ * (sqrt_eigvals_.asDiagonal() * (eigvecs_.transpose() * x));
}

Vector GaussianMeasure::apply_inv_sqrt(const Vector& x) const {
  require(x.size() == dim_, "dimension mismatch in apply_inv_sqrt");
  if (kind_ == CovarianceKind::ScalarIdentity) return x / std::sqrt(sigma2_);
  return eigvecs_ * (sqrt_eigvals_.cwiseInverse().asDiagonal() *
                     (eigvecs_.transpose() * x));
}

Vector GaussianMeasure::apply_inv(const Vector& x) const {
  require(x.size() == dim_, "dimension mismatch in apply_inv");
  if (kind_ == CovarianceKind::ScalarIdentity) return x / sigma2_;
  return eigvecs_ *
         (eigvals_.cwiseInverse().asDiagonal() * (eigvecs_.transpose() * x));
}

Vector GaussianMeasure::cov_diagonal() const {
  if (kind_ == CovarianceKind::ScalarIdentity)
    return Vector::Constant(dim_, sigma2_);
  return (eigvecs_ * eigvals_.asDiagonal() * eigvecs_.transpose()).diagonal();
}

Matrix GaussianMeasure::covariance_matrix() const {
  if (kind_ == CovarianceKind::ScalarIdentity)
    return sigma2_ * Matrix::Identity(dim_, dim_);
  return eigvecs_ * eigvals_.asDiagonal() * eigvecs_.transpose();
}

Matrix GaussianMeasure::precision_matrix() const {
  if (kind_ == CovarianceKind::ScalarIdentity)
    return (1.0 / sigma2_) * Matrix::Identity(dim_, dim_);
  return eigvecs_ * eigvals_.cwiseInverse().asDiagonal() * eigvecs_.transpose();
}

Vector GaussianMeasure::sample(RngStream& rng) const {
  return apply_sqrt(rng.normal_vector(dim_));
}

} // namespace ces
