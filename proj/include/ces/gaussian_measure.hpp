#ifndef CES_GAUSSIAN_MEASURE_HPP
#define CES_GAUSSIAN_MEASURE_HPP

#include "ces/random.hpp"
#include "ces/types.hpp"

namespace ces {

/// Square grid of n x n nodes on the unit square, spacing 1/(n-1).
struct GridGeometry {
  int n = 0;

  int dim() const { return n * n; }
  double spacing() const { return 1.0 / (n - 1); }
  double x(int i) const { return i * spacing(); }
  double y(int j) const { return j * spacing(); }
  /// Row-major node index: node (ix, iy) -> iy * n + ix.
  int index(int ix, int iy) const { return iy * n + ix; }
};

enum class CovarianceKind { ScalarIdentity, ExponentialGrid, ExplicitMatrix };

/// Zero-mean Gaussian prior N(0, C) on the discretized parameter space.
/// Supports applying C, its symmetric square root, inverse square root,
/// inverse, and drawing samples. Grid and explicit covariances are factorized
/// once by dense symmetric eigendecomposition.
class GaussianMeasure {
public:
  /// C = sigma^2 I on R^d.
  static GaussianMeasure scalar_identity(int dim, double sigma);

  /// Exponential kernel c(s,s') = sigma^2 exp(-||s-s'|| / (2 s0)) over the
  /// nodes of an n x n unit-square grid.
  static GaussianMeasure exponential_grid(GridGeometry grid, double sigma,
                                          double correlation_length);

  /// Explicit SPD covariance matrix.
  static GaussianMeasure explicit_matrix(const Matrix& cov);

  int dim() const { return dim_; }
  CovarianceKind kind() const { return kind_; }
  const GridGeometry& grid() const { return grid_; }

  Vector apply_cov(const Vector& x) const;
  Vector apply_sqrt(const Vector& x) const;
  Vector apply_inv_sqrt(const Vector& x) const;
  Vector apply_inv(const Vector& x) const;

  /// Marginal variances diag(C).
  Vector cov_diagonal() const;

  /// Dense C and C^{-1}; used where a solver needs the whole operator.
  Matrix covariance_matrix() const;
  Matrix precision_matrix() const;

  /// Draw u ~ N(0, C) as C^{1/2} xi with xi iid standard normal.
  Vector sample(RngStream& rng) const;

private:
  GaussianMeasure() = default;

  CovarianceKind kind_ = CovarianceKind::ScalarIdentity;
  int dim_ = 0;
  double sigma2_ = 1.0;
  GridGeometry grid_{};

  // Eigendecomposition C = V diag(evals) V^T for non-scalar kinds.
  Matrix eigvecs_;
  Vector eigvals_;
  Vector sqrt_eigvals_;
};

} // namespace ces

#endif
