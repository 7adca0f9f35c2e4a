#ifndef CES_ELLIPTIC_HPP
#define CES_ELLIPTIC_HPP

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <vector>

#include "ces/forward_model.hpp"
#include "ces/gaussian_measure.hpp"

namespace ces {

/// Steady Darcy flow on the unit square:
///   -div(exp(u) grad p) = f,  zero-flux boundary,  boundary mean of p = 0.
///
/// Node-centered finite volumes on an n x n grid with harmonic face
/// averaging of the conductivity; the boundary-mean gauge is enforced by a
/// single Lagrange multiplier row. The parameter u lives on the same grid
/// (one log-conductivity value per node, row-major).
class EllipticModel : public ForwardModel {
public:
  /// Sensors default to the interior 5x5 lattice (i/6, j/6), i,j = 1..5.
  explicit EllipticModel(GridGeometry grid);
  EllipticModel(GridGeometry grid, std::vector<std::pair<double, double>> sensors);

  int input_dim() const override { return grid_.dim(); }
  int output_dim() const override { return static_cast<int>(obs_op_.rows()); }
  bool has_exact_gradient() const override { return true; }

  Vector evaluate(const Vector& u) const override;
  Vector grad_potential(const Vector& u, const ObservationSet& obs) const override;

  /// Pressure field on the grid nodes (the state behind evaluate()).
  Vector solve_pressure(const Vector& u) const;

  const GridGeometry& grid() const { return grid_; }
  const std::vector<std::pair<double, double>>& sensors() const { return sensors_; }
  /// Bilinear sensor interpolation matrix (m x n^2).
  const Matrix& observation_operator() const { return obs_op_; }
  /// Boundary trapezoid quadrature weights (the gauge row).
  const Vector& boundary_weights() const { return boundary_weights_; }
  /// Source field f evaluated at the grid nodes, integrated per control
  /// volume (the discrete right-hand side).
  const Vector& rhs() const { return rhs_; }

  /// Four-plume source: weighted isotropic Gaussian densities with sd 0.05
  /// at (0.3,0.3), (0.7,0.3), (0.7,0.7), (0.3,0.7), weights (2,-3,3,-2).
  static double forcing(double x, double y);

  /// Bilinear prolongation of a node field from an n-grid to the nested
  /// (2n-1)-grid.
  static Vector prolong(const Vector& coarse, const GridGeometry& grid);

private:
  struct Face {
    int a, b;    // node indices
    double geo;  // dual face length / spacing
  };

  Eigen::SparseMatrix<double> assemble(const Vector& u) const;
  Vector solve_with(const Eigen::SparseLU<Eigen::SparseMatrix<double>>& lu,
                    const Vector& rhs_full) const;

  GridGeometry grid_;
  std::vector<std::pair<double, double>> sensors_;
  std::vector<Face> faces_;
  Matrix obs_op_;
  Vector boundary_weights_;
  Vector rhs_;
};

/// Exponential-kernel Gaussian prior on the grid plus a reference
/// log-conductivity (two plateaus), used by the PDE benchmark.
Vector elliptic_truth_field(const GridGeometry& grid);

} // namespace ces

#endif
