#include "ces/elliptic.hpp"

#include <cmath>
#include <utility>

namespace ces {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<std::pair<double, double>> default_sensors() {
  std::vector<std::pair<double, double>> s;
  for (int j = 1; j <= 5; ++j)
    for (int i = 1; i <= 5; ++i)
      s.emplace_back(i / 6.0, j / 6.0);
  return s;
}

} // namespace

EllipticModel::EllipticModel(GridGeometry grid)
    : EllipticModel(grid, default_sensors()) {}

EllipticModel::EllipticModel(GridGeometry grid,
                             std::vector<std::pair<double, double>> sensors)
    : grid_(grid), sensors_(std::move(sensors)) {
  require(grid_.n >= 3, "grid must have at least 3 nodes per side");
  require(!sensors_.empty(), "at least one sensor is required");

  const int n = grid_.n;
  const double h = grid_.spacing();

  // Faces of the dual (control-volume) mesh. A face between two adjacent
  // nodes has length h in the interior and h/2 along the boundary strip.
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix + 1 < n; ++ix) {
      double len = (iy == 0 || iy == n - 1) ? 0.5 * h : h;
      faces_.push_back({grid_.index(ix, iy), grid_.index(ix + 1, iy), len / h});
    }
  for (int iy = 0; iy + 1 < n; ++iy)
    for (int ix = 0; ix < n; ++ix) {
      double len = (ix == 0 || ix == n - 1) ? 0.5 * h : h;
      faces_.push_back({grid_.index(ix, iy), grid_.index(ix, iy + 1), len / h});
    }

  // Control-volume areas: h^2 interior, h^2/2 edges, h^2/4 corners.
  rhs_ = Vector::Zero(grid_.dim());
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix) {
      double area = h * h;
      if (ix == 0 || ix == n - 1) area *= 0.5;
      if (iy == 0 || iy == n - 1) area *= 0.5;
      rhs_[grid_.index(ix, iy)] = area * forcing(grid_.x(ix), grid_.y(iy));
    }

  // Trapezoid quadrature along the boundary; corners pick up h/2 from each
  // of their two sides. Total weight is the perimeter, 4.
  boundary_weights_ = Vector::Zero(grid_.dim());
  for (int i = 0; i < n; ++i) {
    for (int node : {grid_.index(i, 0), grid_.index(i, n - 1),
                     grid_.index(0, i), grid_.index(n - 1, i)}) {
      bool corner_side = (i == 0 || i == n - 1);
      boundary_weights_[node] += corner_side ? 0.5 * h : h;
    }
  }

  obs_op_ = Matrix::Zero(static_cast<Eigen::Index>(sensors_.size()), grid_.dim());
  for (std::size_t s = 0; s < sensors_.size(); ++s) {
    auto [x, y] = sensors_[s];
    require(x >= 0.0 && x <= 1.0 && y >= 0.0 && y <= 1.0,
            "sensor outside the unit square");
    int ix = std::min(static_cast<int>(x / h), n - 2);
    int iy = std::min(static_cast<int>(y / h), n - 2);
    double tx = x / h - ix;
    double ty = y / h - iy;
    obs_op_(s, grid_.index(ix, iy)) = (1 - tx) * (1 - ty);
    obs_op_(s, grid_.index(ix + 1, iy)) = tx * (1 - ty);
    obs_op_(s, grid_.index(ix, iy + 1)) = (1 - tx) * ty;
    obs_op_(s, grid_.index(ix + 1, iy + 1)) = tx * ty;
  }
}

double EllipticModel::forcing(double x, double y) {
  static const double cx[4] = {0.3, 0.7, 0.7, 0.3};
  static const double cy[4] = {0.3, 0.3, 0.7, 0.7};
  static const double w[4] = {2.0, -3.0, 3.0, -2.0};
  const double sd = 0.05;
  double f = 0.0;
  for (int i = 0; i < 4; ++i) {
    double dx = x - cx[i], dy = y - cy[i];
    f += w[i] / (2.0 * kPi * sd * sd) *
         std::exp(-(dx * dx + dy * dy) / (2.0 * sd * sd));
  }
  return f;
}

Eigen::SparseMatrix<double> EllipticModel::assemble(const Vector& u) const {
  const int d = grid_.dim();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(6 * faces_.size() + 4 * grid_.n);
  for (const Face& f : faces_) {
    double ka = std::exp(u[f.a]), kb = std::exp(u[f.b]);
    double t = f.geo * 2.0 * ka * kb / (ka + kb);
    trip.emplace_back(f.a, f.a, t);
    trip.emplace_back(f.b, f.b, t);
    trip.emplace_back(f.a, f.b, -t);
    trip.emplace_back(f.b, f.a, -t);
  }
  for (int i = 0; i < d; ++i) {
    if (boundary_weights_[i] == 0.0) continue;
    trip.emplace_back(i, d, boundary_weights_[i]);
    trip.emplace_back(d, i, boundary_weights_[i]);
  }
  Eigen::SparseMatrix<double> m(d + 1, d + 1);
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

Vector EllipticModel::solve_pressure(const Vector& u) const {
  require(u.size() == grid_.dim(), "parameter dimension mismatch");
  for (Eigen::Index i = 0; i < u.size(); ++i)
    if (!std::isfinite(u[i]))
      throw SolverFailure("non-finite log-conductivity", u);

  Eigen::SparseMatrix<double> m = assemble(u);
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(m);
  if (lu.info() != Eigen::Success)
    throw SolverFailure("sparse factorization of the flow system failed", u);
  Vector b = Vector::Zero(grid_.dim() + 1);
  b.head(grid_.dim()) = rhs_;
  Vector x = lu.solve(b);
  if (lu.info() != Eigen::Success || !x.allFinite())
    throw SolverFailure("flow solve produced a non-finite pressure", u);
  count_solve();
  return x.head(grid_.dim());
}

Vector EllipticModel::evaluate(const Vector& u) const {
  return obs_op_ * solve_pressure(u);
}

Vector EllipticModel::grad_potential(const Vector& u, const ObservationSet& obs) const {
  require(u.size() == grid_.dim(), "parameter dimension mismatch");
  require(obs.m() == output_dim(), "observation dimension mismatch");
  for (Eigen::Index i = 0; i < u.size(); ++i)
    if (!std::isfinite(u[i]))
      throw SolverFailure("non-finite log-conductivity", u);

  const int d = grid_.dim();
  Eigen::SparseMatrix<double> m = assemble(u);
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(m);
  if (lu.info() != Eigen::Success)
    throw SolverFailure("sparse factorization of the flow system failed", u);

  Vector b = Vector::Zero(d + 1);
  b.head(d) = rhs_;
  Vector x = lu.solve(b);
  if (lu.info() != Eigen::Success || !x.allFinite())
    throw SolverFailure("flow solve produced a non-finite pressure", u);
  count_solve();
  Vector p = x.head(d);

  // Adjoint solve against the misfit; the system is symmetric so the same
  // factorization serves.
  Vector r = obs.y() - obs_op_ * p;
  Vector adj_rhs = Vector::Zero(d + 1);
  adj_rhs.head(d) = obs_op_.transpose() * obs.apply_gamma_inv(r);
  Vector qx = lu.solve(adj_rhs);
  if (lu.info() != Eigen::Success || !qx.allFinite())
    throw SolverFailure("adjoint flow solve failed", u);
  count_solve();
  Vector q = qx.head(d);

  // dPhi/du_i = q^T (dA/du_i) p accumulated face by face. With the harmonic
  // face value H(ka, kb) = 2 ka kb / (ka + kb) and k = exp(u):
  //   dH/dka * dka/dua = 2 kb^2 ka / (ka + kb)^2.
  Vector g = Vector::Zero(d);
  for (const Face& f : faces_) {
    double ka = std::exp(u[f.a]), kb = std::exp(u[f.b]);
    double denom = (ka + kb) * (ka + kb);
    double dp = p[f.a] - p[f.b];
    double dq = q[f.a] - q[f.b];
    double common = f.geo * 2.0 * ka * kb * dp * dq / denom;
    g[f.a] += common * kb;
    g[f.b] += common * ka;
  }
  return g;
}

Vector EllipticModel::prolong(const Vector& coarse, const GridGeometry& grid) {
  require(coarse.size() == grid.dim(), "field does not match the grid");
  const int n = grid.n;
  const int nf = 2 * n - 1;
  GridGeometry fine{nf};
  Vector out(fine.dim());
  for (int iy = 0; iy < nf; ++iy)
    for (int ix = 0; ix < nf; ++ix) {
      int cx = ix / 2, cy = iy / 2;
      bool hx = ix % 2 != 0, hy = iy % 2 != 0;
      double v;
      if (!hx && !hy) {
        v = coarse[grid.index(cx, cy)];
      } else if (hx && !hy) {
        v = 0.5 * (coarse[grid.index(cx, cy)] + coarse[grid.index(cx + 1, cy)]);
      } else if (!hx && hy) {
        v = 0.5 * (coarse[grid.index(cx, cy)] + coarse[grid.index(cx, cy + 1)]);
      } else {
        v = 0.25 * (coarse[grid.index(cx, cy)] + coarse[grid.index(cx + 1, cy)] +
                    coarse[grid.index(cx, cy + 1)] +
                    coarse[grid.index(cx + 1, cy + 1)]);
      }
      out[fine.index(ix, iy)] = v;
    }
  return out;
}

Vector elliptic_truth_field(const GridGeometry& grid) {
  // Two smooth bumps on a flat background: a positive plateau in the lower
  // left and a negative one in the upper right.
  Vector u(grid.dim());
  for (int iy = 0; iy < grid.n; ++iy)
    for (int ix = 0; ix < grid.n; ++ix) {
      double x = grid.x(ix), y = grid.y(iy);
      double b1 = std::exp(-((x - 0.3) * (x - 0.3) + (y - 0.3) * (y - 0.3)) /
                           (2.0 * 0.15 * 0.15));
      double b2 = std::exp(-((x - 0.7) * (x - 0.7) + (y - 0.7) * (y - 0.7)) /
                           (2.0 * 0.15 * 0.15));
      u[grid.index(ix, iy)] = 2.0 * b1 - 2.0 * b2;
    }
  return u;
}

} // namespace ces
