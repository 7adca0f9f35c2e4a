#include "ces/calibration.hpp"

#include <cmath>
#include <filesystem>

namespace ces {

namespace {

Matrix center_columns(const Matrix& x) {
  return x.colwise() - x.rowwise().mean();
}

Tensor stack_snapshots(const std::vector<Matrix>& snaps) {
  const std::size_t n = snaps.size();
  const std::size_t rows = snaps.front().rows(); // per-member dimension
  const std::size_t cols = snaps.front().cols(); // members
  Tensor t;
  t.shape = {n, cols, rows};
  t.data.resize(n * cols * rows);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t j = 0; j < cols; ++j)
      for (std::size_t k = 0; k < rows; ++k)
        t.data[(s * cols + j) * rows + k] = snaps[s](k, j);
  return t;
}

std::vector<Matrix> unstack_snapshots(const Tensor& t) {
  require(t.rank() == 3, "ensemble tensor must have rank 3");
  std::vector<Matrix> snaps(t.shape[0]);
  for (std::size_t s = 0; s < t.shape[0]; ++s) {
    Matrix m(t.shape[2], t.shape[1]);
    for (std::size_t j = 0; j < t.shape[1]; ++j)
      for (std::size_t k = 0; k < t.shape[2]; ++k)
        m(k, j) = t.data[(s * t.shape[1] + j) * t.shape[2] + k];
    snaps[s] = std::move(m);
  }
  return snaps;
}

} // namespace

Tensor CalibrationHistory::params_tensor() const {
  require(!params.empty(), "empty calibration history");
  return stack_snapshots(params);
}

Tensor CalibrationHistory::outputs_tensor() const {
  require(!outputs.empty(), "empty calibration history");
  return stack_snapshots(outputs);
}

Matrix eki_update(const Matrix& params, const Matrix& outputs,
                  const ObservationSet& obs, double h_inv,
                  const Matrix& perturbed_y) {
  const Eigen::Index j = params.cols();
  require(outputs.cols() == j && perturbed_y.cols() == j,
          "ensemble column counts disagree");
  require(outputs.rows() == obs.m() && perturbed_y.rows() == obs.m(),
          "observation dimension mismatch");
  require(j >= 2, "ensemble needs at least two members");

  Matrix du = center_columns(params);  // d x J
  Matrix dg = center_columns(outputs); // m x J
  Matrix cpp = dg * dg.transpose() / static_cast<double>(j);
  Matrix cup = du * dg.transpose() / static_cast<double>(j);

  Matrix gram = cpp + h_inv * obs.gamma_matrix();
  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success)
    throw NumericalError("ensemble Kalman gain system is not positive definite");
  Matrix innovation = perturbed_y - outputs; // m x J
  return params + cup * llt.solve(innovation);
}

EksStep eks_update(const Matrix& params, const Matrix& outputs,
                   const ObservationSet& obs, const GaussianMeasure& prior,
                   const CalibrationConfig& cfg, const Matrix& xi) {
  const Eigen::Index d = params.rows();
  const Eigen::Index j = params.cols();
  require(outputs.cols() == j && xi.rows() == d && xi.cols() == j,
          "ensemble shapes disagree");
  require(outputs.rows() == obs.m(), "observation dimension mismatch");
  require(prior.dim() == d, "prior dimension mismatch");
  require(j >= 2, "ensemble needs at least two members");

  Matrix dg = center_columns(outputs); // m x J
  // W(k, l) = <G_k - Gbar, y - G_l>_Gamma
  Matrix resid = (-outputs).colwise() + obs.y(); // m x J
  Matrix ginv_resid(obs.m(), j);
  for (Eigen::Index c = 0; c < j; ++c)
    ginv_resid.col(c) = obs.apply_gamma_inv(resid.col(c));
  Matrix w = dg.transpose() * ginv_resid; // J x J
  Matrix drift = params * w / static_cast<double>(j); // d x J

  double max_drift = 0.0;
  for (Eigen::Index c = 0; c < j; ++c)
    max_drift = std::max(max_drift, drift.col(c).norm());
  double dt = cfg.eks_delta0 / (max_drift + cfg.eks_dt_eps);
  dt = std::min(dt, cfg.eks_dt_max);

  Matrix du = center_columns(params);
  Matrix cu = du * du.transpose() / static_cast<double>(j); // d x d

  // (I + dt C(u) C0^{-1}) u* = u + dt * drift, one factorization for all
  // members.
  Matrix sys = Matrix::Identity(d, d) + dt * cu * prior.precision_matrix();
  Eigen::PartialPivLU<Matrix> lu(sys);
  Matrix u_star = lu.solve(params + dt * drift);

  // Additive noise sqrt(2 dt C(u)) xi via symmetric square root; clamp
  // negative eigenvalues from rank deficiency to zero.
  Eigen::SelfAdjointEigenSolver<Matrix> es(cu);
  if (es.info() != Eigen::Success)
    throw NumericalError("ensemble covariance eigendecomposition failed");
  Vector sqrt_ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  Matrix root = es.eigenvectors() * sqrt_ev.asDiagonal() *
                es.eigenvectors().transpose();

  EksStep step;
  step.params = u_star + std::sqrt(2.0 * dt) * (root * xi);
  step.dt = dt;
  return step;
}

CalibrationHistory run_calibration(const ForwardModel& model,
                                   const ObservationSet& obs,
                                   const GaussianMeasure& prior,
                                   const CalibrationConfig& cfg) {
  require(cfg.ensemble_size >= 2, "ensemble needs at least two members");
  require(cfg.iterations >= 1, "at least one iteration is required");
  require(prior.dim() == model.input_dim(), "prior dimension mismatch");
  require(obs.m() == model.output_dim(), "observation dimension mismatch");

  const int d = model.input_dim();
  const int m = model.output_dim();
  const int j = cfg.ensemble_size;
  const int n = cfg.iterations;

  // One stream per member: the initial draw and every later perturbation of
  // member k come from stream (seed, k).
  std::vector<RngStream> streams;
  streams.reserve(j);
  for (int k = 0; k < j; ++k) streams.emplace_back(cfg.seed, k);

  Matrix params(d, j);
  for (int k = 0; k < j; ++k) params.col(k) = prior.sample(streams[k]);

  auto evaluate_all = [&](const Matrix& u) {
    Matrix g(m, j);
    for (int k = 0; k < j; ++k) g.col(k) = model.evaluate(u.col(k));
    return g;
  };

  CalibrationHistory hist;
  hist.params.push_back(params);
  hist.outputs.push_back(evaluate_all(params));

  const double h_inv = static_cast<double>(n);
  for (int it = 0; it < n; ++it) {
    if (cfg.method == CalibrationMethod::Eki) {
      Matrix perturbed(m, j);
      for (int k = 0; k < j; ++k) {
        perturbed.col(k) = obs.y();
        if (cfg.eki_perturb_obs)
          perturbed.col(k) += obs.sample_noise(streams[k], std::sqrt(h_inv));
      }
      params = eki_update(params, hist.outputs.back(), obs, h_inv, perturbed);
    } else {
      Matrix xi(d, j);
      for (int k = 0; k < j; ++k) xi.col(k) = streams[k].normal_vector(d);
      EksStep step =
          eks_update(params, hist.outputs.back(), obs, prior, cfg, xi);
      params = std::move(step.params);
      hist.timesteps.push_back(step.dt);
    }
    hist.params.push_back(params);
    hist.outputs.push_back(evaluate_all(params));
  }
  return hist;
}

void save_calibration(const std::string& dir, const CalibrationHistory& hist) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  save_tensor((fs::path(dir) / "ensemble_params.tnsr").string(),
              hist.params_tensor());
  save_tensor((fs::path(dir) / "ensemble_outputs.tnsr").string(),
              hist.outputs_tensor());
}

CalibrationHistory load_calibration(const std::string& dir) {
  namespace fs = std::filesystem;
  CalibrationHistory hist;
  hist.params = unstack_snapshots(
      load_tensor((fs::path(dir) / "ensemble_params.tnsr").string()));
  hist.outputs = unstack_snapshots(
      load_tensor((fs::path(dir) / "ensemble_outputs.tnsr").string()));
  require(hist.params.size() == hist.outputs.size(),
          "ensemble tensors disagree on iteration count");
  return hist;
}

} // namespace ces
