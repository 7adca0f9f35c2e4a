#ifndef CES_CALIBRATION_HPP
#define CES_CALIBRATION_HPP

#include <string>
#include <vector>

#include "ces/forward_model.hpp"
#include "ces/gaussian_measure.hpp"
#include "ces/tensor.hpp"

namespace ces {

enum class CalibrationMethod { Eki, Eks };

struct CalibrationConfig {
  CalibrationMethod method = CalibrationMethod::Eki;
  int ensemble_size = 100;
  int iterations = 50;
  std::uint64_t seed = 0;
  /// EKI observation perturbation covariance: Gamma when true, zero when
  /// false (deterministic transport, the collapsing variant). The
  /// perturbation is scaled by 1/sqrt(h) with h = 1/iterations.
  bool eki_perturb_obs = false;
  /// EKS adaptive step: dt = delta0 / (max_j ||drift_j|| + eps), capped.
  double eks_delta0 = 1.0;
  double eks_dt_max = 1.0;
  double eks_dt_eps = 1e-10;
};

/// Snapshots of params (d x J) and outputs (m x J) per iteration, including
/// the initial ensemble: iterations N produce N+1 entries of each.
struct CalibrationHistory {
  std::vector<Matrix> params;
  std::vector<Matrix> outputs;
  std::vector<double> timesteps; // EKS only, one per update

  /// (N+1, J, d) and (N+1, J, m) tensors, member-major within a snapshot.
  Tensor params_tensor() const;
  Tensor outputs_tensor() const;

  const Matrix& final_params() const { return params.back(); }
};

/// One ensemble Kalman inversion update. params is d x J, outputs m x J,
/// perturbed_y m x J (one perturbed copy of the data per member), h_inv the
/// inflation of Gamma in the Kalman gain.
Matrix eki_update(const Matrix& params, const Matrix& outputs,
                  const ObservationSet& obs, double h_inv,
                  const Matrix& perturbed_y);

struct EksStep {
  Matrix params;
  double dt = 0.0;
};

/// One ensemble Kalman sampler update, linearly implicit in the prior
/// relaxation: the same d x d system is factorized once and applied to every
/// member, then sqrt(2 dt C(u)) xi noise is added (xi is d x J standard
/// normal). Uses the unperturbed data y.
EksStep eks_update(const Matrix& params, const Matrix& outputs,
                   const ObservationSet& obs, const GaussianMeasure& prior,
                   const CalibrationConfig& cfg, const Matrix& xi);

/// Run the configured method from a prior ensemble. Evaluates the forward
/// model exactly J times per recorded snapshot.
CalibrationHistory run_calibration(const ForwardModel& model,
                                   const ObservationSet& obs,
                                   const GaussianMeasure& prior,
                                   const CalibrationConfig& cfg);

/// Persist params/outputs tensors into dir (ensemble_params.tnsr,
/// ensemble_outputs.tnsr).
void save_calibration(const std::string& dir, const CalibrationHistory& hist);
CalibrationHistory load_calibration(const std::string& dir);

} // namespace ces

#endif
