#ifndef CES_FORWARD_MODEL_HPP
#define CES_FORWARD_MODEL_HPP

#include <atomic>
#include <memory>
#include <string>

#include "ces/random.hpp"
#include "ces/types.hpp"

namespace ces {

/// Observations y with Gaussian noise covariance Gamma, either
/// sigma^2 I or a full SPD matrix.
class ObservationSet {
public:
  static ObservationSet iso(Vector y, double sigma2);
  static ObservationSet full(Vector y, Matrix gamma);

  const Vector& y() const { return y_; }
  int m() const { return static_cast<int>(y_.size()); }
  bool is_scalar() const { return scalar_; }
  double sigma2() const;

  /// Gamma^{-1} r.
  Vector apply_gamma_inv(const Vector& r) const;
  /// r^T Gamma^{-1} r.
  double sq_norm_gamma(const Vector& r) const;
  /// Draw scale * Gamma^{1/2} z with z iid standard normal.
  Vector sample_noise(RngStream& rng, double scale = 1.0) const;
  /// Dense Gamma.
  Matrix gamma_matrix() const;

private:
  ObservationSet() = default;
  Vector y_;
  bool scalar_ = true;
  double sigma2_ = 1.0;
  Matrix gamma_;
  Eigen::LLT<Matrix> gamma_llt_;
};

/// Raised when a forward solve fails; carries the offending parameter.
class SolverFailure : public NumericalError {
public:
  SolverFailure(const std::string& msg, Vector u)
      : NumericalError(msg), offending_u(std::move(u)) {}
  Vector offending_u;
};

/// Deterministic parameter-to-observation map G. Forward evaluations are
/// pure after construction and safe to run concurrently; the solve counter
/// is the only mutable state.
class ForwardModel {
public:
  virtual ~ForwardModel() = default;

  virtual int input_dim() const = 0;
  virtual int output_dim() const = 0;
  virtual bool has_exact_gradient() const { return false; }

  virtual Vector evaluate(const Vector& u) const = 0;

  /// Gradient of the potential 0.5 ||y - G(u)||^2_Gamma with respect to u.
  virtual Vector grad_potential(const Vector& u, const ObservationSet& obs) const;

  /// Expensive-solve counter (forward and adjoint solves for PDE models,
  /// evaluations otherwise).
  long solve_count() const { return solves_.load(); }
  void reset_solve_count() const { solves_.store(0); }

protected:
  void count_solve(long n = 1) const { solves_.fetch_add(n); }

private:
  mutable std::atomic<long> solves_{0};
};

/// G(u) = A u.
class LinearModel : public ForwardModel {
public:
  explicit LinearModel(Matrix a);

  int input_dim() const override { return static_cast<int>(a_.cols()); }
  int output_dim() const override { return static_cast<int>(a_.rows()); }
  bool has_exact_gradient() const override { return true; }

  Vector evaluate(const Vector& u) const override;
  Vector grad_potential(const Vector& u, const ObservationSet& obs) const override;

  const Matrix& matrix() const { return a_; }

private:
  Matrix a_;
};

/// Banana-biscuit-doughnut map G(u) = A S(u) with S(u)_k = u_k for odd k and
/// u_k^2 for even k (1-based).
class BbdModel : public ForwardModel {
public:
  explicit BbdModel(Matrix a);

  int input_dim() const override { return static_cast<int>(a_.cols()); }
  int output_dim() const override { return static_cast<int>(a_.rows()); }
  bool has_exact_gradient() const override { return true; }

  Vector evaluate(const Vector& u) const override;
  Vector grad_potential(const Vector& u, const ObservationSet& obs) const override;

  static Vector squash(const Vector& u);
  const Matrix& matrix() const { return a_; }

private:
  Matrix a_;
};

double potential(const ForwardModel& model, const Vector& u,
                 const ObservationSet& obs);
Vector grad_potential(const ForwardModel& model, const Vector& u,
                      const ObservationSet& obs);

/// Analytic posterior of the linear Gaussian problem:
///   Sigma^{-1} = Sigma0^{-1} + A^T Gamma^{-1} A,  mu = Sigma A^T Gamma^{-1} y.
struct GaussianPosterior {
  Vector mean;
  Matrix cov;
};
GaussianPosterior linear_gaussian_posterior(const Matrix& a, const Matrix& gamma,
                                            const Matrix& sigma0,
                                            const Vector& y);

struct NoiseSpec {
  enum class Kind { Absolute, Snr } kind = Kind::Absolute;
  double value = 1.0; // sigma_eta for Absolute, the ratio for Snr

  static NoiseSpec absolute(double sigma) { return {Kind::Absolute, sigma}; }
  static NoiseSpec snr(double ratio) { return {Kind::Snr, ratio}; }
};

/// y = G(u_true) + eta with eta ~ N(0, sigma^2 I). For an SNR spec,
/// sigma^2 = mean_i G(u_true)_i^2 / ratio (power convention).
ObservationSet generate_data(const ForwardModel& model, const Vector& u_true,
                             const NoiseSpec& noise, std::uint64_t seed);

/// m x d matrix with iid unif[0,1] entries, pinned to the seed.
Matrix random_uniform_matrix(int rows, int cols, std::uint64_t seed);

} // namespace ces

#endif
