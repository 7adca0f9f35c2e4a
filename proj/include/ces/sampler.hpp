#ifndef CES_SAMPLER_HPP
#define CES_SAMPLER_HPP

#include <string>
#include <vector>

#include "ces/autoencoder.hpp"
#include "ces/emulator.hpp"
#include "ces/forward_model.hpp"
#include "ces/gaussian_measure.hpp"

namespace ces {

/// Target seen by the MCMC kernels. Kernels always run against a standard
/// Gaussian reference: full-space targets present whitened coordinates,
/// the latent target presents autoencoder coordinates.
class SamplerTarget {
public:
  virtual ~SamplerTarget() = default;

  virtual int dim() const = 0;
  virtual double potential(const Vector& x) const = 0;
  virtual Vector grad_potential(const Vector& x) const = 0;
  virtual bool has_gradient() const { return true; }

  /// Map a kernel state to original parameter coordinates for recording.
  virtual Vector to_original(const Vector& x) const = 0;

  /// Latent-map volume bookkeeping; zero for full-space targets.
  virtual bool has_volume() const { return false; }
  virtual double log_volume_accept(const Vector& cur,
                                   const Vector& prop) const {
    (void)cur;
    (void)prop;
    return 0.0;
  }
  virtual double log_weight(const Vector& x) const {
    (void)x;
    return 0.0;
  }

  /// Expensive forward-solver work behind this target, if any.
  virtual long solve_count() const { return 0; }
};

/// Whitened view of the true posterior: Phi(C^{1/2} x) with the reference
/// model supplying potentials and (when available) adjoint gradients.
class ExactTarget : public SamplerTarget {
public:
  ExactTarget(const ForwardModel& model, const ObservationSet& obs,
              const GaussianMeasure& prior);

  int dim() const override { return model_->input_dim(); }
  double potential(const Vector& x) const override;
  Vector grad_potential(const Vector& x) const override;
  bool has_gradient() const override { return model_->has_exact_gradient(); }
  Vector to_original(const Vector& x) const override;
  long solve_count() const override { return model_->solve_count(); }

  /// Original coordinates -> kernel coordinates.
  Vector whiten(const Vector& u) const;

private:
  const ForwardModel* model_;
  const ObservationSet* obs_;
  const GaussianMeasure* prior_;
};

/// Whitened view through the surrogate; never touches the true model.
class EmulatedTarget : public SamplerTarget {
public:
  EmulatedTarget(const Emulator& emulator, const GaussianMeasure& prior);

  int dim() const override { return emulator_->input_dim(); }
  double potential(const Vector& x) const override;
  Vector grad_potential(const Vector& x) const override;
  Vector to_original(const Vector& x) const override;
  Vector whiten(const Vector& u) const;

private:
  const Emulator* emulator_;
  const GaussianMeasure* prior_;
};

/// Latent-space view: the kernel walks the autoencoder coordinates, the
/// surrogate supplies the misfit through the decoder.
class DreamTarget : public SamplerTarget {
public:
  DreamTarget(const Emulator& emulator, const Autoencoder& ae,
              const GaussianMeasure& prior);

  int dim() const override { return ae_->latent_dim(); }
  double potential(const Vector& z) const override;
  Vector grad_potential(const Vector& z) const override;
  Vector to_original(const Vector& z) const override;

  bool has_volume() const override { return true; }
  double log_volume_accept(const Vector& cur, const Vector& prop) const override;
  double log_weight(const Vector& z) const override;

  /// Original coordinates -> latent coordinates (whiten then encode).
  Vector embed(const Vector& u) const;

private:
  const Emulator* emulator_;
  const Autoencoder* ae_;
  const GaussianMeasure* prior_;
};

/// Phi == 0: the chain must preserve the prior exactly.
class PriorOnlyTarget : public SamplerTarget {
public:
  explicit PriorOnlyTarget(const GaussianMeasure& prior) : prior_(&prior) {}
  int dim() const override { return prior_->dim(); }
  double potential(const Vector&) const override { return 0.0; }
  Vector grad_potential(const Vector& x) const override {
    return Vector::Zero(x.size());
  }
  Vector to_original(const Vector& x) const override {
    return prior_->apply_sqrt(x);
  }

private:
  const GaussianMeasure* prior_;
};

enum class SamplerKernel { Pcn, InfMala, InfHmc };
enum class VolumeMode { Accept, Reweight, None };

SamplerKernel kernel_from_string(const std::string& name);
std::string kernel_name(SamplerKernel k);
VolumeMode volume_mode_from_string(const std::string& name);
std::string volume_mode_name(VolumeMode m);

struct ChainConfig {
  SamplerKernel kernel = SamplerKernel::Pcn;
  double step = 0.1;      // h for pcn / mala, epsilon for hmc
  int leapfrog_steps = 5; // hmc only
  double alpha = 1.0;     // gradient weight; 0 recovers pcn dynamics
  int iterations = 6000;
  int burn_in = 1000;
  std::uint64_t seed = 0;
  VolumeMode volume_mode = VolumeMode::Accept;
  bool tune = false;
  double tune_target = 0.65;
  double tune_gain = 0.4;
  int tune_window = 100;
};

/// Kernel state with cached potential and gradient at the current point.
struct KernelState {
  Vector x;
  double phi = 0.0;
  Vector grad;
  bool has_grad = false;
};

KernelState make_state(const SamplerTarget& t, const Vector& x);

struct StepInfo {
  bool accepted = false;
  bool divergent = false;
  double accept_prob = 0.0; // min(1, exp(log alpha))
};

StepInfo pcn_step(const SamplerTarget& t, KernelState& s, double h,
                  VolumeMode mode, RngStream& rng);
StepInfo inf_mala_step(const SamplerTarget& t, KernelState& s, double h,
                       double alpha, VolumeMode mode, RngStream& rng);
StepInfo inf_hmc_step(const SamplerTarget& t, KernelState& s, double eps,
                      int leapfrog_steps, double alpha, VolumeMode mode,
                      RngStream& rng);

/// One split-step integrator update (half kick, exact rotation, half kick);
/// exposed for reversibility and energy-order checks.
void leapfrog_step(const SamplerTarget& t, double eps, double alpha, Vector& x,
                   Vector& v);

struct ChainRecord {
  Matrix samples;                 // d_original x kept, post burn-in
  std::vector<double> potentials; // target potential per kept sample
  std::vector<double> log_weights; // reweight mode only, per kept sample
  std::vector<char> accepted;     // per iteration, including burn-in
  std::vector<char> divergent;    // per iteration
  double acceptance_rate = 0.0;   // post burn-in
  double seconds = 0.0;
  long solver_calls = 0;          // expensive model solves during the run
  long iterations_run = 0;        // total iterations, including burn-in
  double final_step = 0.0;

  int kept() const { return static_cast<int>(samples.cols()); }
};

/// Run a chain from an initial point given in kernel coordinates.
ChainRecord run_chain(const SamplerTarget& target, const ChainConfig& cfg,
                      const Vector& initial);

/// Robbins-Monro step-size search toward the target acceptance rate;
/// blockwise updates on log step, stopping inside [0.6, 0.7].
double tune_step_size(const SamplerTarget& target, const ChainConfig& cfg,
                      const Vector& initial);

/// chain_<tag>.tnsr (kept x d samples), companion tensors, and a JSON
/// sidecar chain_<tag>.json with rates, timing, and solver counts.
void save_chain(const std::string& dir, const std::string& tag,
                const ChainRecord& record, const ChainConfig& cfg);
ChainRecord load_chain(const std::string& dir, const std::string& tag);

} // namespace ces

#endif
