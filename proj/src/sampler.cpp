#include "ces/sampler.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ces/tensor.hpp"

namespace ces {

ExactTarget::ExactTarget(const ForwardModel& model, const ObservationSet& obs,
                         const GaussianMeasure& prior)
    : model_(&model), obs_(&obs), prior_(&prior) {
  require(prior.dim() == model.input_dim(), "prior dimension mismatch");
  require(obs.m() == model.output_dim(), "observation dimension mismatch");
}

double ExactTarget::potential(const Vector& x) const {
  return ces::potential(*model_, prior_->apply_sqrt(x), *obs_);
}

Vector ExactTarget::grad_potential(const Vector& x) const {
  // Chain rule through u = C^{1/2} x with symmetric C^{1/2}.
  return prior_->apply_sqrt(
      model_->grad_potential(prior_->apply_sqrt(x), *obs_));
}

Vector ExactTarget::to_original(const Vector& x) const {
  return prior_->apply_sqrt(x);
}

Vector ExactTarget::whiten(const Vector& u) const {
  return prior_->apply_inv_sqrt(u);
}

EmulatedTarget::EmulatedTarget(const Emulator& emulator,
                               const GaussianMeasure& prior)
    : emulator_(&emulator), prior_(&prior) {
  require(prior.dim() == emulator.input_dim(),
          "prior dimension does not match the surrogate");
}

double EmulatedTarget::potential(const Vector& x) const {
  return emulator_->potential(x);
}

Vector EmulatedTarget::grad_potential(const Vector& x) const {
  return emulator_->grad_potential(x);
}

Vector EmulatedTarget::to_original(const Vector& x) const {
  return prior_->apply_sqrt(x);
}

Vector EmulatedTarget::whiten(const Vector& u) const {
  return prior_->apply_inv_sqrt(u);
}

DreamTarget::DreamTarget(const Emulator& emulator, const Autoencoder& ae,
                         const GaussianMeasure& prior)
    : emulator_(&emulator), ae_(&ae), prior_(&prior) {
  require(ae.full_dim() == emulator.input_dim(),
          "autoencoder and surrogate dimensions disagree");
  require(prior.dim() == ae.full_dim(), "prior dimension mismatch");
}

double DreamTarget::potential(const Vector& z) const {
  return emulator_->potential(ae_->decode(z));
}

Vector DreamTarget::grad_potential(const Vector& z) const {
  // Reverse sweep through the decoder with the surrogate misfit cotangent.
  Vector u = ae_->decode(z);
  Vector cot = emulator_->grad_potential(u);
  return ae_->decoder().vjp(z, cot);
}

Vector DreamTarget::to_original(const Vector& z) const {
  return prior_->apply_sqrt(ae_->decode(z));
}

double DreamTarget::log_volume_accept(const Vector& cur,
                                      const Vector& prop) const {
  // Volume element of decode-at-proposal times encode-at-current-state.
  return ae_->log_volume_decoder(prop) +
         ae_->log_volume_encoder(ae_->decode(cur));
}

double DreamTarget::log_weight(const Vector& z) const {
  return ae_->log_volume_decoder(z) +
         ae_->log_volume_encoder(ae_->decode(z));
}

Vector DreamTarget::embed(const Vector& u) const {
  return ae_->encode(prior_->apply_inv_sqrt(u));
}

SamplerKernel kernel_from_string(const std::string& name) {
  if (name == "pcn") return SamplerKernel::Pcn;
  if (name == "mala") return SamplerKernel::InfMala;
  if (name == "hmc") return SamplerKernel::InfHmc;
  throw ConfigError("unknown sampler kernel: " + name);
}

std::string kernel_name(SamplerKernel k) {
  switch (k) {
    case SamplerKernel::Pcn: return "pcn";
    case SamplerKernel::InfMala: return "mala";
    case SamplerKernel::InfHmc: return "hmc";
  }
  throw ConfigError("unknown sampler kernel");
}

VolumeMode volume_mode_from_string(const std::string& name) {
  if (name == "accept") return VolumeMode::Accept;
  if (name == "reweight") return VolumeMode::Reweight;
  if (name == "none") return VolumeMode::None;
  throw ConfigError("unknown volume mode: " + name);
}

std::string volume_mode_name(VolumeMode m) {
  switch (m) {
    case VolumeMode::Accept: return "accept";
    case VolumeMode::Reweight: return "reweight";
    case VolumeMode::None: return "none";
  }
  throw ConfigError("unknown volume mode");
}

KernelState make_state(const SamplerTarget& t, const Vector& x) {
  require(x.size() == t.dim(), "initial state dimension mismatch");
  KernelState s;
  s.x = x;
  s.phi = t.potential(x);
  if (!std::isfinite(s.phi))
    throw NumericalError("initial state has non-finite potential");
  return s;
}

namespace {

double contraction(double h) {
  if (h <= 0.0 || h >= 4.0)
    throw ConfigError("step size must lie in (0, 4) for the proposal mix");
  return (1.0 - h / 4.0) / (1.0 + h / 4.0);
}

bool finite(const Vector& v) { return v.allFinite(); }

const Vector& ensure_grad(const SamplerTarget& t, KernelState& s) {
  if (!s.has_grad) {
    s.grad = t.grad_potential(s.x);
    s.has_grad = true;
  }
  return s.grad;
}

StepInfo metropolis(const SamplerTarget& t, KernelState& s, Vector&& prop,
                    double phi_prop, Vector&& grad_prop, bool grad_valid,
                    double log_alpha, RngStream& rng) {
  StepInfo info;
  if (!std::isfinite(log_alpha) || !std::isfinite(phi_prop) || !finite(prop)) {
    info.divergent = true;
    info.accept_prob = 0.0;
    return info;
  }
  info.accept_prob = std::min(1.0, std::exp(log_alpha));
  if (rng.uniform() < info.accept_prob) {
    info.accepted = true;
    s.x = std::move(prop);
    s.phi = phi_prop;
    s.grad = std::move(grad_prop);
    s.has_grad = grad_valid;
  }
  return info;
}

} // namespace

StepInfo pcn_step(const SamplerTarget& t, KernelState& s, double h,
                  VolumeMode mode, RngStream& rng) {
  const double rho = contraction(h);
  const double beta = std::sqrt(1.0 - rho * rho);
  Vector prop = rho * s.x + beta * rng.normal_vector(t.dim());
  double phi_prop = t.potential(prop);
  double log_alpha = s.phi - phi_prop;
  if (t.has_volume() && mode == VolumeMode::Accept)
    log_alpha += t.log_volume_accept(s.x, prop);
  return metropolis(t, s, std::move(prop), phi_prop, Vector(), false, log_alpha,
                    rng);
}

StepInfo inf_mala_step(const SamplerTarget& t, KernelState& s, double h,
                       double alpha, VolumeMode mode, RngStream& rng) {
  const double rho = contraction(h);
  const double beta = std::sqrt(1.0 - rho * rho);
  const double sh = std::sqrt(h);
  const Vector& g = ensure_grad(t, s);

  Vector v_fwd = rng.normal_vector(t.dim()) - (alpha * sh / 2.0) * g;
  Vector prop = rho * s.x + beta * v_fwd;
  double phi_prop = t.potential(prop);
  Vector g_prop = t.grad_potential(prop);
  Vector v_rev = (s.x - rho * prop) / beta;

  // log kappa(from, to) = -Phi(from) - (alpha^2 h / 8) |g(from)|^2
  //                       - (alpha sqrt(h)/2) <g(from), v(from, to)>.
  double log_k_fwd = -s.phi - (alpha * alpha * h / 8.0) * g.squaredNorm() -
                     (alpha * sh / 2.0) * g.dot(v_fwd);
  double log_k_rev = -phi_prop -
                     (alpha * alpha * h / 8.0) * g_prop.squaredNorm() -
                     (alpha * sh / 2.0) * g_prop.dot(v_rev);
  double log_alpha_acc = log_k_rev - log_k_fwd;
  if (t.has_volume() && mode == VolumeMode::Accept)
    log_alpha_acc += t.log_volume_accept(s.x, prop);
  if (!finite(g_prop)) {
    StepInfo info;
    info.divergent = true;
    return info;
  }
  return metropolis(t, s, std::move(prop), phi_prop, std::move(g_prop), true,
                    log_alpha_acc, rng);
}

void leapfrog_step(const SamplerTarget& t, double eps, double alpha, Vector& x,
                   Vector& v) {
  const double c = std::cos(eps), sn = std::sin(eps);
  Vector v_minus = v - (alpha * eps / 2.0) * t.grad_potential(x);
  Vector x_new = c * x + sn * v_minus;
  Vector v_plus = -sn * x + c * v_minus;
  x = x_new;
  v = v_plus - (alpha * eps / 2.0) * t.grad_potential(x);
}

StepInfo inf_hmc_step(const SamplerTarget& t, KernelState& s, double eps,
                      int leapfrog_steps, double alpha, VolumeMode mode,
                      RngStream& rng) {
  require(leapfrog_steps >= 1, "at least one integrator step is required");
  const double c = std::cos(eps), sn = std::sin(eps);
  const double half = alpha * eps / 2.0;

  Vector x = s.x;
  Vector g = ensure_grad(t, s);
  const double gsq0 = g.squaredNorm();
  Vector v = rng.normal_vector(t.dim());

  // Incremental energy bookkeeping: the quadratic reference terms cancel
  // through the exact rotation, leaving
  //   dH = Phi_I - Phi_0 + (alpha^2 eps^2 / 8)(|g_0|^2 - |g_I|^2)
  //        - (alpha eps / 2) sum_i (<v_i, g_i> + <v_{i+1}, g_{i+1}>).
  double coupling = 0.0;
  bool bad = false;
  for (int i = 0; i < leapfrog_steps; ++i) {
    coupling += v.dot(g);
    Vector v_minus = v - half * g;
    Vector x_new = c * x + sn * v_minus;
    Vector v_plus = -sn * x + c * v_minus;
    x = x_new;
    g = t.grad_potential(x);
    v = v_plus - half * g;
    if (!finite(x) || !finite(g) || !finite(v)) {
      bad = true;
      break;
    }
    coupling += v.dot(g);
  }

  StepInfo info;
  if (bad) {
    info.divergent = true;
    return info;
  }
  double phi_prop = t.potential(x);
  double d_h = phi_prop - s.phi +
               (alpha * alpha * eps * eps / 8.0) * (gsq0 - g.squaredNorm()) -
               half * coupling;
  double log_alpha_acc = -d_h;
  if (t.has_volume() && mode == VolumeMode::Accept)
    log_alpha_acc += t.log_volume_accept(s.x, x);
  return metropolis(t, s, std::move(x), phi_prop, std::move(g), true,
                    log_alpha_acc, rng);
}

namespace {

StepInfo dispatch_step(const SamplerTarget& t, KernelState& s,
                       const ChainConfig& cfg, double step, RngStream& rng) {
  // A proposal that breaks the target (failed solve, singular volume term)
  // counts as a divergent rejection; the kernels mutate state only on accept,
  // so the current state is still usable.
  try {
    switch (cfg.kernel) {
      case SamplerKernel::Pcn:
        return pcn_step(t, s, step, cfg.volume_mode, rng);
      case SamplerKernel::InfMala:
        return inf_mala_step(t, s, step, cfg.alpha, cfg.volume_mode, rng);
      case SamplerKernel::InfHmc:
        return inf_hmc_step(t, s, step, cfg.leapfrog_steps, cfg.alpha,
                            cfg.volume_mode, rng);
    }
  } catch (const NumericalError&) {
    StepInfo info;
    info.divergent = true;
    info.accept_prob = 0.0;
    return info;
  }
  throw ConfigError("unknown sampler kernel");
}

} // namespace

ChainRecord run_chain(const SamplerTarget& target, const ChainConfig& cfg,
                      const Vector& initial) {
  require(cfg.iterations >= 1, "chain needs at least one iteration");
  require(cfg.burn_in >= 0 && cfg.burn_in < cfg.iterations,
          "burn-in must be shorter than the chain");
  if (cfg.kernel != SamplerKernel::Pcn)
    require(target.has_gradient(),
            "gradient-based kernel on a target without gradients");

  RngStream rng(cfg.seed, 0);
  const long solves_before = target.solve_count();
  KernelState s = make_state(target, initial);

  ChainRecord rec;
  const int kept = cfg.iterations - cfg.burn_in;
  rec.samples.resize(target.to_original(s.x).size(), kept);
  rec.potentials.reserve(kept);
  rec.accepted.reserve(cfg.iterations);
  rec.divergent.reserve(cfg.iterations);
  const bool reweight =
      target.has_volume() && cfg.volume_mode == VolumeMode::Reweight;
  if (reweight) rec.log_weights.reserve(kept);

  double step = cfg.step;
  double window_acc = 0.0;
  int window_n = 0;
  bool tuning = cfg.tune;

  auto t0 = std::chrono::steady_clock::now();
  long accepted_kept = 0;
  int out = 0;
  for (int it = 0; it < cfg.iterations; ++it) {
    StepInfo info = dispatch_step(target, s, cfg, step, rng);
    rec.accepted.push_back(info.accepted ? 1 : 0);
    rec.divergent.push_back(info.divergent ? 1 : 0);

    // Blockwise Robbins-Monro during burn-in only; freezes once the window
    // acceptance sits within 0.05 of the target.
    if (tuning && it < cfg.burn_in) {
      window_acc += info.accept_prob;
      if (++window_n == cfg.tune_window) {
        double mean = window_acc / window_n;
        if (std::abs(mean - cfg.tune_target) <= 0.05) {
          tuning = false;
        } else {
          step *= std::exp(cfg.tune_gain * (mean - cfg.tune_target));
          step = std::min(step, 3.999);
        }
        window_acc = 0.0;
        window_n = 0;
      }
    }

    if (it >= cfg.burn_in) {
      rec.samples.col(out++) = target.to_original(s.x);
      rec.potentials.push_back(s.phi);
      if (reweight) rec.log_weights.push_back(target.log_weight(s.x));
      if (info.accepted) ++accepted_kept;
    }
  }
  auto t1 = std::chrono::steady_clock::now();
  rec.seconds = std::chrono::duration<double>(t1 - t0).count();
  rec.acceptance_rate = static_cast<double>(accepted_kept) / kept;
  rec.solver_calls = target.solve_count() - solves_before;
  rec.iterations_run = cfg.iterations;
  rec.final_step = step;
  return rec;
}

double tune_step_size(const SamplerTarget& target, const ChainConfig& cfg,
                      const Vector& initial) {
  // The whole pilot budget is burn-in, so tuning may run to its last block.
  ChainConfig probe = cfg;
  probe.tune = true;
  probe.iterations = std::max(2, cfg.iterations);
  probe.burn_in = probe.iterations - 1;
  ChainRecord rec = run_chain(target, probe, initial);
  return rec.final_step;
}

void save_chain(const std::string& dir, const std::string& tag,
                const ChainRecord& record, const ChainConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  // Samples stored kept x d, one row per state.
  Tensor t;
  const auto kept = static_cast<std::size_t>(record.samples.cols());
  const auto d = static_cast<std::size_t>(record.samples.rows());
  t.shape = {kept, d};
  t.data.resize(kept * d);
  for (std::size_t i = 0; i < kept; ++i)
    for (std::size_t k = 0; k < d; ++k)
      t.data[i * d + k] = record.samples(k, i);
  save_tensor((fs::path(dir) / ("chain_" + tag + ".tnsr")).string(), t);

  Tensor pot;
  pot.shape = {record.potentials.size()};
  pot.data = record.potentials;
  save_tensor((fs::path(dir) / ("chain_" + tag + "_potentials.tnsr")).string(),
              pot);
  if (!record.log_weights.empty()) {
    Tensor w;
    w.shape = {record.log_weights.size()};
    w.data = record.log_weights;
    save_tensor((fs::path(dir) / ("chain_" + tag + "_weights.tnsr")).string(),
                w);
  }

  long divergences = 0;
  for (char c : record.divergent) divergences += c;
  nlohmann::json j;
  j["kernel"] = kernel_name(cfg.kernel);
  j["step"] = cfg.step;
  j["final_step"] = record.final_step;
  j["leapfrog_steps"] = cfg.leapfrog_steps;
  j["alpha"] = cfg.alpha;
  j["iterations"] = cfg.iterations;
  j["burn_in"] = cfg.burn_in;
  j["seed"] = cfg.seed;
  j["volume_mode"] = volume_mode_name(cfg.volume_mode);
  j["acceptance_rate"] = record.acceptance_rate;
  j["seconds"] = record.seconds;
  j["solver_calls"] = record.solver_calls;
  j["divergences"] = divergences;
  j["kept"] = record.kept();
  j["weighted"] = !record.log_weights.empty();
  std::ofstream out(fs::path(dir) / ("chain_" + tag + ".json"));
  if (!out) throw ConfigError("cannot write chain sidecar in " + dir);
  out << j.dump(2) << "\n";
}

ChainRecord load_chain(const std::string& dir, const std::string& tag) {
  namespace fs = std::filesystem;
  ChainRecord rec;
  Tensor t =
      load_tensor((fs::path(dir) / ("chain_" + tag + ".tnsr")).string());
  require(t.rank() == 2, "chain tensor must have rank 2");
  rec.samples.resize(t.shape[1], t.shape[0]);
  for (std::size_t i = 0; i < t.shape[0]; ++i)
    for (std::size_t k = 0; k < t.shape[1]; ++k)
      rec.samples(k, i) = t.data[i * t.shape[1] + k];
  Tensor pot = load_tensor(
      (fs::path(dir) / ("chain_" + tag + "_potentials.tnsr")).string());
  rec.potentials = pot.data;
  auto wpath = fs::path(dir) / ("chain_" + tag + "_weights.tnsr");
  if (fs::exists(wpath)) rec.log_weights = load_tensor(wpath.string()).data;

  std::ifstream in(fs::path(dir) / ("chain_" + tag + ".json"));
  if (in) {
    nlohmann::json j;
    try {
      in >> j;
      rec.acceptance_rate = j.value("acceptance_rate", 0.0);
      rec.seconds = j.value("seconds", 0.0);
      rec.solver_calls = j.value("solver_calls", 0L);
      rec.iterations_run = j.value("iterations", 0L);
      rec.final_step = j.value("final_step", 0.0);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("invalid chain sidecar: ") + e.what());
    }
  }
  return rec;
}

} // namespace ces
