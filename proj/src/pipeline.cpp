#include "ces/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <sstream>

namespace ces {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& block, const std::string& where,
                std::initializer_list<const char*> allowed) {
  for (const auto& item : block.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known)
      throw ConfigError(where + ": unknown key \"" + item.key() + "\"");
  }
}

const json* find_key(const json& block, const char* key) {
  auto it = block.find(key);
  return it == block.end() ? nullptr : &*it;
}

const json& require_block(const json& root, const char* key) {
  const json* b = find_key(root, key);
  if (!b || !b->is_object())
    throw ConfigError(std::string(key) + ": block required");
  return *b;
}

double get_number(const json& block, const std::string& where, const char* key,
                  double dflt) {
  const json* v = find_key(block, key);
  if (!v) return dflt;
  if (!v->is_number())
    throw ConfigError(where + "." + key + ": expected a number");
  return v->get<double>();
}

int get_int(const json& block, const std::string& where, const char* key,
            int dflt) {
  const json* v = find_key(block, key);
  if (!v) return dflt;
  if (!v->is_number_integer())
    throw ConfigError(where + "." + key + ": expected an integer");
  return v->get<int>();
}

bool get_bool(const json& block, const std::string& where, const char* key,
              bool dflt) {
  const json* v = find_key(block, key);
  if (!v) return dflt;
  if (!v->is_boolean())
    throw ConfigError(where + "." + key + ": expected true or false");
  return v->get<bool>();
}

std::string get_string(const json& block, const std::string& where,
                       const char* key, const std::string& dflt) {
  const json* v = find_key(block, key);
  if (!v) return dflt;
  if (!v->is_string())
    throw ConfigError(where + "." + key + ": expected a string");
  return v->get<std::string>();
}

/// Every random draw in a run is pinned: a missing seed is an error, never
/// an implicit default.
std::uint64_t get_seed(const json& block, const std::string& where) {
  const json* v = find_key(block, "seed");
  if (!v) throw ConfigError(where + ".seed: required (all seeds are explicit)");
  if (!v->is_number_integer() || v->get<double>() < 0)
    throw ConfigError(where + ".seed: expected a non-negative integer");
  return v->get<std::uint64_t>();
}

void require_positive(double value, const std::string& what) {
  if (!(value > 0.0)) throw ConfigError(what + ": must be positive");
}

void require_at_least(int value, int bound, const std::string& what) {
  if (value < bound)
    throw ConfigError(what + ": must be at least " + std::to_string(bound));
}

CalibrationMethod method_from_string(const std::string& name) {
  if (name == "eki") return CalibrationMethod::Eki;
  if (name == "eks") return CalibrationMethod::Eks;
  throw ConfigError("calibration.method: unknown method \"" + name +
                    "\" (eki, eks)");
}

void validate_space(const std::string& space, const std::string& where) {
  if (space != "exact" && space != "emulative" && space != "dream")
    throw ConfigError(where + ".space: unknown space \"" + space +
                      "\" (exact, emulative, dream)");
}

void validate_tag(const std::string& tag, const std::string& where) {
  if (tag.empty()) throw ConfigError(where + ".tag: must not be empty");
  for (char c : tag) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_')
      throw ConfigError(where + ".tag \"" + tag +
                        "\": use letters, digits, '-' and '_'");
  }
}

void parse_train_block(const json& block, const std::string& where,
                       TrainConfig& train) {
  train.epochs = get_int(block, where, "epochs", train.epochs);
  require_at_least(train.epochs, 1, where + ".epochs");
  train.batch_size = get_int(block, where, "batch_size", train.batch_size);
  require_at_least(train.batch_size, 1, where + ".batch_size");
  train.learning_rate =
      get_number(block, where, "learning_rate", train.learning_rate);
  require_positive(train.learning_rate, where + ".learning_rate");
  train.validation_fraction = get_number(block, where, "validation_fraction",
                                         train.validation_fraction);
  if (train.validation_fraction < 0.0 || train.validation_fraction >= 1.0)
    throw ConfigError(where + ".validation_fraction: must be in [0, 1)");
  train.seed = get_seed(block, where);
}

ProblemConfig parse_problem(const json& root) {
  const json& block = require_block(root, "problem");
  check_keys(block, "problem",
             {"benchmark", "dim", "obs_dim", "grid", "prior_sigma",
              "field_variance", "field_smoothness", "noise_variance", "snr",
              "seed", "truth"});

  ProblemConfig p;
  p.benchmark = get_string(block, "problem", "benchmark", "");
  if (p.benchmark != "linear" && p.benchmark != "bbd" &&
      p.benchmark != "elliptic")
    throw ConfigError("problem.benchmark: unknown benchmark \"" + p.benchmark +
                      "\" (linear, bbd, elliptic)");

  p.dim = get_int(block, "problem", "dim", p.dim);
  require_at_least(p.dim, 1, "problem.dim");
  p.obs_dim = get_int(block, "problem", "obs_dim", p.obs_dim);
  require_at_least(p.obs_dim, 1, "problem.obs_dim");
  p.grid = get_int(block, "problem", "grid", p.grid);
  require_at_least(p.grid, 2, "problem.grid");

  p.prior_sigma = get_number(block, "problem", "prior_sigma", p.prior_sigma);
  require_positive(p.prior_sigma, "problem.prior_sigma");
  p.field_variance =
      get_number(block, "problem", "field_variance", p.field_variance);
  require_positive(p.field_variance, "problem.field_variance");
  p.field_smoothness =
      get_number(block, "problem", "field_smoothness", p.field_smoothness);
  require_positive(p.field_smoothness, "problem.field_smoothness");

  p.noise_variance =
      get_number(block, "problem", "noise_variance", p.noise_variance);
  p.snr = get_number(block, "problem", "snr", 0.0);
  if (p.snr < 0.0) throw ConfigError("problem.snr: must be non-negative");
  if (p.snr == 0.0) require_positive(p.noise_variance, "problem.noise_variance");

  p.seed = get_seed(block, "problem");

  if (const json* t = find_key(block, "truth")) {
    if (!t->is_array())
      throw ConfigError("problem.truth: expected an array of numbers");
    for (const auto& entry : *t) {
      if (!entry.is_number())
        throw ConfigError("problem.truth: expected an array of numbers");
      p.truth.push_back(entry.get<double>());
    }
    const int expect = p.benchmark == "elliptic" ? p.grid * p.grid : p.dim;
    if (static_cast<int>(p.truth.size()) != expect)
      throw ConfigError("problem.truth: expected " + std::to_string(expect) +
                        " entries, got " + std::to_string(p.truth.size()));
  }
  return p;
}

CalibrationConfig parse_calibration(const json& root) {
  const json& block = require_block(root, "calibration");
  check_keys(block, "calibration",
             {"method", "ensemble_size", "iterations", "seed",
              "eki_perturb_obs", "eks_delta0", "eks_dt_max"});

  CalibrationConfig c;
  c.method = method_from_string(get_string(block, "calibration", "method", "eki"));
  c.ensemble_size =
      get_int(block, "calibration", "ensemble_size", c.ensemble_size);
  require_at_least(c.ensemble_size, 2, "calibration.ensemble_size");
  c.iterations = get_int(block, "calibration", "iterations", c.iterations);
  require_at_least(c.iterations, 1, "calibration.iterations");
  c.seed = get_seed(block, "calibration");
  c.eki_perturb_obs =
      get_bool(block, "calibration", "eki_perturb_obs", c.eki_perturb_obs);
  c.eks_delta0 = get_number(block, "calibration", "eks_delta0", c.eks_delta0);
  require_positive(c.eks_delta0, "calibration.eks_delta0");
  c.eks_dt_max = get_number(block, "calibration", "eks_dt_max", c.eks_dt_max);
  require_positive(c.eks_dt_max, "calibration.eks_dt_max");
  return c;
}

EmulationConfig parse_emulation(const json& block, const std::string& benchmark) {
  check_keys(block, "emulation",
             {"type", "hidden_layers", "channels", "latent_units", "dropout",
              "epochs", "batch_size", "learning_rate", "validation_fraction",
              "seed"});

  EmulationConfig e;
  e.type = get_string(block, "emulation", "type", e.type);
  if (e.type != "dense" && e.type != "conv")
    throw ConfigError("emulation.type: unknown type \"" + e.type +
                      "\" (dense, conv)");
  if (e.type == "conv" && benchmark != "elliptic")
    throw ConfigError(
        "emulation.type: conv needs grid-shaped parameters (elliptic only)");
  e.hidden_layers = get_int(block, "emulation", "hidden_layers", e.hidden_layers);
  require_at_least(e.hidden_layers, 1, "emulation.hidden_layers");
  e.channels = get_int(block, "emulation", "channels", e.channels);
  require_at_least(e.channels, 1, "emulation.channels");
  e.latent_units = get_int(block, "emulation", "latent_units", e.latent_units);
  require_at_least(e.latent_units, 1, "emulation.latent_units");
  e.dropout = get_number(block, "emulation", "dropout", e.dropout);
  if (e.dropout < 0.0 || e.dropout >= 1.0)
    throw ConfigError("emulation.dropout: must be in [0, 1)");
  parse_train_block(block, "emulation", e.train);
  return e;
}

AutoencoderConfig parse_autoencoder(const json& block, int problem_dim) {
  check_keys(block, "autoencoder",
             {"enabled", "latent_dim", "encoder_layers", "decoder_layers",
              "activation", "alpha", "linear", "tail_slices", "epochs",
              "batch_size", "learning_rate", "validation_fraction", "seed"});

  AutoencoderConfig a;
  a.enabled = get_bool(block, "autoencoder", "enabled", a.enabled);
  a.spec.latent_dim =
      get_int(block, "autoencoder", "latent_dim", a.spec.latent_dim);
  require_at_least(a.spec.latent_dim, 1, "autoencoder.latent_dim");
  if (a.spec.latent_dim >= problem_dim)
    throw ConfigError(
        "autoencoder.latent_dim: must be smaller than the parameter dimension " +
        std::to_string(problem_dim));
  a.spec.encoder_layers =
      get_int(block, "autoencoder", "encoder_layers", a.spec.encoder_layers);
  require_at_least(a.spec.encoder_layers, 1, "autoencoder.encoder_layers");
  a.spec.decoder_layers =
      get_int(block, "autoencoder", "decoder_layers", a.spec.decoder_layers);
  require_at_least(a.spec.decoder_layers, 1, "autoencoder.decoder_layers");
  if (const json* act = find_key(block, "activation")) {
    if (!act->is_string())
      throw ConfigError("autoencoder.activation: expected a string");
    a.spec.hidden_activation = activation_from_string(act->get<std::string>());
  }
  a.spec.alpha = get_number(block, "autoencoder", "alpha", a.spec.alpha);
  a.spec.linear = get_bool(block, "autoencoder", "linear", a.spec.linear);
  a.tail_slices = get_int(block, "autoencoder", "tail_slices", a.tail_slices);
  require_at_least(a.tail_slices, 0, "autoencoder.tail_slices");
  parse_train_block(block, "autoencoder", a.train);
  return a;
}

SampleJob parse_job(const json& entry, const std::string& where) {
  if (!entry.is_object()) throw ConfigError(where + ": expected an object");
  check_keys(entry, where,
             {"tag", "space", "kernel", "step", "leapfrog", "alpha",
              "iterations", "burn_in", "seed", "tune", "tune_target",
              "tune_gain", "tune_window", "volume_mode"});

  SampleJob job;
  job.tag = get_string(entry, where, "tag", "");
  validate_tag(job.tag, where);
  job.space = get_string(entry, where, "space", job.space);
  validate_space(job.space, where);

  ChainConfig& c = job.chain;
  c.kernel = kernel_from_string(get_string(entry, where, "kernel", "pcn"));
  c.step = get_number(entry, where, "step", c.step);
  require_positive(c.step, where + ".step");
  c.leapfrog_steps = get_int(entry, where, "leapfrog", c.leapfrog_steps);
  require_at_least(c.leapfrog_steps, 1, where + ".leapfrog");
  c.alpha = get_number(entry, where, "alpha", c.alpha);
  if (c.alpha < 0.0) throw ConfigError(where + ".alpha: must be non-negative");
  c.iterations = get_int(entry, where, "iterations", c.iterations);
  require_at_least(c.iterations, 1, where + ".iterations");
  c.burn_in = get_int(entry, where, "burn_in", c.burn_in);
  if (c.burn_in < 0 || c.burn_in >= c.iterations)
    throw ConfigError(where + ".burn_in: must be in [0, iterations)");
  c.seed = get_seed(entry, where);
  c.volume_mode =
      volume_mode_from_string(get_string(entry, where, "volume_mode", "accept"));
  c.tune = get_bool(entry, where, "tune", c.tune);
  c.tune_target = get_number(entry, where, "tune_target", c.tune_target);
  if (c.tune_target <= 0.0 || c.tune_target >= 1.0)
    throw ConfigError(where + ".tune_target: must be in (0, 1)");
  c.tune_gain = get_number(entry, where, "tune_gain", c.tune_gain);
  require_positive(c.tune_gain, where + ".tune_gain");
  c.tune_window = get_int(entry, where, "tune_window", c.tune_window);
  require_at_least(c.tune_window, 1, where + ".tune_window");
  return job;
}

Matrix whiten_columns(const GaussianMeasure& prior, const Matrix& raw) {
  Matrix out(raw.rows(), raw.cols());
  for (Eigen::Index j = 0; j < raw.cols(); ++j)
    out.col(j) = prior.apply_inv_sqrt(raw.col(j));
  return out;
}

/// Benchmark, calibration, surrogate, latent map, and chains each derive
/// their randomness from their own explicit seed; within the benchmark the
/// sub-draws (forward matrix, truth, data noise) get fixed stream ids.
constexpr std::uint64_t kStreamForward = 1;
constexpr std::uint64_t kStreamData = 2;
constexpr std::uint64_t kStreamTruth = 3;

template <typename Fn>
auto guarded(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(stage) + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(std::string(stage) + ": " + e.what());
  }
}

} // namespace

PipelineConfig parse_pipeline_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config root must be an object");
  check_keys(root, "config",
             {"output", "problem", "calibration", "emulation", "autoencoder",
              "sampling", "diagnostics"});

  PipelineConfig cfg;
  cfg.source_text = json_text;
  cfg.output = get_string(root, "config", "output", cfg.output);
  if (cfg.output.empty()) throw ConfigError("output: must not be empty");

  cfg.problem = parse_problem(root);
  cfg.calibration = parse_calibration(root);
  const int problem_dim = cfg.problem.benchmark == "elliptic"
                              ? cfg.problem.grid * cfg.problem.grid
                              : cfg.problem.dim;

  const json* sampling = find_key(root, "sampling");
  if (!sampling || !sampling->is_array())
    throw ConfigError("sampling: expected an array of chain settings");
  std::set<std::string> tags;
  for (std::size_t i = 0; i < sampling->size(); ++i) {
    SampleJob job =
        parse_job((*sampling)[i], "sampling[" + std::to_string(i) + "]");
    if (!tags.insert(job.tag).second)
      throw ConfigError("sampling: duplicate tag \"" + job.tag + "\"");
    cfg.sampling.push_back(std::move(job));
  }

  if (const json* block = find_key(root, "emulation")) {
    if (!block->is_object()) throw ConfigError("emulation: expected an object");
    cfg.emulation = parse_emulation(*block, cfg.problem.benchmark);
    cfg.emulation_configured = true;
  } else if (pipeline_needs_emulator(cfg)) {
    throw ConfigError(
        "emulation: block required (a chain samples through the surrogate)");
  }

  if (const json* block = find_key(root, "autoencoder")) {
    if (!block->is_object())
      throw ConfigError("autoencoder: expected an object");
    cfg.autoencoder = parse_autoencoder(*block, problem_dim);
    cfg.autoencoder_configured = true;
  } else if (pipeline_needs_autoencoder(cfg)) {
    throw ConfigError(
        "autoencoder: block required (a chain runs in latent space)");
  }
  if (pipeline_needs_autoencoder(cfg) && !cfg.autoencoder.enabled)
    throw ConfigError(
        "autoencoder.enabled: a latent-space chain needs the autoencoder stage");

  if (const json* block = find_key(root, "diagnostics")) {
    if (!block->is_object())
      throw ConfigError("diagnostics: expected an object");
    check_keys(*block, "diagnostics", {"acf_lags", "baseline"});
    cfg.acf_lags = get_int(*block, "diagnostics", "acf_lags", cfg.acf_lags);
    require_at_least(cfg.acf_lags, 1, "diagnostics.acf_lags");
    cfg.baseline_tag = get_string(*block, "diagnostics", "baseline", "");
    if (!cfg.baseline_tag.empty() && tags.count(cfg.baseline_tag) == 0)
      throw ConfigError("diagnostics.baseline: no chain is tagged \"" +
                        cfg.baseline_tag + "\"");
  }
  return cfg;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_pipeline_config(text.str());
}

bool pipeline_needs_emulator(const PipelineConfig& cfg) {
  for (const SampleJob& job : cfg.sampling)
    if (job.space == "emulative" || job.space == "dream") return true;
  return false;
}

bool pipeline_needs_autoencoder(const PipelineConfig& cfg) {
  for (const SampleJob& job : cfg.sampling)
    if (job.space == "dream") return true;
  return false;
}

Benchmark make_benchmark(const ProblemConfig& cfg) {
  const NoiseSpec noise = cfg.snr > 0.0
                              ? NoiseSpec::snr(cfg.snr)
                              : NoiseSpec::absolute(std::sqrt(cfg.noise_variance));
  if (cfg.benchmark == "linear" || cfg.benchmark == "bbd") {
    require(cfg.dim >= 1 && cfg.obs_dim >= 1, "problem dimensions must be positive");
    Matrix a = random_uniform_matrix(cfg.obs_dim, cfg.dim,
                                     RngStream::mix(cfg.seed, kStreamForward));
    std::shared_ptr<ForwardModel> model;
    Vector u_true;
    if (cfg.benchmark == "linear") {
      model = std::make_shared<LinearModel>(std::move(a));
      u_true = Vector::LinSpaced(cfg.dim, -1.0, 1.0);
    } else {
      model = std::make_shared<BbdModel>(std::move(a));
      // Integer truth in [0, dim], one independent draw per coordinate.
      RngStream rng(cfg.seed, kStreamTruth);
      u_true.resize(cfg.dim);
      for (int i = 0; i < cfg.dim; ++i)
        u_true[i] = std::min<double>(std::floor(rng.uniform() * (cfg.dim + 1)),
                                     cfg.dim);
    }
    if (!cfg.truth.empty()) {
      require(static_cast<int>(cfg.truth.size()) == cfg.dim,
              "truth vector length does not match the parameter dimension");
      u_true = Eigen::Map<const Vector>(cfg.truth.data(), cfg.dim);
    }
    GaussianMeasure prior =
        GaussianMeasure::scalar_identity(cfg.dim, cfg.prior_sigma);
    ObservationSet obs = generate_data(*model, u_true, noise,
                                       RngStream::mix(cfg.seed, kStreamData));
    model->reset_solve_count();
    return Benchmark{std::move(model), std::move(prior), std::move(obs),
                     std::move(u_true), 0};
  }
  if (cfg.benchmark == "elliptic") {
    require(cfg.grid >= 2, "grid must have at least 2 nodes per side");
    GridGeometry grid{cfg.grid};
    auto model = std::make_shared<EllipticModel>(grid);
    Vector u_true = elliptic_truth_field(grid);
    if (!cfg.truth.empty()) {
      require(static_cast<int>(cfg.truth.size()) == grid.dim(),
              "truth vector length does not match the grid dimension");
      u_true = Eigen::Map<const Vector>(cfg.truth.data(), grid.dim());
    }
    GaussianMeasure prior = GaussianMeasure::exponential_grid(
        grid, std::sqrt(cfg.field_variance), cfg.field_smoothness);
    ObservationSet obs = generate_data(*model, u_true, noise,
                                       RngStream::mix(cfg.seed, kStreamData));
    model->reset_solve_count();
    return Benchmark{std::move(model), std::move(prior), std::move(obs),
                     std::move(u_true), cfg.grid};
  }
  throw ConfigError("unknown benchmark \"" + cfg.benchmark +
                    "\" (linear, bbd, elliptic)");
}

CalibrationHistory stage_calibrate(const Benchmark& bench,
                                   const PipelineConfig& cfg, bool resume) {
  fs::create_directories(cfg.output);
  const fs::path dir(cfg.output);
  if (resume && fs::exists(dir / "ensemble_params.tnsr") &&
      fs::exists(dir / "ensemble_outputs.tnsr")) {
    CalibrationHistory hist = load_calibration(cfg.output);
    require(!hist.params.empty() &&
                hist.final_params().rows() == bench.model->input_dim(),
            "stored ensemble does not match the problem dimensions");
    return hist;
  }
  CalibrationHistory hist =
      run_calibration(*bench.model, bench.obs, bench.prior, cfg.calibration);
  save_calibration(cfg.output, hist);
  return hist;
}

Emulator stage_emulate(const Benchmark& bench, const CalibrationHistory& hist,
                       const PipelineConfig& cfg, bool resume) {
  fs::create_directories(cfg.output);
  const fs::path path = fs::path(cfg.output) / "emulator.net";
  if (resume && fs::exists(path)) {
    Network net = load_network(path.string());
    require(net.input_size() == bench.model->input_dim() &&
                net.output_size() == bench.model->output_dim(),
            "stored surrogate does not match the problem dimensions");
    return Emulator(std::move(net), bench.obs);
  }

  TrainingSet data = flatten_history(hist);
  require(data.inputs.cols() >= 2, "calibration history is too small to fit");
  // The surrogate consumes whitened coordinates, matching the chains.
  Matrix inputs = whiten_columns(bench.prior, data.inputs);

  Network net = [&] {
    if (cfg.emulation.type == "conv") {
      require(bench.grid > 0, "conv surrogate needs grid-shaped parameters");
      return make_conv_emulator_network(bench.grid, bench.model->output_dim(),
                                        cfg.emulation.channels,
                                        cfg.emulation.latent_units,
                                        cfg.emulation.dropout);
    }
    return make_dense_emulator_network(bench.model->input_dim(),
                                       bench.model->output_dim(),
                                       cfg.emulation.hidden_layers,
                                       cfg.emulation.dropout);
  }();
  train_network(net, inputs, data.targets, cfg.emulation.train);
  save_network(path.string(), net);
  return Emulator(std::move(net), bench.obs);
}

Autoencoder stage_autoencode(const Benchmark& bench,
                             const CalibrationHistory& hist,
                             const PipelineConfig& cfg, bool resume) {
  fs::create_directories(cfg.output);
  const fs::path path = fs::path(cfg.output) / "autoencoder.net";
  if (resume && fs::exists(path)) {
    Autoencoder ae = load_autoencoder(path.string());
    require(ae.full_dim() == bench.model->input_dim() &&
                ae.latent_dim() == cfg.autoencoder.spec.latent_dim,
            "stored autoencoder does not match the configuration");
    return ae;
  }

  const int total = static_cast<int>(hist.params.size());
  const int tail = cfg.autoencoder.tail_slices;
  const int first = (tail > 0 && tail < total) ? total - tail : 0;
  const int cols = static_cast<int>(hist.params[0].cols());
  Matrix raw(hist.params[0].rows(), (total - first) * cols);
  for (int s = first; s < total; ++s)
    raw.middleCols((s - first) * cols, cols) = hist.params[s];
  require(raw.cols() >= 2, "calibration history is too small to fit");
  Matrix inputs = whiten_columns(bench.prior, raw);
  AutoencoderFit fit =
      train_autoencoder(inputs, cfg.autoencoder.spec, cfg.autoencoder.train);
  save_autoencoder(path.string(), fit.ae);
  return std::move(fit.ae);
}

NamedChains stage_sample(const Benchmark& bench, const CalibrationHistory& hist,
                         const Emulator* emulator, const Autoencoder* ae,
                         const PipelineConfig& cfg, bool resume) {
  fs::create_directories(cfg.output);
  const fs::path dir(cfg.output);
  // Chains start from the terminal ensemble mean, the calibration estimate.
  const Vector u_start = hist.final_params().rowwise().mean();
  const Vector x_start = bench.prior.apply_inv_sqrt(u_start);

  NamedChains chains;
  for (const SampleJob& job : cfg.sampling) {
    if (resume && fs::exists(dir / ("chain_" + job.tag + ".tnsr"))) {
      ChainRecord rec = load_chain(cfg.output, job.tag);
      require(rec.samples.rows() == bench.model->input_dim(),
              "stored chain \"" + job.tag +
                  "\" does not match the problem dimensions");
      chains.emplace_back(job.tag, std::move(rec));
      continue;
    }

    auto run_job = [&](const SamplerTarget& target, const Vector& initial) {
      ChainRecord rec = run_chain(target, job.chain, initial);
      save_chain(cfg.output, job.tag, rec, job.chain);
      chains.emplace_back(job.tag, std::move(rec));
    };

    if (job.space == "exact") {
      ExactTarget target(*bench.model, bench.obs, bench.prior);
      run_job(target, x_start);
    } else if (job.space == "emulative") {
      require(emulator != nullptr,
              "chain \"" + job.tag + "\" needs the surrogate stage");
      EmulatedTarget target(*emulator, bench.prior);
      run_job(target, x_start);
    } else if (job.space == "dream") {
      require(emulator != nullptr && ae != nullptr,
              "chain \"" + job.tag +
                  "\" needs the surrogate and autoencoder stages");
      DreamTarget target(*emulator, *ae, bench.prior);
      run_job(target, target.embed(u_start));
    } else {
      throw ConfigError("unknown sampling space \"" + job.space + "\"");
    }
  }
  return chains;
}

void stage_diagnose(const Benchmark& bench, const NamedChains& chains,
                    const PipelineConfig& cfg) {
  if (chains.empty()) return;
  fs::create_directories(cfg.output);
  const fs::path dir(cfg.output);

  std::vector<TaggedChain> tagged;
  tagged.reserve(chains.size());
  for (const auto& [tag, rec] : chains) {
    require(rec.kept() >= 2, "chain \"" + tag + "\" kept fewer than 2 samples");

    // Chains are judged on the true-model data misfit, whatever target
    // they walked; its autocorrelation is the mixing picture.
    Vector misfit = misfit_trace(rec.samples, *bench.model, bench.obs);
    write_series_csv((dir / ("misfit_" + tag + ".csv")).string(), "misfit",
                     misfit);
    const int lags = std::min(cfg.acf_lags, rec.kept() - 1);
    write_series_csv((dir / ("acf_" + tag + ".csv")).string(), "acf",
                     acf(misfit, lags));
    write_series_csv((dir / ("kl_" + tag + ".csv")).string(), "kl",
                     kl_gauss_proxy(rec.samples, bench.prior));

    const FieldStats stats = rec.log_weights.empty()
                                 ? field_stats(rec.samples)
                                 : field_stats(rec.samples, rec.log_weights);
    write_series_csv((dir / ("fields_mean_" + tag + ".csv")).string(), "mean",
                     stats.mean);
    write_series_csv((dir / ("fields_sd_" + tag + ".csv")).string(), "sd",
                     stats.sd);
    tagged.push_back({tag, &rec});
  }

  const std::string baseline =
      cfg.baseline_tag.empty() ? chains.front().first : cfg.baseline_tag;
  write_efficiency_csv((dir / "efficiency.csv").string(),
                       efficiency_table(tagged, baseline));
}

std::string run_pipeline(const PipelineConfig& cfg, bool resume) {
  fs::create_directories(cfg.output);
  if (!cfg.source_text.empty()) {
    std::ofstream out(fs::path(cfg.output) / "config.json", std::ios::trunc);
    out << cfg.source_text;
    if (!out) throw ConfigError("cannot write " + cfg.output + "/config.json");
  }

  Benchmark bench = guarded("problem", [&] { return make_benchmark(cfg.problem); });
  CalibrationHistory hist =
      guarded("calibrate", [&] { return stage_calibrate(bench, cfg, resume); });

  std::optional<Emulator> emulator;
  if (pipeline_needs_emulator(cfg))
    emulator.emplace(guarded(
        "emulate", [&] { return stage_emulate(bench, hist, cfg, resume); }));

  std::optional<Autoencoder> ae;
  if (pipeline_needs_autoencoder(cfg))
    ae.emplace(guarded("autoencode", [&] {
      return stage_autoencode(bench, hist, cfg, resume);
    }));

  NamedChains chains = guarded("sample", [&] {
    return stage_sample(bench, hist, emulator ? &*emulator : nullptr,
                        ae ? &*ae : nullptr, cfg, resume);
  });
  guarded("diagnose", [&] {
    stage_diagnose(bench, chains, cfg);
    return 0;
  });
  return cfg.output;
}

} // namespace ces
