#ifndef CES_PIPELINE_HPP
#define CES_PIPELINE_HPP

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ces/autoencoder.hpp"
#include "ces/calibration.hpp"
#include "ces/diagnostics.hpp"
#include "ces/elliptic.hpp"
#include "ces/emulator.hpp"
#include "ces/sampler.hpp"

namespace ces {

/// Benchmark selection plus the knobs that define prior, data, and truth.
struct ProblemConfig {
  std::string benchmark = "linear"; // linear | bbd | elliptic
  int dim = 3;                      // parameter dimension (linear / bbd)
  int obs_dim = 100;                // observation count (linear / bbd)
  int grid = 16;                    // nodes per side (elliptic; dim = grid^2)
  double prior_sigma = 1.0;         // scalar prior sd (linear / bbd)
  double field_variance = 1.0;      // grid-prior kernel variance (elliptic)
  double field_smoothness = 0.2;    // grid-prior correlation length (elliptic)
  double noise_variance = 0.1;      // absolute observation noise variance
  double snr = 0.0;                 // if > 0, noise set as max|G(truth)| / snr
  std::uint64_t seed = 1;           // forward matrix, truth draw, data noise
  std::vector<double> truth;        // optional explicit truth vector
};

/// A fully materialized inverse problem: forward map, prior, data, truth.
struct Benchmark {
  std::shared_ptr<ForwardModel> model;
  GaussianMeasure prior;
  ObservationSet obs;
  Vector u_true;
  int grid = 0; // > 0 when parameters live on a grid
};

Benchmark make_benchmark(const ProblemConfig& cfg);

struct EmulationConfig {
  std::string type = "dense"; // dense | conv
  int hidden_layers = 3;      // dense
  int channels = 8;           // conv
  int latent_units = 256;     // conv
  double dropout = 0.0;
  TrainConfig train;
};

struct AutoencoderConfig {
  bool enabled = true;
  AutoencoderSpec spec;
  // Train on the last k ensemble slices only (0 = full history). Terminal
  // slices concentrate near the posterior, so the latent chart spends its
  // capacity where the sampler walks.
  int tail_slices = 0;
  TrainConfig train;
};

/// One chain to run: which state space it walks and the kernel settings.
struct SampleJob {
  std::string tag;
  std::string space = "exact"; // exact | emulative | dream
  ChainConfig chain;
};

struct PipelineConfig {
  ProblemConfig problem;
  CalibrationConfig calibration;
  EmulationConfig emulation;
  AutoencoderConfig autoencoder;
  bool emulation_configured = false;   // the config document had the block
  bool autoencoder_configured = false; // (defaults carry no explicit seed)
  std::vector<SampleJob> sampling;
  int acf_lags = 50;
  std::string baseline_tag; // efficiency baseline; default: first job
  std::string output = "ces-run";
  std::string source_text;  // the config document, persisted with artifacts
};

/// Parse and validate a JSON config document (schema in the README).
PipelineConfig parse_pipeline_config(const std::string& json_text);
PipelineConfig load_pipeline_config(const std::string& path);

/// Stage entry points. Each persists its artifacts under cfg.output and,
/// with resume set, loads existing artifacts instead of recomputing.
CalibrationHistory stage_calibrate(const Benchmark& bench,
                                   const PipelineConfig& cfg, bool resume);
Emulator stage_emulate(const Benchmark& bench, const CalibrationHistory& hist,
                       const PipelineConfig& cfg, bool resume);
Autoencoder stage_autoencode(const Benchmark& bench,
                             const CalibrationHistory& hist,
                             const PipelineConfig& cfg, bool resume);

using NamedChains = std::vector<std::pair<std::string, ChainRecord>>;

/// Runs every sampling job. The emulator is required by emulative and dream
/// jobs, the autoencoder by dream jobs; pass nullptr when a space is unused.
NamedChains stage_sample(const Benchmark& bench, const CalibrationHistory& hist,
                         const Emulator* emulator, const Autoencoder* ae,
                         const PipelineConfig& cfg, bool resume);

/// Writes per-chain CSVs (acf/misfit/kl/fields) and one efficiency table.
void stage_diagnose(const Benchmark& bench, const NamedChains& chains,
                    const PipelineConfig& cfg);

/// calibrate -> emulate -> autoencode -> sample -> diagnose, resumable at
/// stage granularity; returns the artifact directory.
std::string run_pipeline(const PipelineConfig& cfg, bool resume);

/// True if any sampling job needs the named stage's artifact.
bool pipeline_needs_emulator(const PipelineConfig& cfg);
bool pipeline_needs_autoencoder(const PipelineConfig& cfg);

} // namespace ces

#endif
