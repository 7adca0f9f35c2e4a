#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "ces/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_override;
  bool resume = false;
};

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config_path, "pipeline configuration file")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--out", args.out_override,
                  "output directory (overrides the config)");
  sub->add_flag("--resume", args.resume,
                "reuse persisted artifacts instead of recomputing");
}

ces::PipelineConfig load_config(const CommonArgs& args) {
  ces::PipelineConfig cfg = ces::load_pipeline_config(args.config_path);
  if (!args.out_override.empty()) cfg.output = args.out_override;
  return cfg;
}

/// Optional overrides for one sampling job, tracked by option presence so
/// absent flags leave the configured value alone.
struct SampleArgs {
  std::string tag;
  std::string space;
  std::string kernel;
  std::string volume_mode;
  double step = 0.0;
  int leapfrog = 0;
  int iterations = 0;
  int burn_in = 0;
  std::uint64_t seed = 0;
  bool tune = false;

  CLI::Option* o_tag = nullptr;
  CLI::Option* o_space = nullptr;
  CLI::Option* o_kernel = nullptr;
  CLI::Option* o_volume = nullptr;
  CLI::Option* o_step = nullptr;
  CLI::Option* o_leapfrog = nullptr;
  CLI::Option* o_iterations = nullptr;
  CLI::Option* o_burn_in = nullptr;
  CLI::Option* o_seed = nullptr;
  CLI::Option* o_tune = nullptr;

  bool any_override() const {
    return o_space->count() || o_kernel->count() || o_volume->count() ||
           o_step->count() || o_leapfrog->count() || o_iterations->count() ||
           o_burn_in->count() || o_seed->count() || o_tune->count();
  }
};

void add_sample_flags(CLI::App* sub, SampleArgs& args) {
  args.o_tag = sub->add_option("--tag", args.tag,
                               "run only this chain (new tags make a fresh one)");
  args.o_space = sub->add_option("--space", args.space,
                                 "state space: exact, emulative or dream");
  args.o_kernel =
      sub->add_option("--kernel", args.kernel, "kernel: pcn, mala or hmc");
  args.o_step = sub->add_option("--step", args.step, "proposal step size");
  args.o_leapfrog =
      sub->add_option("--leapfrog", args.leapfrog, "integrator steps (hmc)");
  args.o_iterations =
      sub->add_option("--iters", args.iterations, "chain iterations");
  args.o_burn_in = sub->add_option("--burnin", args.burn_in,
                                   "iterations discarded before recording");
  args.o_seed = sub->add_option("--seed", args.seed, "chain random seed");
  args.o_tune = sub->add_flag("--tune", args.tune,
                              "adapt the step size during burn-in");
  args.o_volume = sub->add_option(
      "--volume-mode", args.volume_mode,
      "latent volume handling: accept, reweight or none");
}

void validate_space_name(const std::string& space) {
  if (space != "exact" && space != "emulative" && space != "dream")
    throw ces::ConfigError("--space: unknown space \"" + space +
                           "\" (exact, emulative, dream)");
}

/// Rewrites cfg.sampling according to the flags: with a tag, the named job
/// (existing or new) is the only one run; without, the config list stands.
void apply_sample_overrides(ces::PipelineConfig& cfg, const SampleArgs& args) {
  if (!args.o_tag->count()) {
    if (args.any_override())
      throw ces::ConfigError(
          "--tag is required when overriding chain settings");
    return;
  }

  ces::SampleJob job;
  auto it = std::find_if(cfg.sampling.begin(), cfg.sampling.end(),
                         [&](const ces::SampleJob& j) { return j.tag == args.tag; });
  if (it != cfg.sampling.end()) {
    job = *it;
  } else {
    job.tag = args.tag;
    if (!args.o_seed->count())
      throw ces::ConfigError(
          "--seed is required for a new chain tag (all seeds are explicit)");
  }

  if (args.o_space->count()) {
    validate_space_name(args.space);
    job.space = args.space;
  }
  if (args.o_kernel->count())
    job.chain.kernel = ces::kernel_from_string(args.kernel);
  if (args.o_volume->count())
    job.chain.volume_mode = ces::volume_mode_from_string(args.volume_mode);
  if (args.o_step->count()) {
    if (!(args.step > 0.0))
      throw ces::ConfigError("--step: must be positive");
    job.chain.step = args.step;
  }
  if (args.o_leapfrog->count()) {
    if (args.leapfrog < 1)
      throw ces::ConfigError("--leapfrog: must be at least 1");
    job.chain.leapfrog_steps = args.leapfrog;
  }
  if (args.o_iterations->count()) {
    if (args.iterations < 1)
      throw ces::ConfigError("--iters: must be at least 1");
    job.chain.iterations = args.iterations;
  }
  if (args.o_burn_in->count()) {
    if (args.burn_in < 0)
      throw ces::ConfigError("--burnin: must be non-negative");
    job.chain.burn_in = args.burn_in;
  }
  if (job.chain.burn_in >= job.chain.iterations)
    throw ces::ConfigError("--burnin: must be below the iteration count");
  if (args.o_seed->count()) job.chain.seed = args.seed;
  if (args.o_tune->count()) job.chain.tune = args.tune;

  cfg.sampling.clear();
  cfg.sampling.push_back(std::move(job));
  cfg.baseline_tag.clear();
}

void require_emulation_block(const ces::PipelineConfig& cfg) {
  if (!cfg.emulation_configured)
    throw ces::ConfigError(
        "emulation: block required (the config document does not have one)");
}

void require_autoencoder_block(const ces::PipelineConfig& cfg) {
  if (!cfg.autoencoder_configured)
    throw ces::ConfigError(
        "autoencoder: block required (the config document does not have one)");
  if (!cfg.autoencoder.enabled)
    throw ces::ConfigError("autoencoder: disabled in the config document");
}

std::string fmt(double value, int precision) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(precision) << value;
  return out.str();
}

void print_chains(const ces::NamedChains& chains) {
  for (const auto& [tag, rec] : chains) {
    std::cout << "chain " << tag << ": kept " << rec.kept() << ", acceptance "
              << fmt(rec.acceptance_rate, 3) << ", step "
              << fmt(rec.final_step, 4) << ", " << fmt(rec.seconds, 1)
              << " s, " << rec.solver_calls << " solver calls\n";
  }
}

int run_calibrate(const CommonArgs& common) {
  ces::PipelineConfig cfg = load_config(common);
  ces::Benchmark bench = ces::make_benchmark(cfg.problem);
  ces::CalibrationHistory hist =
      ces::stage_calibrate(bench, cfg, common.resume);
  std::cout << "calibration: " << hist.params.size() - 1 << " updates, "
            << hist.final_params().cols() << " members, artifacts in "
            << cfg.output << "\n";
  return 0;
}

int run_emulate(const CommonArgs& common) {
  ces::PipelineConfig cfg = load_config(common);
  require_emulation_block(cfg);
  ces::Benchmark bench = ces::make_benchmark(cfg.problem);
  ces::CalibrationHistory hist = ces::stage_calibrate(bench, cfg, true);
  ces::Emulator emulator = ces::stage_emulate(bench, hist, cfg, common.resume);
  std::cout << "surrogate: " << emulator.input_dim() << " -> "
            << emulator.output_dim() << ", saved in " << cfg.output << "\n";
  return 0;
}

int run_autoencode(const CommonArgs& common) {
  ces::PipelineConfig cfg = load_config(common);
  require_autoencoder_block(cfg);
  ces::Benchmark bench = ces::make_benchmark(cfg.problem);
  ces::CalibrationHistory hist = ces::stage_calibrate(bench, cfg, true);
  ces::Autoencoder ae = ces::stage_autoencode(bench, hist, cfg, common.resume);
  std::cout << "autoencoder: " << ae.full_dim() << " -> " << ae.latent_dim()
            << ", saved in " << cfg.output << "\n";
  return 0;
}

int run_sample(const CommonArgs& common, const SampleArgs& sample) {
  ces::PipelineConfig cfg = load_config(common);
  apply_sample_overrides(cfg, sample);
  if (cfg.sampling.empty())
    throw ces::ConfigError("sampling: the config document lists no chains");

  ces::Benchmark bench = ces::make_benchmark(cfg.problem);
  ces::CalibrationHistory hist = ces::stage_calibrate(bench, cfg, true);

  std::optional<ces::Emulator> emulator;
  if (ces::pipeline_needs_emulator(cfg)) {
    require_emulation_block(cfg);
    emulator.emplace(ces::stage_emulate(bench, hist, cfg, true));
  }
  std::optional<ces::Autoencoder> ae;
  if (ces::pipeline_needs_autoencoder(cfg)) {
    require_autoencoder_block(cfg);
    ae.emplace(ces::stage_autoencode(bench, hist, cfg, true));
  }

  ces::NamedChains chains =
      ces::stage_sample(bench, hist, emulator ? &*emulator : nullptr,
                        ae ? &*ae : nullptr, cfg, common.resume);
  print_chains(chains);
  return 0;
}

int run_diagnose(const CommonArgs& common) {
  ces::PipelineConfig cfg = load_config(common);
  ces::Benchmark bench = ces::make_benchmark(cfg.problem);
  ces::CalibrationHistory hist = ces::stage_calibrate(bench, cfg, true);

  // Load surrogate and autoencoder only if their artifacts exist; chains
  // already on disk are loaded without either.
  const fs::path dir(cfg.output);
  std::optional<ces::Emulator> emulator;
  if (ces::pipeline_needs_emulator(cfg) && fs::exists(dir / "emulator.net"))
    emulator.emplace(ces::stage_emulate(bench, hist, cfg, true));
  std::optional<ces::Autoencoder> ae;
  if (ces::pipeline_needs_autoencoder(cfg) &&
      fs::exists(dir / "autoencoder.net"))
    ae.emplace(ces::stage_autoencode(bench, hist, cfg, true));

  ces::NamedChains chains =
      ces::stage_sample(bench, hist, emulator ? &*emulator : nullptr,
                        ae ? &*ae : nullptr, cfg, true);
  ces::stage_diagnose(bench, chains, cfg);
  std::cout << "diagnostics written to " << cfg.output << "\n";
  return 0;
}

int run_full(const CommonArgs& common) {
  ces::PipelineConfig cfg = load_config(common);
  std::string out = ces::run_pipeline(cfg, common.resume);
  std::cout << "pipeline finished, artifacts in " << out << "\n";
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"calibrate-emulate-sample pipeline for Bayesian inverse problems"};
  app.require_subcommand(1);

  CommonArgs calibrate_args;
  CLI::App* calibrate =
      app.add_subcommand("calibrate", "run the ensemble Kalman stage");
  add_common(calibrate, calibrate_args);

  CommonArgs emulate_args;
  CLI::App* emulate =
      app.add_subcommand("emulate", "fit the surrogate to the ensemble history");
  add_common(emulate, emulate_args);

  CommonArgs autoencode_args;
  CLI::App* autoencode = app.add_subcommand(
      "autoencode", "fit the latent coordinate map to the ensemble history");
  add_common(autoencode, autoencode_args);

  CommonArgs sample_args;
  SampleArgs sample_flags;
  CLI::App* sample = app.add_subcommand("sample", "run the configured chains");
  add_common(sample, sample_args);
  add_sample_flags(sample, sample_flags);

  CommonArgs diagnose_args;
  CLI::App* diagnose = app.add_subcommand(
      "diagnose", "recompute diagnostics from persisted chains");
  add_common(diagnose, diagnose_args);

  CommonArgs pipeline_args;
  CLI::App* pipeline =
      app.add_subcommand("pipeline", "run every stage in order");
  add_common(pipeline, pipeline_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(calibrate)) return run_calibrate(calibrate_args);
    if (app.got_subcommand(emulate)) return run_emulate(emulate_args);
    if (app.got_subcommand(autoencode)) return run_autoencode(autoencode_args);
    if (app.got_subcommand(sample)) return run_sample(sample_args, sample_flags);
    if (app.got_subcommand(diagnose)) return run_diagnose(diagnose_args);
    if (app.got_subcommand(pipeline)) return run_full(pipeline_args);
  } catch (const ces::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ces::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
