#include <doctest.h>

#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "ces/pipeline.hpp"

using namespace ces;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json base_config(const std::string& out_dir) {
  json j;
  j["output"] = out_dir;
  j["problem"] = {{"benchmark", "linear"}, {"dim", 3},           {"obs_dim", 40},
                  {"prior_sigma", 1.0},    {"noise_variance", 0.1}, {"seed", 11}};
  j["calibration"] = {{"method", "eks"},
                      {"ensemble_size", 20},
                      {"iterations", 5},
                      {"seed", 21}};
  j["emulation"] = {{"type", "dense"},    {"hidden_layers", 2},
                    {"epochs", 40},       {"batch_size", 16},
                    {"learning_rate", 1e-3}, {"seed", 31}};
  j["autoencoder"] = {{"latent_dim", 2}, {"encoder_layers", 2},
                      {"decoder_layers", 2}, {"alpha", 2.0},
                      {"epochs", 40},    {"batch_size", 16},
                      {"seed", 41}};
  j["sampling"] = json::array(
      {{{"tag", "exact-pcn"},
        {"space", "exact"},
        {"kernel", "pcn"},
        {"step", 0.02},
        {"iterations", 400},
        {"burn_in", 100},
        {"seed", 51}},
       {{"tag", "dream-hmc"},
        {"space", "dream"},
        {"kernel", "hmc"},
        {"step", 0.05},
        {"leapfrog", 3},
        {"iterations", 400},
        {"burn_in", 100},
        {"seed", 52}}});
  j["diagnostics"] = {{"acf_lags", 20}, {"baseline", "exact-pcn"}};
  return j;
}

PipelineConfig parse(const json& j) { return parse_pipeline_config(j.dump()); }

void expect_config_error(json j, const std::string& fragment) {
  try {
    parse_pipeline_config(j.dump());
    FAIL_CHECK("expected a config error mentioning \"" << fragment << "\"");
  } catch (const ConfigError& e) {
    INFO("wanted \"" << fragment << "\" in \"" << e.what() << "\"");
    CHECK(std::string(e.what()).find(fragment) != std::string::npos);
  }
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

} // namespace

TEST_CASE("config documents parse into validated settings") {
  json j = base_config("somewhere");
  PipelineConfig cfg = parse(j);

  CHECK(cfg.output == "somewhere");
  CHECK(cfg.problem.benchmark == "linear");
  CHECK(cfg.problem.dim == 3);
  CHECK(cfg.problem.obs_dim == 40);
  CHECK(cfg.problem.seed == 11);
  CHECK(cfg.calibration.method == CalibrationMethod::Eks);
  CHECK(cfg.calibration.ensemble_size == 20);
  CHECK(cfg.emulation_configured);
  CHECK(cfg.autoencoder_configured);
  CHECK(cfg.autoencoder.spec.latent_dim == 2);
  REQUIRE(cfg.sampling.size() == 2);
  CHECK(cfg.sampling[0].tag == "exact-pcn");
  CHECK(cfg.sampling[0].chain.kernel == SamplerKernel::Pcn);
  CHECK(cfg.sampling[1].space == "dream");
  CHECK(cfg.sampling[1].chain.leapfrog_steps == 3);
  CHECK(cfg.acf_lags == 20);
  CHECK(cfg.baseline_tag == "exact-pcn");
  CHECK(pipeline_needs_emulator(cfg));
  CHECK(pipeline_needs_autoencoder(cfg));
  CHECK(cfg.source_text == j.dump());

  // Exact-only job lists need neither trained map.
  json lean = base_config("elsewhere");
  lean["sampling"] = json::array({lean["sampling"][0]});
  lean.erase("emulation");
  lean.erase("autoencoder");
  lean["diagnostics"].erase("baseline");
  PipelineConfig cfg2 = parse(lean);
  CHECK(!pipeline_needs_emulator(cfg2));
  CHECK(!cfg2.emulation_configured);
  CHECK(cfg2.baseline_tag.empty());
}

TEST_CASE("malformed config documents are rejected with the offending key") {
  const std::string out = "unused";
  expect_config_error(json::parse(R"({"problem": 3})"), "problem");

  json j = base_config(out);
  j["problem"].erase("seed");
  expect_config_error(j, "problem.seed");

  j = base_config(out);
  j["problem"]["benchmark"] = "quadratic";
  expect_config_error(j, "quadratic");

  j = base_config(out);
  j["problem"]["typo_key"] = 1;
  expect_config_error(j, "typo_key");

  j = base_config(out);
  j["calibration"].erase("seed");
  expect_config_error(j, "calibration.seed");

  j = base_config(out);
  j["sampling"][1].erase("seed");
  expect_config_error(j, "sampling[1].seed");

  j = base_config(out);
  j["sampling"][1]["tag"] = "exact-pcn";
  expect_config_error(j, "duplicate tag");

  j = base_config(out);
  j["sampling"][0]["space"] = "latent";
  expect_config_error(j, "latent");

  j = base_config(out);
  j["sampling"][0]["kernel"] = "rwm";
  expect_config_error(j, "rwm");

  j = base_config(out);
  j["sampling"][0]["burn_in"] = 400;
  expect_config_error(j, "burn_in");

  j = base_config(out);
  j["autoencoder"]["latent_dim"] = 3;
  expect_config_error(j, "latent_dim");

  j = base_config(out);
  j.erase("emulation");
  expect_config_error(j, "emulation");

  j = base_config(out);
  j["emulation"]["type"] = "conv";
  expect_config_error(j, "conv");

  j = base_config(out);
  j["diagnostics"]["baseline"] = "missing-tag";
  expect_config_error(j, "missing-tag");

  j = base_config(out);
  j["problem"]["truth"] = {1.0, 2.0};
  expect_config_error(j, "truth");

  CHECK_THROWS_AS(parse_pipeline_config("not json at all"), ConfigError);
}

TEST_CASE("benchmarks are pinned to their seeds") {
  ProblemConfig p;
  p.benchmark = "linear";
  p.dim = 3;
  p.obs_dim = 40;
  p.noise_variance = 0.1;
  p.seed = 7;

  Benchmark a = make_benchmark(p);
  Benchmark b = make_benchmark(p);
  CHECK(a.u_true.isApprox(Vector::LinSpaced(3, -1.0, 1.0)));
  CHECK((a.obs.y() - b.obs.y()).norm() == 0.0);
  Vector probe = Vector::Ones(3);
  CHECK((a.model->evaluate(probe) - b.model->evaluate(probe)).norm() == 0.0);
  CHECK(a.model->solve_count() == 1); // data generation is not billed

  p.seed = 8;
  Benchmark c = make_benchmark(p);
  CHECK((a.obs.y() - c.obs.y()).norm() > 0.0);

  ProblemConfig q;
  q.benchmark = "bbd";
  q.dim = 4;
  q.obs_dim = 30;
  q.noise_variance = 1.0;
  q.seed = 9;
  Benchmark d = make_benchmark(q);
  for (int i = 0; i < 4; ++i) {
    CHECK(d.u_true[i] == std::floor(d.u_true[i]));
    CHECK(d.u_true[i] >= 0.0);
    CHECK(d.u_true[i] <= 4.0);
  }

  ProblemConfig e;
  e.benchmark = "elliptic";
  e.grid = 8;
  e.snr = 50.0;
  e.seed = 10;
  Benchmark f = make_benchmark(e);
  CHECK(f.model->input_dim() == 64);
  CHECK(f.model->output_dim() == 25);
  CHECK(f.grid == 8);
  const double peak = f.model->evaluate(f.u_true).cwiseAbs().maxCoeff();
  CHECK(f.obs.sigma2() ==
        doctest::Approx(std::pow(peak / 50.0, 2)).epsilon(1e-9));
  f.model->reset_solve_count();
}

TEST_CASE("each stage persists artifacts and resumes from them") {
  fs::path dir = fresh_dir("ces_pipe_stages");
  json j = base_config(dir.string());
  PipelineConfig cfg = parse(j);
  Benchmark bench = make_benchmark(cfg.problem);

  CalibrationHistory hist = stage_calibrate(bench, cfg, false);
  CHECK(fs::exists(dir / "ensemble_params.tnsr"));
  CalibrationHistory hist2 = stage_calibrate(bench, cfg, true);
  CHECK((hist.final_params() - hist2.final_params()).norm() == 0.0);

  Emulator em = stage_emulate(bench, hist, cfg, false);
  CHECK(fs::exists(dir / "emulator.net"));
  Emulator em2 = stage_emulate(bench, hist, cfg, true);
  Vector probe = Vector::Constant(3, 0.3);
  CHECK((em.evaluate(probe) - em2.evaluate(probe)).norm() == 0.0);

  Autoencoder ae = stage_autoencode(bench, hist, cfg, false);
  CHECK(fs::exists(dir / "autoencoder.net"));
  Autoencoder ae2 = stage_autoencode(bench, hist, cfg, true);
  CHECK((ae.encode(probe) - ae2.encode(probe)).norm() == 0.0);

  NamedChains chains = stage_sample(bench, hist, &em, &ae, cfg, false);
  REQUIRE(chains.size() == 2);
  CHECK(fs::exists(dir / "chain_exact-pcn.tnsr"));
  CHECK(fs::exists(dir / "chain_dream-hmc.json"));
  NamedChains loaded = stage_sample(bench, hist, &em, &ae, cfg, true);
  CHECK((chains[0].second.samples - loaded[0].second.samples).norm() == 0.0);
  CHECK((chains[1].second.samples - loaded[1].second.samples).norm() == 0.0);
  CHECK(loaded[1].second.iterations_run == 400);

  stage_diagnose(bench, chains, cfg);
  for (const char* name :
       {"acf_exact-pcn.csv", "misfit_exact-pcn.csv", "kl_exact-pcn.csv",
        "fields_mean_dream-hmc.csv", "fields_sd_dream-hmc.csv",
        "efficiency.csv"})
    CHECK(fs::exists(dir / name));

  fs::remove_all(dir);
}

TEST_CASE("small pipelines finish fast and rerun bit-identically") {
  fs::path dir_a = fresh_dir("ces_pipe_a");
  fs::path dir_b = fresh_dir("ces_pipe_b");

  json j = base_config(dir_a.string());
  const auto t0 = std::chrono::steady_clock::now();
  std::string out = run_pipeline(parse(j), false);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  CHECK(out == dir_a.string());
  CHECK(seconds < 60.0);
  CHECK(fs::exists(dir_a / "config.json"));
  CHECK(read_bytes(dir_a / "config.json") == j.dump());

  // The same document, modulo the output directory, lands on the same bits.
  j["output"] = dir_b.string();
  run_pipeline(parse(j), false);
  for (const char* name : {"chain_exact-pcn.tnsr", "chain_dream-hmc.tnsr",
                           "ensemble_params.tnsr"})
    CHECK(read_bytes(dir_a / name) == read_bytes(dir_b / name));

  // A resumed run leaves the artifacts untouched.
  const std::string before = read_bytes(dir_b / "chain_dream-hmc.tnsr");
  run_pipeline(parse(j), true);
  CHECK(read_bytes(dir_b / "chain_dream-hmc.tnsr") == before);

  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("stage failures name the stage and keep earlier artifacts") {
  fs::path dir = fresh_dir("ces_pipe_fail");
  json j = base_config(dir.string());
  // Passes parsing (step sizes are only bounded by the kernels) but the
  // pcn contraction requires step < 4 once the chain starts.
  j["sampling"][0]["step"] = 5.0;

  try {
    run_pipeline(parse(j), false);
    FAIL_CHECK("expected the sampling stage to fail");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).rfind("sample:", 0) == 0);
  }
  CHECK(fs::exists(dir / "ensemble_params.tnsr"));
  CHECK(fs::exists(dir / "emulator.net"));
  CHECK(!fs::exists(dir / "efficiency.csv"));

  fs::remove_all(dir);
}

#ifdef CES_CLI_PATH
namespace {

int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(CES_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

} // namespace

TEST_CASE("command line maps outcomes onto exit codes") {
  fs::path dir = fresh_dir("ces_pipe_cli");
  json j = base_config((dir / "run").string());
  const fs::path cfg_path = dir / "config.json";
  std::ofstream(cfg_path) << j.dump(2);

  CHECK(run_cli("pipeline --config " + cfg_path.string()) == 0);
  CHECK(fs::exists(dir / "run" / "efficiency.csv"));

  // Stage subcommands reuse the persisted artifacts without retraining.
  CHECK(run_cli("diagnose --config " + cfg_path.string()) == 0);
  CHECK(run_cli("sample --config " + cfg_path.string() +
                " --tag extra --space exact --kernel pcn --step 0.02"
                " --iters 200 --burnin 50 --seed 77") == 0);
  CHECK(fs::exists(dir / "run" / "chain_extra.tnsr"));

  // Config mistakes exit with 2.
  std::ofstream(dir / "broken.json") << "{ not json";
  CHECK(run_cli("pipeline --config " + (dir / "broken.json").string()) == 2);
  json bad = base_config((dir / "run2").string());
  bad["problem"].erase("seed");
  std::ofstream(dir / "bad.json") << bad.dump(2);
  CHECK(run_cli("pipeline --config " + (dir / "bad.json").string()) == 2);

  // Numerical failures exit with 3: a chain pinned at rejection leaves a
  // constant misfit series and the autocorrelation refuses it.
  json stuck = base_config((dir / "run3").string());
  stuck["sampling"] = json::array({{{"tag", "frozen"},
                                    {"space", "exact"},
                                    {"kernel", "pcn"},
                                    {"step", 3.999},
                                    {"iterations", 300},
                                    {"burn_in", 50},
                                    {"seed", 61}}});
  stuck.erase("emulation");
  stuck.erase("autoencoder");
  stuck["diagnostics"].erase("baseline");
  std::ofstream(dir / "stuck.json") << stuck.dump(2);
  CHECK(run_cli("pipeline --config " + (dir / "stuck.json").string()) == 3);

  fs::remove_all(dir);
}
#endif
