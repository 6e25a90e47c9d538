// Command-line entry point: run sampling jobs, compute diagnostics on saved
// traces, and execute the packaged comparison experiments.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "eqn/errors.hpp"
#include "eqn/experiments.hpp"

namespace fs = std::filesystem;
using namespace eqn;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct SampleArgs {
  std::string config_path;
  std::string resume_path;
  std::string output;
  std::string divergence;
  std::int64_t seed = -1;
  int workers = 0;
  int walkers = 0;
  int metropolize = -1;  // -1: keep config value
};

int cmd_sample(const SampleArgs& a) {
  Config cfg = Config::parse_file(a.config_path);
  if (a.seed >= 0) cfg.set("run", "seed", std::to_string(a.seed));
  if (a.workers > 0) cfg.set("run", "workers", std::to_string(a.workers));
  if (!a.output.empty()) cfg.set("run", "output", a.output);
  if (a.walkers > 0) cfg.set("ensemble", "walkers", std::to_string(a.walkers));
  if (a.metropolize >= 0)
    cfg.set("sampler", "metropolize", a.metropolize ? "true" : "false");
  if (!a.divergence.empty()) cfg.set("sampler", "divergence", a.divergence);

  RunSetup setup = build_setup(cfg);
  const bool resume = !a.resume_path.empty();
  if (resume) {
    const fs::path derived = fs::path(setup.output_dir) / (setup.trace_name + ".ckpt");
    if (fs::path(a.resume_path) != derived) {
      fs::create_directories(setup.output_dir);
      fs::copy_file(a.resume_path, derived, fs::copy_options::overwrite_existing);
    }
  }
  auto res = run_single(setup, resume);
  std::cout << "trace: " << res.trace_path << "\n";
  std::cout << "checkpoint: " << res.checkpoint_path << "\n";
  std::cout << "acceptance: " << res.stats.acceptance_rate()
            << "  step_errors: " << res.stats.step_errors << "\n";
  return 0;
}

int cmd_diagnose(const std::vector<std::string>& paths, const std::string& reference,
                 const std::string& basis_name, const std::string& output) {
  std::vector<ChainTrace> traces;
  for (const auto& p : paths) {
    try {
      traces.push_back(read_trace(p));
    } catch (const std::exception& e) {
      throw std::runtime_error("cannot read trace '" + p + "': " + e.what());
    }
  }
  const CostBasis basis =
      basis_name == "seconds" ? CostBasis::seconds : CostBasis::gradients;
  std::string ref = reference;
  if (ref.empty()) ref = traces.front().meta.sampler;
  auto report = summarize_traces(traces, ref, basis);
  std::cout << report.table();
  if (!output.empty()) {
    fs::create_directories(output);
    std::ofstream(fs::path(output) / "report.txt") << report.table();
    std::ofstream(fs::path(output) / "report.kv") << report.key_values();
    std::cout << "report written to " << output << "\n";
  }
  return 0;
}

int cmd_experiment(const std::string& preset, const std::string& output,
                   const PresetOverrides& ov) {
  auto names = preset_names();
  if (std::find(names.begin(), names.end(), preset) == names.end()) {
    std::cerr << "unknown preset '" << preset << "'; available presets:\n";
    for (const auto& n : names) std::cerr << "  " << n << "\n";
    return kExitConfig;
  }
  auto out = run_preset(preset, output, ov);
  for (const auto& f : out.failures) std::cerr << "roster entry failed: " << f << "\n";
  std::cout << out.report_table;
  if (!out.report_path.empty()) std::cout << "report written to " << out.report_path << "\n";
  if (out.trace_paths.empty()) {
    std::cerr << "every roster entry failed\n";
    return kExitRuntime;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ensemble quasi-Newton MCMC sampler"};
  app.require_subcommand(1);

  SampleArgs sargs;
  auto* sample = app.add_subcommand("sample", "run a sampling job from a config file");
  sample->add_option("--config", sargs.config_path, "run configuration file")
      ->required()
      ->envname("EQN_CONFIG");
  sample->add_option("--seed", sargs.seed, "override [run] seed")->envname("EQN_SEED");
  sample->add_option("--workers", sargs.workers, "override [run] workers")
      ->envname("EQN_WORKERS");
  sample->add_option("--output", sargs.output, "override [run] output directory")
      ->envname("EQN_OUTPUT");
  sample->add_option("--resume", sargs.resume_path, "checkpoint file to resume from");
  sample->add_option("--walkers", sargs.walkers, "override [ensemble] walkers");
  sample->add_flag("--metropolize,!--no-metropolize",
                   [&sargs](std::int64_t v) { sargs.metropolize = v > 0 ? 1 : 0; },
                   "override [sampler] metropolize");
  sample->add_option("--divergence", sargs.divergence,
                     "override [sampler] divergence (analytic|noisy|omitted)")
      ->check(CLI::IsMember({"analytic", "noisy", "omitted"}));

  std::vector<std::string> dpaths;
  std::string dref, dbasis = "gradients", doutput;
  auto* diagnose = app.add_subcommand("diagnose", "summarize saved traces");
  diagnose->add_option("traces", dpaths, "trace files")->required();
  diagnose->add_option("--reference", dref, "sampler name normalized to efficiency 1");
  diagnose->add_option("--cost-basis", dbasis, "gradients|seconds")
      ->check(CLI::IsMember({"gradients", "seconds"}));
  diagnose->add_option("--output", doutput, "directory for report files");

  std::string ename, eoutput = "experiment_out";
  PresetOverrides ov;
  int egrid = 0, ewalkers = 0;
  std::int64_t eiters = 0, eseed = -1;
  auto* experiment = app.add_subcommand("experiment", "run a packaged experiment preset");
  experiment->add_option("preset", ename, "preset name")->required();
  experiment->add_option("--output", eoutput, "output directory");
  experiment->add_option("--grid", egrid, "override grid size (cox preset)");
  experiment->add_option("--walkers", ewalkers, "override walker count");
  experiment->add_option("--iterations", eiters, "override iteration count");
  experiment->add_option("--seed", eseed, "override seed");
  experiment->add_option("--workers", ov.workers, "worker threads")->envname("EQN_WORKERS");
  experiment->add_flag("--full", ov.full, "run the full-size (overnight) variant");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sample) return cmd_sample(sargs);
    if (*diagnose) return cmd_diagnose(dpaths, dref, dbasis, doutput);
    if (*experiment) {
      if (egrid > 0) ov.grid = egrid;
      if (ewalkers > 0) ov.walkers = ewalkers;
      if (eiters > 0) ov.iterations = std::uint64_t(eiters);
      if (eseed >= 0) ov.seed = std::uint64_t(eseed);
      return cmd_experiment(ename, eoutput, ov);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
