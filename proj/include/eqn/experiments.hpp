#pragma once

#include <memory>

#include "eqn/config.hpp"
#include "eqn/diagnostics.hpp"
#include "eqn/ensemble.hpp"
#include "eqn/trace.hpp"

namespace eqn {

// Named scalar function of a walker's full position.
struct Observable {
  std::string name;
  std::function<double(ConstSpan)> fn;
};

// Resolves observable names ("coord:i", "sq:i", target-specific names like
// "minz"/"maxlambda"/"minmu"/"beta" for the mixture posterior or
// "sigma2"/"beta"/"latent:k"/"latent_mean" for the Cox posterior).
std::vector<Observable> make_observables(const std::vector<std::string>& names,
                                         const TargetDensity& target);

// Everything needed to execute one sampling run.
struct RunSetup {
  std::shared_ptr<TargetDensity> target;
  std::vector<GibbsBlock> blocks;
  EnsembleSpec ensemble;
  std::uint64_t iterations = 100;
  std::uint64_t seed = 0;
  int workers = 1;
  std::vector<std::string> observables;
  std::string output_dir = ".";
  std::string trace_name = "trace";
  std::string sampler_label = "sampler";
  std::string preset_label;
  bool binary_trace = true;
  std::uint64_t checkpoint_every = 0;  // 0: only at the end
  std::uint64_t config_hash = 0;
  std::uint64_t target_hash = 0;
  bool biased = false;
};

// Schema for run configs (cmd_sample) and construction of the setup.
Config::Schema run_config_schema();
RunSetup build_setup(const Config& cfg);

// Hash of the semantically relevant part of a config (workers and output
// paths excluded, so execution details do not change run identity).
std::uint64_t semantic_hash(const Config& cfg);

struct RunOutcome {
  std::string trace_path;
  std::string checkpoint_path;
  RunStats stats;
  double seconds_per_iteration = 0.0;
};

// Executes a run end to end: initialize (or resume), iterate, stream the
// trace, checkpoint periodically, finalize the sidecar.
RunOutcome run_single(const RunSetup& setup, bool resume = false);

// Summary of one finished trace for the comparison table.
RunSummary summarize_trace(const ChainTrace& trace);

// Builds the cross-sampler comparison; all traces must share target lineage.
ComparisonReport summarize_traces(const std::vector<ChainTrace>& traces,
                                  const std::string& reference, CostBasis basis);

// ---------------------------------------------------------------------------
// Stepsize tuning

struct AcceptanceBand {
  double lo = 0.75;
  double hi = 0.80;
};

struct TuneResult {
  double h = 0.0;
  double acceptance = 0.0;
  std::vector<std::pair<double, double>> pilot_curve;  // (h, acceptance)
};

// Bisects the stepsize until short pilot runs land in the acceptance band.
// Throws with the measured curve when the band is unreachable.
TuneResult tune_stepsize(const RunSetup& setup, const AcceptanceBand& band,
                         double h0 = 0.1, std::uint64_t pilot_iterations = 60);

// ---------------------------------------------------------------------------
// Presets

struct PresetOverrides {
  std::optional<int> grid;
  std::optional<int> walkers;
  std::optional<std::uint64_t> iterations;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  bool full = false;  // cox preset: run the full-size variant
};

std::vector<std::string> preset_names();

struct PresetOutcome {
  std::vector<std::string> trace_paths;
  std::vector<std::string> failures;   // roster entries that crashed
  std::string report_table;
  std::string report_path;
};

// Runs every roster entry of the preset, writes traces, diagnostics report,
// and the comparison table.  Roster crashes are recorded and skipped.
PresetOutcome run_preset(const std::string& name, const std::string& output_dir,
                         const PresetOverrides& overrides = {});

}  // namespace eqn
