#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "eqn/metropolis.hpp"
#include "eqn/precond.hpp"
#include "eqn/samplers.hpp"
#include "eqn/targets.hpp"

// Ensemble state, the group-sequential update loop, Gibbs blocking, and
// checkpointing.  Walkers are partitioned into equally sized groups; a
// walker's preconditioner sees only positions of walkers in other groups,
// taken from a snapshot frozen for the whole group activation, so all
// walkers of the active group can move in parallel.

namespace eqn {

enum class InitKind { target, ball, file };

struct EnsembleSpec {
  int walkers = 8;
  int groups = 2;
  // Iterations each group runs per activation before the rotation moves on
  // (snapshots refresh once per activation).
  int refresh_every = 1;
  InitKind init = InitKind::target;
  Vec ball_center;
  double ball_radius = 1.0;
  std::string restore_path;

  void validate() const;
  int group_size() const { return walkers / groups; }
  int complement_size() const { return walkers - walkers / groups; }
};

struct RunStats {
  std::uint64_t proposals = 0;
  std::uint64_t accepted = 0;
  std::uint64_t step_errors = 0;
  std::uint64_t gradient_evals = 0;  // full block-gradient evaluations
  double acceptance_rate() const {
    return proposals ? double(accepted) / double(proposals) : 1.0;
  }
};

struct EnsembleState {
  int dim = 0;
  int walkers = 0;
  int groups = 1;
  std::uint64_t iteration = 0;
  std::vector<WalkerState> states;
  std::vector<std::uint64_t> rng_keys;
  std::vector<std::uint64_t> rng_counters;
  RunStats stats;

  int group_of(int walker) const { return walker / (walkers / groups); }
};

EnsembleState initialize(const EnsembleSpec& spec, const TargetDensity& target,
                         std::uint64_t seed);

enum class SamplerKind { eqn, hmc, mala, overdamped };

std::string to_string(SamplerKind k);
SamplerKind sampler_kind_from_string(const std::string& s);

// One Gibbs block: a coordinate set with its own kernel configuration.
// steps_per_iteration is the trajectory length for eqn, the leapfrog count
// for hmc, and the number of chained steps for mala/overdamped.
struct GibbsBlock {
  std::string name;
  std::vector<int> coords;  // empty = all coordinates
  SamplerKind kind = SamplerKind::eqn;
  SamplerConfig sampler;
  PreconditionerSpec precond;
};

// A full-space update is a single block over all coordinates.
std::vector<GibbsBlock> single_block(const SamplerConfig& s, const PreconditionerSpec& p);

// Row extraction runs inside worker threads (pure per-walker function);
// emission runs on the driver thread in (iteration, walker) order.
struct RunControl {
  std::uint64_t iterations = 1;
  int workers = 1;
  int row_width = 0;
  std::function<void(std::uint64_t iter, int walker, const WalkerState& state,
                     bool accepted, MutSpan row)>
      extract;
  std::function<void(std::uint64_t iter, ConstSpan row_block)> emit;  // L x row_width
  std::function<void(std::uint64_t iters_done)> on_band;  // checkpoint hook
};

// Advances the ensemble by control.iterations Gibbs iterations (each block
// updated once per iteration, groups rotated with refresh_every banding).
void run(EnsembleState& ens, const TargetDensity& target,
         const std::vector<GibbsBlock>& blocks, const EnsembleSpec& spec,
         const RunControl& control);

// ---------------------------------------------------------------------------
// Checkpointing: exact binary snapshot of the ensemble and its rng streams.

void save_checkpoint(const std::string& path, const EnsembleState& ens,
                     std::uint64_t config_hash);
EnsembleState load_checkpoint(const std::string& path, std::uint64_t config_hash);

}  // namespace eqn
