#include "eqn/ensemble.hpp"

#include <atomic>
#include <cstring>
#include <fstream>
#include <thread>

#include "eqn/errors.hpp"

namespace eqn {

void EnsembleSpec::validate() const {
  if (walkers < 2) throw ConfigError("ensemble: need at least 2 walkers", "walkers");
  if (groups < 2)
    throw ConfigError("ensemble: need at least 2 groups (a single group leaves every "
                      "complement empty)",
                      "groups");
  if (walkers % groups != 0)
    throw ConfigError("ensemble: groups (" + std::to_string(groups) +
                          ") must divide walkers (" + std::to_string(walkers) + ")",
                      "groups");
  if (refresh_every < 1) throw ConfigError("ensemble: refresh_every must be >= 1", "refresh_every");
}

EnsembleState initialize(const EnsembleSpec& spec, const TargetDensity& target,
                         std::uint64_t seed) {
  spec.validate();
  EnsembleState ens;
  ens.dim = target.dim();
  ens.walkers = spec.walkers;
  ens.groups = spec.groups;
  ens.states.resize(spec.walkers);
  ens.rng_keys.resize(spec.walkers);
  ens.rng_counters.resize(spec.walkers);

  for (int i = 0; i < spec.walkers; ++i) {
    PhiloxRng rng(seed, std::uint64_t(i));
    WalkerState& w = ens.states[i];
    switch (spec.init) {
      case InitKind::target:
        if (!target.can_sample_init())
          throw ConfigError("target '" + target.name() +
                                "' has no initialization sampler; use ball init",
                            "init");
        w.q = target.sample_init(rng);
        break;
      case InitKind::ball: {
        w.q.resize(ens.dim);
        for (int d = 0; d < ens.dim; ++d) {
          const double c =
              spec.ball_center.empty() ? 0.0 : spec.ball_center[std::size_t(d)];
          w.q[d] = c + spec.ball_radius * rng.normal();
        }
        break;
      }
      case InitKind::file:
        throw ConfigError("file restore goes through load_checkpoint", "init");
    }
    w.p.resize(ens.dim);
    rng.fill_normal(w.p);
    ens.rng_keys[i] = rng.key();
    ens.rng_counters[i] = rng.counter();
  }
  return ens;
}

std::string to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::eqn: return "eqn";
    case SamplerKind::hmc: return "hmc";
    case SamplerKind::mala: return "mala";
    case SamplerKind::overdamped: return "overdamped";
  }
  return "?";
}

SamplerKind sampler_kind_from_string(const std::string& s) {
  if (s == "eqn" || s == "baoab" || s == "langevin") return SamplerKind::eqn;
  if (s == "hmc") return SamplerKind::hmc;
  if (s == "mala") return SamplerKind::mala;
  if (s == "overdamped") return SamplerKind::overdamped;
  throw ConfigError("unknown sampler kind '" + s + "'", "kind");
}

std::vector<GibbsBlock> single_block(const SamplerConfig& s, const PreconditionerSpec& p) {
  GibbsBlock b;
  b.name = "all";
  b.sampler = s;
  b.precond = p;
  return {b};
}

namespace {

BlockTarget make_block_target(const TargetDensity& target, const Vec& full_q,
                              const std::vector<int>& coords) {
  if (coords.empty()) return BlockTarget::whole(target);
  BlockTarget bt;
  bt.dim = static_cast<int>(coords.size());
  bt.log_density = [&target, &full_q, &coords](ConstSpan xb) {
    Vec tmp = full_q;
    for (std::size_t j = 0; j < coords.size(); ++j) tmp[coords[j]] = xb[j];
    return target.log_density(tmp);
  };
  bt.gradient = [&target, &full_q, &coords](ConstSpan xb, MutSpan out) {
    Vec tmp = full_q;
    for (std::size_t j = 0; j < coords.size(); ++j) tmp[coords[j]] = xb[j];
    target.gradient_block(tmp, coords, out);
  };
  return bt;
}

struct ActivationShared {
  // complement positions restricted to each block's coordinates
  std::vector<std::vector<Vec>> block_complements;
  // shared operator per block when B does not depend on the walker position
  std::vector<std::unique_ptr<WalkerPreconditioner>> shared_ops;
};

}  // namespace

void run(EnsembleState& ens, const TargetDensity& target,
         const std::vector<GibbsBlock>& blocks, const EnsembleSpec& spec,
         const RunControl& control) {
  spec.validate();
  if (blocks.empty()) throw std::invalid_argument("run: need at least one block");
  for (const auto& b : blocks) b.sampler.validate();
  const int group_size = spec.group_size();
  const int n_blocks = static_cast<int>(blocks.size());

  std::uint64_t done = 0;
  Vec band;  // refresh_every x walkers x row_width, (iter, walker)-major
  while (done < control.iterations) {
    const std::uint64_t r_band =
        std::min<std::uint64_t>(spec.refresh_every, control.iterations - done);
    if (control.row_width > 0)
      band.assign(r_band * ens.walkers * control.row_width, 0.0);

    for (int g = 0; g < ens.groups; ++g) {
      // freeze every position at the activation boundary
      std::vector<Vec> snapshot;
      snapshot.reserve(ens.walkers);
      for (const auto& w : ens.states) snapshot.push_back(w.q);

      ActivationShared shared;
      shared.block_complements.resize(n_blocks);
      shared.shared_ops.resize(n_blocks);
      for (int b = 0; b < n_blocks; ++b) {
        const auto& coords = blocks[b].coords;
        auto& comp = shared.block_complements[b];
        for (int j = 0; j < ens.walkers; ++j) {
          if (ens.group_of(j) == g) continue;
          if (coords.empty()) {
            comp.push_back(snapshot[j]);
          } else {
            Vec r(coords.size());
            for (std::size_t c = 0; c < coords.size(); ++c) r[c] = snapshot[j][coords[c]];
            comp.push_back(std::move(r));
          }
        }
        // Position-independent modes share one operator across the group.
        if (blocks[b].kind == SamplerKind::eqn &&
            (blocks[b].precond.mode != PrecondMode::local ||
             blocks[b].precond.lambda == 0.0)) {
          std::vector<ConstSpan> views(comp.begin(), comp.end());
          const int bdim = coords.empty() ? ens.dim : int(coords.size());
          Vec dummy(bdim, 0.0);
          shared.shared_ops[b] =
              build_preconditioner(blocks[b].precond, views, dummy, g * group_size);
        }
      }

      std::atomic<std::uint64_t> acc{0}, prop{0}, errs{0}, grads{0};

      auto walker_task = [&](int i) {
        PhiloxRng rng = PhiloxRng::from_key(ens.rng_keys[i], ens.rng_counters[i]);
        WalkerState& full = ens.states[i];
        std::vector<std::unique_ptr<WalkerPreconditioner>> own_ops(n_blocks);
        std::vector<Vec> grad_cache(n_blocks);

        for (std::uint64_t r = 0; r < r_band; ++r) {
          double accepted_blocks = 0.0;
          for (int b = 0; b < n_blocks; ++b) {
            const auto& blk = blocks[b];
            const auto& coords = blk.coords;
            const int bdim = coords.empty() ? ens.dim : int(coords.size());

            WalkerState bs;
            if (coords.empty()) {
              bs = full;
            } else {
              bs.q.resize(bdim);
              bs.p.resize(bdim);
              for (int c = 0; c < bdim; ++c) {
                bs.q[c] = full.q[coords[c]];
                bs.p[c] = full.p[coords[c]];
              }
            }

            BlockTarget bt = make_block_target(target, full.q, coords);
            WalkerPreconditioner* op = shared.shared_ops[b].get();
            if (!op && blk.kind == SamplerKind::eqn) {
              if (!own_ops[b]) {
                std::vector<ConstSpan> views(shared.block_complements[b].begin(),
                                             shared.block_complements[b].end());
                own_ops[b] = build_preconditioner(blk.precond, views, bs.q, i);
              }
              op = own_ops[b].get();
            }

            const int steps = blk.sampler.steps_per_iteration;
            TrajectoryResult res;
            std::uint64_t prop_inc = 1, acc_inc = 0, grad_inc = 0;
            try {
              switch (blk.kind) {
                case SamplerKind::eqn: {
                  grad_inc = std::uint64_t(steps) + (grad_cache[b].empty() ? 1 : 0);
                  res = run_iteration(bt, bs, *op, blk.sampler, rng,
                                      grad_cache[b].empty() ? nullptr : &grad_cache[b]);
                  if (grad_cache[b].empty()) {
                    // first iteration warm-start: recover the cache for next time
                    grad_cache[b].resize(bdim);
                    bt.gradient(res.state.q, grad_cache[b]);
                    grad_inc += 1;
                  }
                  acc_inc = res.accepted ? 1 : 0;
                  break;
                }
                case SamplerKind::hmc: {
                  const bool warm = !grad_cache[b].empty();
                  grad_inc = std::uint64_t(steps) + (warm ? 0 : 1);
                  Vec fresh(bdim);
                  auto r = hmc_step(bt, bs.q, blk.sampler.h, steps, rng,
                                    warm ? &grad_cache[b] : nullptr, &fresh);
                  grad_cache[b] = std::move(fresh);
                  res.state.q = std::move(r.q);
                  res.state.p = bs.p;
                  res.accepted = r.accepted;
                  acc_inc = r.accepted ? 1 : 0;
                  break;
                }
                case SamplerKind::mala: {
                  prop_inc = std::uint64_t(steps);
                  grad_inc = 2 * std::uint64_t(steps);
                  Vec x = bs.q;
                  std::uint64_t a = 0;
                  for (int st = 0; st < steps; ++st) {
                    auto r = mala_step(bt, x, blk.sampler.h, rng);
                    a += r.accepted ? 1 : 0;
                    x = std::move(r.x);
                  }
                  res.state.q = std::move(x);
                  res.state.p = bs.p;
                  res.accepted = 2 * a >= std::uint64_t(steps);
                  acc_inc = a;
                  break;
                }
                case SamplerKind::overdamped: {
                  grad_inc = std::uint64_t(steps);
                  Vec x = bs.q;
                  for (int st = 0; st < steps; ++st)
                    x = overdamped_step(bt, x, blk.sampler.h, rng);
                  res.state.q = std::move(x);
                  res.state.p = bs.p;
                  res.accepted = true;
                  acc_inc = prop_inc;
                  break;
                }
              }
            } catch (const std::exception&) {
              errs.fetch_add(1, std::memory_order_relaxed);
              res.accepted = false;
              res.state = bs;
              for (auto& v : res.state.p) v = -v;
              acc_inc = 0;
            }
            prop.fetch_add(prop_inc, std::memory_order_relaxed);
            grads.fetch_add(grad_inc, std::memory_order_relaxed);
            acc.fetch_add(acc_inc, std::memory_order_relaxed);
            if (res.accepted) accepted_blocks += 1.0;

            if (coords.empty()) {
              full = std::move(res.state);
            } else {
              for (int c = 0; c < bdim; ++c) {
                full.q[coords[c]] = res.state.q[c];
                full.p[coords[c]] = res.state.p[c];
              }
              // other blocks' gradients are stale once these coordinates moved
              for (int b2 = 0; b2 < n_blocks; ++b2)
                if (b2 != b) grad_cache[b2].clear();
            }
          }
          if (control.row_width > 0 && control.extract) {
            MutSpan row{band.data() +
                            (r * ens.walkers + std::size_t(i)) * control.row_width,
                        std::size_t(control.row_width)};
            control.extract(done + r, i, full, accepted_blocks / n_blocks > 0.5, row);
          }
        }
        ens.rng_counters[i] = rng.counter();
      };

      const int first = g * group_size;
      const int workers = std::max(1, std::min(control.workers, group_size));
      if (workers == 1) {
        for (int k = 0; k < group_size; ++k) walker_task(first + k);
      } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t)
          pool.emplace_back([&, t] {
            for (int k = t; k < group_size; k += workers) walker_task(first + k);
          });
        for (auto& th : pool) th.join();
      }

      ens.stats.proposals += prop.load();
      ens.stats.accepted += acc.load();
      ens.stats.step_errors += errs.load();
      ens.stats.gradient_evals += grads.load();
    }

    if (control.row_width > 0 && control.emit) {
      for (std::uint64_t r = 0; r < r_band; ++r)
        control.emit(done + r,
                     ConstSpan{band.data() + r * ens.walkers * control.row_width,
                               std::size_t(ens.walkers) * control.row_width});
    }
    done += r_band;
    ens.iteration += r_band;
    if (control.on_band) control.on_band(done);
  }
}

// ---------------------------------------------------------------------------
// checkpointing

namespace {

constexpr char kMagic[8] = {'E', 'Q', 'N', 'C', 'K', '0', '0', '1'};

template <typename T>
void put(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& f) {
  T v;
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const EnsembleState& ens,
                     std::uint64_t config_hash) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot write " + path);
  f.write(kMagic, sizeof(kMagic));
  put(f, config_hash);
  put(f, ens.iteration);
  put(f, std::uint32_t(ens.walkers));
  put(f, std::uint32_t(ens.dim));
  put(f, std::uint32_t(ens.groups));
  put(f, ens.stats.proposals);
  put(f, ens.stats.accepted);
  put(f, ens.stats.step_errors);
  put(f, ens.stats.gradient_evals);
  for (int i = 0; i < ens.walkers; ++i) {
    put(f, ens.rng_keys[i]);
    put(f, ens.rng_counters[i]);
    f.write(reinterpret_cast<const char*>(ens.states[i].q.data()),
            std::streamsize(sizeof(double)) * ens.dim);
    f.write(reinterpret_cast<const char*>(ens.states[i].p.data()),
            std::streamsize(sizeof(double)) * ens.dim);
  }
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

EnsembleState load_checkpoint(const std::string& path, std::uint64_t config_hash) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot read " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const auto hash = get<std::uint64_t>(f);
  if (config_hash != 0 && hash != config_hash)
    throw std::runtime_error("checkpoint: config hash mismatch for " + path);
  EnsembleState ens;
  ens.iteration = get<std::uint64_t>(f);
  ens.walkers = int(get<std::uint32_t>(f));
  ens.dim = int(get<std::uint32_t>(f));
  ens.groups = int(get<std::uint32_t>(f));
  ens.stats.proposals = get<std::uint64_t>(f);
  ens.stats.accepted = get<std::uint64_t>(f);
  ens.stats.step_errors = get<std::uint64_t>(f);
  ens.stats.gradient_evals = get<std::uint64_t>(f);
  ens.states.resize(ens.walkers);
  ens.rng_keys.resize(ens.walkers);
  ens.rng_counters.resize(ens.walkers);
  for (int i = 0; i < ens.walkers; ++i) {
    ens.rng_keys[i] = get<std::uint64_t>(f);
    ens.rng_counters[i] = get<std::uint64_t>(f);
    ens.states[i].q.resize(ens.dim);
    ens.states[i].p.resize(ens.dim);
    f.read(reinterpret_cast<char*>(ens.states[i].q.data()),
           std::streamsize(sizeof(double)) * ens.dim);
    f.read(reinterpret_cast<char*>(ens.states[i].p.data()),
           std::streamsize(sizeof(double)) * ens.dim);
    if (!f) throw std::runtime_error("checkpoint: truncated walker data in " + path);
  }
  return ens;
}

}  // namespace eqn
