#include "eqn/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "eqn/errors.hpp"

namespace eqn {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// observables

std::vector<Observable> make_observables(const std::vector<std::string>& names,
                                         const TargetDensity& target) {
  std::vector<Observable> out;
  const int n = target.dim();
  const bool is_mixture = target.name() == "mixture";
  const bool is_cox = target.name() == "cox";
  const auto* cox = is_cox ? static_cast<const LogGaussianCoxTarget*>(&target) : nullptr;

  for (const auto& name : names) {
    Observable o;
    o.name = name;
    if (name.rfind("coord:", 0) == 0 || name.rfind("sq:", 0) == 0) {
      const bool sq = name[0] == 's';
      const int idx = std::stoi(name.substr(name.find(':') + 1));
      if (idx < 0 || idx >= n)
        throw ConfigError("observable '" + name + "' out of range for dim " +
                          std::to_string(n));
      o.fn = [idx, sq](ConstSpan q) { return sq ? q[idx] * q[idx] : q[idx]; };
    } else if (is_mixture && (name == "minz" || name == "maxlambda" || name == "minmu" ||
                              name == "beta")) {
      o.fn = [name](ConstSpan q) {
        const auto p = MixtureModelTarget::unpack(q);
        if (name == "minz") return std::min({p.z[0], p.z[1], p.z[2]});
        if (name == "maxlambda") return std::max({p.lambda[0], p.lambda[1], p.lambda[2]});
        if (name == "minmu") return std::min({p.mu[0], p.mu[1], p.mu[2]});
        return p.beta;
      };
    } else if (is_cox && name == "sigma2") {
      const int idx = cox->latent_dim();
      o.fn = [idx](ConstSpan q) { return std::exp(q[idx]); };
    } else if (is_cox && name == "beta") {
      const int idx = cox->latent_dim() + 1;
      o.fn = [idx](ConstSpan q) { return std::exp(q[idx]); };
    } else if (is_cox && name == "latent_mean") {
      const int m = cox->latent_dim();
      o.fn = [m](ConstSpan q) { return kernels::sum(q.subspan(0, m)) / double(m); };
    } else if (is_cox && name.rfind("latent:", 0) == 0) {
      const int idx = std::stoi(name.substr(7));
      if (idx < 0 || idx >= cox->latent_dim())
        throw ConfigError("observable '" + name + "' out of range");
      o.fn = [idx](ConstSpan q) { return q[idx]; };
    } else {
      throw ConfigError("unknown observable '" + name + "' for target " + target.name());
    }
    out.push_back(std::move(o));
  }
  return out;
}

// ---------------------------------------------------------------------------
// config schema and setup construction

Config::Schema run_config_schema() {
  return {
      {"target", {"kind", "variances", "radius", "width", "dim", "data_file", "grid",
                  "counts_file"}},
      {"sampler", {"kind", "h", "gamma", "steps_per_iteration", "metropolize",
                   "divergence", "implicit_tol", "implicit_max_iter", "implicit_damping",
                   "noisy_eps", "noisy_samples", "compact_o_divergence"}},
      {"preconditioner", {"mode", "mu", "lambda", "weight_metric", "weight_coords"}},
      {"gibbs", {"enabled", "latent_steps", "hyper_steps", "latent_mu", "hyper_mu",
                 "latent_h", "hyper_h"}},
      {"ensemble", {"walkers", "groups", "refresh_every", "init", "ball_radius",
                    "ball_center"}},
      {"run", {"iterations", "seed", "workers", "output", "trace_name", "trace_format",
               "observables", "checkpoint_every"}},
  };
}

std::uint64_t semantic_hash(const Config& cfg) {
  Config c = cfg;
  // execution details and run extent do not change a run's identity
  c.erase("run", "workers");
  c.erase("run", "output");
  c.erase("run", "trace_name");
  c.erase("run", "iterations");
  c.erase("run", "checkpoint_every");
  return c.hash();
}

namespace {

std::shared_ptr<TargetDensity> build_target(const Config& cfg) {
  const std::string kind = cfg.get("target", "kind");
  if (kind == "gaussian") {
    Vec variances = cfg.get_vec_or("target", "variances", {});
    if (variances.empty()) throw ConfigError("gaussian target needs variances", "target.variances");
    return std::make_shared<GaussianTarget>(std::move(variances));
  }
  if (kind == "ring") {
    return std::make_shared<RingTarget>(cfg.get_double("target", "radius"),
                                        cfg.get_double("target", "width"),
                                        int(cfg.get_int_or("target", "dim", 2)));
  }
  if (kind == "mixture") {
    return std::make_shared<MixtureModelTarget>(
        load_mixture_data(cfg.get("target", "data_file")));
  }
  if (kind == "cox") {
    auto [grid, counts] = load_cox_counts(cfg.get("target", "counts_file"));
    const int want = int(cfg.get_int_or("target", "grid", grid));
    if (want != grid)
      throw ConfigError("cox counts file has grid " + std::to_string(grid) +
                            " but config says " + std::to_string(want),
                        "target.grid");
    return std::make_shared<LogGaussianCoxTarget>(grid, std::move(counts));
  }
  throw ConfigError("unknown target kind '" + kind + "'", "target.kind");
}

SamplerConfig sampler_from(const Config& cfg, const std::string& kind) {
  SamplerConfig s;
  s.h = cfg.get_double("sampler", "h");
  s.gamma = cfg.get_double_or("sampler", "gamma", 1.0);
  s.steps_per_iteration = int(cfg.get_int_or("sampler", "steps_per_iteration", 1));
  const bool default_met = kind != "baoab" && kind != "overdamped";
  s.metropolize = cfg.get_bool_or("sampler", "metropolize", default_met);
  s.divergence =
      divergence_mode_from_string(cfg.get_or("sampler", "divergence", "analytic"));
  s.implicit_tol = cfg.get_double_or("sampler", "implicit_tol", 1e-10);
  s.implicit_max_iter = int(cfg.get_int_or("sampler", "implicit_max_iter", 50));
  s.implicit_damping = cfg.get_double_or("sampler", "implicit_damping", 1.0);
  s.noisy_eps = cfg.get_double_or("sampler", "noisy_eps", 1e-4);
  s.noisy_samples = int(cfg.get_int_or("sampler", "noisy_samples", 1));
  s.compact_o_divergence = cfg.get_bool_or("sampler", "compact_o_divergence", false);
  s.validate();
  return s;
}

PreconditionerSpec precond_from(const Config& cfg) {
  PreconditionerSpec p;
  p.mode = precond_mode_from_string(cfg.get_or("preconditioner", "mode", "identity"));
  p.mu = cfg.get_double_or("preconditioner", "mu", 0.0);
  p.lambda = cfg.get_double_or("preconditioner", "lambda", 0.0);
  p.metric = weight_metric_from_string(
      cfg.get_or("preconditioner", "weight_metric", "inverse_covariance"));
  p.weight_coords = cfg.get_ints_or("preconditioner", "weight_coords", {});
  return p;
}

}  // namespace

RunSetup build_setup(const Config& cfg) {
  cfg.validate_schema(run_config_schema());
  RunSetup s;
  s.target = build_target(cfg);

  const std::string kind = cfg.get_or("sampler", "kind", "eqn");
  SamplerConfig sampler = sampler_from(cfg, kind);
  PreconditionerSpec precond = precond_from(cfg);
  if (kind == "baoab" || kind == "langevin" || kind == "hmc" || kind == "mala" ||
      kind == "overdamped")
    precond.mode = PrecondMode::identity;

  if (cfg.get_bool_or("gibbs", "enabled", false)) {
    if (s.target->name() != "cox")
      throw ConfigError("gibbs blocks are defined for the cox target", "gibbs.enabled");
    const auto* cox = static_cast<const LogGaussianCoxTarget*>(s.target.get());
    const int m = cox->latent_dim();
    GibbsBlock latent, hyper;
    latent.name = "latent";
    latent.coords.resize(m);
    for (int i = 0; i < m; ++i) latent.coords[i] = i;
    latent.kind = sampler_kind_from_string(kind);
    latent.sampler = sampler;
    latent.sampler.steps_per_iteration = int(cfg.get_int_or("gibbs", "latent_steps", 50));
    latent.sampler.h = cfg.get_double_or("gibbs", "latent_h", sampler.h);
    latent.precond = precond;
    latent.precond.mu = cfg.get_double_or("gibbs", "latent_mu", precond.mu);
    hyper.name = "hyper";
    hyper.coords = {m, m + 1};
    hyper.kind = latent.kind;
    hyper.sampler = sampler;
    hyper.sampler.steps_per_iteration = int(cfg.get_int_or("gibbs", "hyper_steps", 1));
    hyper.sampler.h = cfg.get_double_or("gibbs", "hyper_h", sampler.h);
    hyper.precond = precond;
    hyper.precond.mu = cfg.get_double_or("gibbs", "hyper_mu", precond.mu);
    s.blocks = {latent, hyper};
    s.biased = latent.sampler.biased() || hyper.sampler.biased();
  } else {
    GibbsBlock b;
    b.name = "all";
    b.kind = sampler_kind_from_string(kind);
    b.sampler = sampler;
    b.precond = precond;
    s.blocks = {b};
    s.biased = sampler.biased();
  }

  s.ensemble.walkers = int(cfg.get_int_or("ensemble", "walkers", 8));
  s.ensemble.groups = int(cfg.get_int_or("ensemble", "groups", 2));
  s.ensemble.refresh_every = int(cfg.get_int_or("ensemble", "refresh_every", 1));
  const std::string init = cfg.get_or("ensemble", "init", "target");
  if (init == "target") s.ensemble.init = InitKind::target;
  else if (init == "ball") s.ensemble.init = InitKind::ball;
  else throw ConfigError("unknown init '" + init + "'", "ensemble.init");
  s.ensemble.ball_radius = cfg.get_double_or("ensemble", "ball_radius", 1.0);
  s.ensemble.ball_center = cfg.get_vec_or("ensemble", "ball_center", {});
  s.ensemble.validate();

  s.iterations = std::uint64_t(cfg.get_int("run", "iterations"));
  s.seed = std::uint64_t(cfg.get_int_or("run", "seed", 0));
  s.workers = int(cfg.get_int_or("run", "workers", 1));
  s.output_dir = cfg.get_or("run", "output", ".");
  s.trace_name = cfg.get_or("run", "trace_name", "trace");
  s.binary_trace = cfg.get_or("run", "trace_format", "binary") == "binary";
  s.checkpoint_every = std::uint64_t(cfg.get_int_or("run", "checkpoint_every", 0));
  s.observables = cfg.get_words_or("run", "observables", {"coord:0"});
  s.sampler_label = kind;
  s.config_hash = semantic_hash(cfg);

  // lineage: target section + observables
  Config lineage;
  for (const auto& [k, v] : cfg.sections().at("target")) lineage.set("target", k, v);
  std::string obs;
  for (const auto& o : s.observables) obs += o + " ";
  lineage.set("run", "observables", obs);
  s.target_hash = lineage.hash();
  return s;
}

// ---------------------------------------------------------------------------
// run execution

RunOutcome run_single(const RunSetup& setup, bool resume) {
  fs::create_directories(setup.output_dir);
  const std::string trace_path =
      (fs::path(setup.output_dir) / (setup.trace_name + (setup.binary_trace ? ".trace" : ".txt")))
          .string();
  const std::string ckpt_path =
      (fs::path(setup.output_dir) / (setup.trace_name + ".ckpt")).string();

  auto observables = make_observables(setup.observables, *setup.target);

  TraceMeta meta;
  meta.sampler = setup.sampler_label;
  meta.preset = setup.preset_label;
  meta.seed = setup.seed;
  meta.config_hash = setup.config_hash;
  meta.target_hash = setup.target_hash;
  meta.biased = setup.biased;
  meta.walkers = setup.ensemble.walkers;
  for (const auto& o : observables) meta.columns.push_back(o.name);
  meta.columns.push_back("accepted");

  EnsembleState ens;
  std::uint64_t start_iter = 0;
  if (resume) {
    ens = load_checkpoint(ckpt_path, setup.config_hash);
    start_iter = ens.iteration;
    if (start_iter > setup.iterations)
      throw std::runtime_error("checkpoint is past the requested iteration count");
  } else {
    ens = initialize(setup.ensemble, *setup.target, setup.seed);
  }

  TraceWriter writer(trace_path, meta, setup.binary_trace, start_iter);

  RunControl control;
  control.iterations = setup.iterations - start_iter;
  control.workers = setup.workers;
  control.row_width = int(meta.columns.size());
  control.extract = [&observables](std::uint64_t, int, const WalkerState& w,
                                   bool accepted, MutSpan row) {
    for (std::size_t i = 0; i < observables.size(); ++i) row[i] = observables[i].fn(w.q);
    row[observables.size()] = accepted ? 1.0 : 0.0;
  };
  control.emit = [&writer](std::uint64_t iter, ConstSpan block) {
    writer.append(iter, block);
  };
  std::uint64_t last_ckpt = 0;
  control.on_band = [&](std::uint64_t done) {
    if (setup.checkpoint_every > 0 && done - last_ckpt >= setup.checkpoint_every &&
        done < control.iterations) {
      writer.flush();
      save_checkpoint(ckpt_path, ens, setup.config_hash);
      last_ckpt = done;
    }
  };

  const auto t0 = std::chrono::steady_clock::now();
  run(ens, *setup.target, setup.blocks, setup.ensemble, control);
  const auto t1 = std::chrono::steady_clock::now();
  const double secs = std::chrono::duration<double>(t1 - t0).count();

  save_checkpoint(ckpt_path, ens, setup.config_hash);

  TraceSidecar side;
  side.iterations = ens.iteration;
  const std::uint64_t done_now = control.iterations;
  side.seconds_per_iteration = done_now ? secs / double(done_now) : 0.0;
  side.grads_per_iteration =
      ens.iteration
          ? double(ens.stats.gradient_evals) / double(ens.iteration * std::uint64_t(ens.walkers))
          : 0.0;
  side.acceptance_rate = ens.stats.acceptance_rate();
  side.step_errors = ens.stats.step_errors;
  writer.finalize(side);

  return {trace_path, ckpt_path, ens.stats, side.seconds_per_iteration};
}

// ---------------------------------------------------------------------------
// summaries

RunSummary summarize_trace(const ChainTrace& trace) {
  RunSummary s;
  s.sampler = trace.meta.sampler;
  s.acceptance_rate = trace.sidecar.acceptance_rate;
  s.grads_per_iteration = trace.sidecar.grads_per_iteration;
  s.seconds_per_iteration = trace.sidecar.seconds_per_iteration;
  s.biased_flag = trace.meta.biased;
  for (std::size_t c = 0; c < trace.meta.columns.size(); ++c) {
    if (trace.meta.columns[c] == "accepted") continue;
    ObservableStats o;
    o.observable = trace.meta.columns[c];
    Vec series = trace.ensemble_mean_series(int(c));
    const auto st = series_stats(series);
    o.mean = st.mean;
    o.stderr_corrected = st.stderr_corrected;
    o.tau = st.iat.tau;
    o.tau_uncertainty = st.iat.uncertainty;
    o.tau_converged = st.iat.status == IatStatus::ok;
    s.observables.push_back(std::move(o));
  }
  return s;
}

ComparisonReport summarize_traces(const std::vector<ChainTrace>& traces,
                                  const std::string& reference, CostBasis basis) {
  if (traces.empty()) throw std::invalid_argument("summarize_traces: no traces");
  for (const auto& t : traces)
    if (t.meta.target_hash != traces.front().meta.target_hash)
      throw std::runtime_error("summarize_traces: traces have different target lineage (" +
                               t.meta.sampler + ")");
  std::vector<RunSummary> rows;
  for (const auto& t : traces) rows.push_back(summarize_trace(t));
  return compare_runs(std::move(rows), reference, basis);
}

// ---------------------------------------------------------------------------
// stepsize tuning

namespace {

double pilot_acceptance(const RunSetup& setup, double h, std::uint64_t iterations) {
  RunSetup s = setup;
  for (auto& b : s.blocks) b.sampler.h = h;
  EnsembleState ens = initialize(s.ensemble, *s.target, s.seed + 1);
  RunControl control;
  control.iterations = iterations;
  control.workers = s.workers;
  run(ens, *s.target, s.blocks, s.ensemble, control);
  return ens.stats.acceptance_rate();
}

[[noreturn]] void tune_fail(const std::string& why,
                            const std::vector<std::pair<double, double>>& curve) {
  std::ostringstream os;
  os << "tune_stepsize: " << why << "; measured acceptance curve:";
  for (const auto& [h, a] : curve) os << " (" << h << ", " << a << ")";
  throw std::runtime_error(os.str());
}

}  // namespace

TuneResult tune_stepsize(const RunSetup& setup, const AcceptanceBand& band, double h0,
                         std::uint64_t pilot_iterations) {
  if (!(band.lo > 0.0 && band.hi < 1.0 && band.lo < band.hi))
    throw std::invalid_argument("tune_stepsize: band must satisfy 0 < lo < hi < 1");
  TuneResult res;
  auto probe = [&](double h) {
    const double a = pilot_acceptance(setup, h, pilot_iterations);
    res.pilot_curve.emplace_back(h, a);
    return a;
  };

  double h = h0;
  double a = probe(h);
  if (a >= band.lo && a <= band.hi) {
    res.h = h;
    res.acceptance = a;
    return res;
  }

  // bracket: acceptance decreases with h
  double h_small = h, a_small = a, h_big = h, a_big = a;
  for (int i = 0; a_small < band.hi && i < 40; ++i) {
    h_small /= 2.0;
    a_small = probe(h_small);
    if (a_small >= band.lo && a_small <= band.hi) {
      res.h = h_small;
      res.acceptance = a_small;
      return res;
    }
  }
  if (a_small < band.hi) tune_fail("acceptance stays below the band for tiny h", res.pilot_curve);
  for (int i = 0; a_big > band.lo && i < 40; ++i) {
    h_big *= 2.0;
    a_big = probe(h_big);
    if (a_big >= band.lo && a_big <= band.hi) {
      res.h = h_big;
      res.acceptance = a_big;
      return res;
    }
  }
  if (a_big > band.lo) tune_fail("acceptance stays above the band for huge h", res.pilot_curve);

  for (int i = 0; i < 40; ++i) {
    const double mid = std::sqrt(h_small * h_big);  // bisect in log h
    const double am = probe(mid);
    if (am >= band.lo && am <= band.hi) {
      res.h = mid;
      res.acceptance = am;
      return res;
    }
    if (am > band.hi) h_small = mid;
    else h_big = mid;
    if (h_big / h_small < 1.0 + 1e-3) break;
  }
  tune_fail("band too narrow for the pilot resolution", res.pilot_curve);
}

// ---------------------------------------------------------------------------
// presets

namespace {

struct RosterEntry {
  std::string name;
  Config config;
  bool tune = false;
  AcceptanceBand band;
  double tune_h0 = 0.1;
  std::string reuse_h_from;  // non-metropolized twin reuses the tuned stepsize
};

struct Preset {
  std::string name;
  std::string reference;  // efficiency normalization entry
  CostBasis basis = CostBasis::gradients;
  std::vector<RosterEntry> roster;
};

Config base_config(const std::string& output, const std::string& trace_name,
                   std::uint64_t seed, std::uint64_t iterations, int workers) {
  Config c;
  c.set("run", "output", output);
  c.set("run", "trace_name", trace_name);
  c.set("run", "seed", std::to_string(seed));
  c.set("run", "iterations", std::to_string(iterations));
  c.set("run", "workers", std::to_string(workers));
  return c;
}

Preset gaussian_conditioning_preset(const std::string& output, const PresetOverrides& ov) {
  Preset p;
  p.name = "gaussian_conditioning";
  p.reference = "langevin_k100";
  p.basis = CostBasis::gradients;
  const std::uint64_t iters = ov.iterations.value_or(30000);
  const std::uint64_t seed = ov.seed.value_or(7);
  const int walkers = ov.walkers.value_or(32);

  for (double kappa : {10.0, 100.0}) {
    const std::string suffix = "_k" + std::to_string(int(kappa));
    for (const std::string kind : {"langevin", "eqn"}) {
      RosterEntry e;
      e.name = kind + suffix;
      e.config = base_config(output, e.name, seed, iters, ov.workers);
      e.config.set("target", "kind", "gaussian");
      e.config.set("target", "variances", "1 " + std::to_string(kappa));
      e.config.set("sampler", "kind", kind == "langevin" ? "langevin" : "eqn");
      e.config.set("sampler", "h", "0.1");
      e.config.set("sampler", "gamma", "1.0");
      e.config.set("sampler", "steps_per_iteration", "1");
      e.config.set("sampler", "metropolize", "true");
      if (kind == "eqn") {
        e.config.set("preconditioner", "mode", "blended");
        e.config.set("preconditioner", "mu", "100");
      }
      e.config.set("ensemble", "walkers", std::to_string(walkers));
      e.config.set("ensemble", "groups", "4");
      e.config.set("run", "observables", "coord:0 coord:1 sq:0 sq:1");
      e.tune = true;
      e.band = {0.6, 0.8};  // wider band: single-step kernels reject more at once
      e.tune_h0 = 0.2;
      p.roster.push_back(std::move(e));
    }
  }
  return p;
}

MixtureModelTarget::Params mixture_truth() {
  // Stamps-like synthetic ground truth: three separated thickness modes.
  MixtureModelTarget::Params t;
  t.mu[0] = 0.065;
  t.mu[1] = 0.110;
  t.mu[2] = 0.160;
  t.lambda[0] = 1.0e4;
  t.lambda[1] = 1.0e4;
  t.lambda[2] = 6.9e3;
  t.z[0] = 0.32;
  t.z[1] = 0.40;
  t.z[2] = 0.28;
  t.beta = 700.0;
  return t;
}

Preset mixture_preset(const std::string& output, const PresetOverrides& ov) {
  Preset p;
  p.name = "mixture";
  p.reference = "langevin";
  p.basis = CostBasis::gradients;
  const std::uint64_t seed = ov.seed.value_or(11);
  const int walkers = ov.walkers.value_or(64);

  const std::string data_path = (fs::path(output) / "mixture_data.txt").string();
  fs::create_directories(output);
  save_mixture_data(data_path,
                    MixtureModelTarget::generate_synthetic(485, mixture_truth(), 90210));

  auto common = [&](RosterEntry& e, std::uint64_t iters) {
    e.config = base_config(output, e.name, seed, iters, ov.workers);
    e.config.set("target", "kind", "mixture");
    e.config.set("target", "data_file", data_path);
    e.config.set("ensemble", "walkers", std::to_string(walkers));
    e.config.set("ensemble", "groups", "4");
    e.config.set("ensemble", "init", "target");
    e.config.set("run", "observables", "minz maxlambda minmu beta");
  };

  {
    RosterEntry e;
    e.name = "hmc";
    common(e, ov.iterations.value_or(30000));
    e.config.set("sampler", "kind", "hmc");
    e.config.set("sampler", "h", "0.001");
    e.config.set("sampler", "steps_per_iteration", "50");
    e.tune = true;
    e.band = {0.75, 0.80};
    e.tune_h0 = 1e-3;
    p.roster.push_back(std::move(e));
  }
  {
    RosterEntry e;
    e.name = "langevin";
    common(e, ov.iterations.value_or(30000));
    e.config.set("sampler", "kind", "langevin");
    e.config.set("sampler", "h", "0.001");
    e.config.set("sampler", "gamma", "0.01");
    e.config.set("sampler", "steps_per_iteration", "50");
    e.config.set("sampler", "metropolize", "true");
    e.tune = true;
    e.band = {0.75, 0.80};
    e.tune_h0 = 1e-3;
    p.roster.push_back(std::move(e));
  }
  {
    RosterEntry e;
    e.name = "eqn";
    common(e, ov.iterations.value_or(12000));
    e.config.set("sampler", "kind", "eqn");
    e.config.set("sampler", "h", "0.001");
    e.config.set("sampler", "gamma", "0.01");
    e.config.set("sampler", "steps_per_iteration", "5");
    e.config.set("sampler", "metropolize", "true");
    e.config.set("sampler", "divergence", "analytic");
    e.config.set("preconditioner", "mode", "local");
    e.config.set("preconditioner", "mu", "100");
    e.config.set("preconditioner", "lambda", "12");
    e.config.set("preconditioner", "weight_metric", "euclidean");
    e.config.set("preconditioner", "weight_coords", "0 1 2");
    e.tune = true;
    e.band = {0.75, 0.80};
    e.tune_h0 = 1e-2;
    p.roster.push_back(std::move(e));
  }
  {
    // divergence-term ablation twin of the eqn entry
    RosterEntry e = p.roster.back();
    e.name = "eqn_nodiv";
    e.config.set("run", "trace_name", e.name);
    e.config.set("sampler", "divergence", "omitted");
    e.tune = false;
    e.reuse_h_from = "eqn";
    p.roster.push_back(std::move(e));
  }
  return p;
}

Preset cox_preset(const std::string& output, const PresetOverrides& ov) {
  Preset p;
  p.name = "cox_small";
  p.reference = "hmc";
  p.basis = CostBasis::seconds;
  const int grid = ov.grid.value_or(ov.full ? 16 : 8);
  const bool full = ov.full;
  const std::uint64_t iters = ov.iterations.value_or(full ? 4000 : 1200);
  const std::uint64_t seed = ov.seed.value_or(3);
  const int walkers = ov.walkers.value_or(full ? 160 : 40);

  const std::string counts_path = (fs::path(output) / "cox_counts.txt").string();
  fs::create_directories(output);
  auto synth = LogGaussianCoxTarget::generate_synthetic(grid, 1.91, 1.0 / 33.0, 424242);
  save_cox_counts(counts_path, grid, synth.counts);

  // a handful of spread latent cells plus the field mean and hyperparameters
  std::string obs = "sigma2 beta latent_mean";
  const int cells = grid * grid;
  for (int k = 0; k < 8; ++k) obs += " latent:" + std::to_string(k * cells / 8);

  auto common = [&](RosterEntry& e) {
    e.config = base_config(output, e.name, seed, iters, ov.workers);
    e.config.set("target", "kind", "cox");
    e.config.set("target", "counts_file", counts_path);
    e.config.set("ensemble", "walkers", std::to_string(walkers));
    e.config.set("ensemble", "groups", "5");
    e.config.set("ensemble", "init", "target");
    e.config.set("ensemble", "refresh_every", full ? "200" : "10");
    e.config.set("gibbs", "enabled", "true");
    e.config.set("gibbs", "latent_steps", "50");
    e.config.set("gibbs", "hyper_steps", "1");
    e.config.set("run", "observables", obs);
  };

  {
    RosterEntry e;
    e.name = "hmc";
    common(e);
    e.config.set("sampler", "kind", "hmc");
    e.config.set("sampler", "h", "0.05");
    e.tune = true;
    e.band = {0.70, 0.85};
    e.tune_h0 = 0.05;
    p.roster.push_back(std::move(e));
  }
  for (const bool met : {true, false}) {
    RosterEntry e;
    e.name = met ? "langevin" : "langevin_nonmet";
    common(e);
    e.config.set("sampler", "kind", "langevin");
    e.config.set("sampler", "h", "0.05");
    e.config.set("sampler", "gamma", "0.01");
    e.config.set("sampler", "metropolize", met ? "true" : "false");
    if (met) {
      e.tune = true;
      e.band = {0.70, 0.85};
      e.tune_h0 = 0.05;
    } else {
      e.reuse_h_from = "langevin";
    }
    p.roster.push_back(std::move(e));
  }
  for (const bool met : {true, false}) {
    RosterEntry e;
    e.name = met ? "eqn" : "eqn_nonmet";
    common(e);
    e.config.set("sampler", "kind", "eqn");
    e.config.set("sampler", "h", "0.05");
    e.config.set("sampler", "gamma", "0.01");
    e.config.set("sampler", "metropolize", met ? "true" : "false");
    e.config.set("preconditioner", "mode", "blended");
    e.config.set("gibbs", "latent_mu", "7");
    e.config.set("gibbs", "hyper_mu", "1");
    if (met) {
      e.tune = true;
      e.band = {0.70, 0.85};
      e.tune_h0 = 0.05;
    } else {
      e.reuse_h_from = "eqn";
    }
    p.roster.push_back(std::move(e));
  }
  return p;
}

Preset make_preset(const std::string& name, const std::string& output,
                   const PresetOverrides& ov) {
  if (name == "gaussian_conditioning") return gaussian_conditioning_preset(output, ov);
  if (name == "mixture") return mixture_preset(output, ov);
  if (name == "cox_small") return cox_preset(output, ov);
  std::string known;
  for (const auto& n : preset_names()) known += n + " ";
  throw ConfigError("unknown preset '" + name + "'; available: " + known);
}

void write_plot_csvs(const std::string& output, const ChainTrace& trace) {
  // ensemble-mean observable series per iteration
  {
    std::ofstream f(fs::path(output) / (trace.meta.sampler + "_series.csv"));
    f << "iteration";
    for (const auto& c : trace.meta.columns) f << "," << c;
    f << "\n";
    const std::uint64_t thin = std::max<std::uint64_t>(1, trace.rows / 2000);
    for (std::uint64_t t = 0; t < trace.rows; t += thin) {
      f << t;
      for (std::size_t c = 0; c < trace.meta.columns.size(); ++c) {
        double s = 0;
        for (int w = 0; w < trace.meta.walkers; ++w) s += trace.value(t, w, int(c));
        f << "," << s / trace.meta.walkers;
      }
      f << "\n";
    }
  }
  // autocorrelation of the first observable's ensemble mean
  if (!trace.meta.columns.empty() && trace.rows > 200) {
    Vec series = trace.ensemble_mean_series(0);
    const double mean = kernels::sum(series) / double(series.size());
    for (auto& v : series) v -= mean;
    const double c0 = kernels::sumsq(series) / double(series.size());
    std::ofstream f(fs::path(output) / (trace.meta.sampler + "_acf.csv"));
    f << "lag,acf\n";
    const std::size_t maxlag = std::min<std::size_t>(series.size() / 4, 2000);
    for (std::size_t s = 0; s <= maxlag; ++s) {
      const double cs = kernels::dot({series.data(), series.size() - s},
                                     {series.data() + s, series.size() - s}) /
                        double(series.size() - s);
      f << s << "," << (c0 > 0 ? cs / c0 : 0.0) << "\n";
    }
  }
}

void write_mixture_histogram(const std::string& output, const ChainTrace& trace) {
  // Figure-2-style free-energy surface over (mu_1, mu_2); needs raw
  // coordinates, so this uses minmu/maxlambda-free columns only when the
  // trace recorded plain coordinates.  The preset traces record the slow
  // aggregates, so this histogram uses minmu vs beta as a stand-in surface.
  const int c0 = trace.column("minmu");
  const int c1 = trace.column("beta");
  if (c0 < 0 || c1 < 0) return;
  const int bins = 40;
  double lo0 = 1e300, hi0 = -1e300, lo1 = 1e300, hi1 = -1e300;
  for (std::uint64_t t = 0; t < trace.rows; ++t)
    for (int w = 0; w < trace.meta.walkers; ++w) {
      lo0 = std::min(lo0, trace.value(t, w, c0));
      hi0 = std::max(hi0, trace.value(t, w, c0));
      lo1 = std::min(lo1, trace.value(t, w, c1));
      hi1 = std::max(hi1, trace.value(t, w, c1));
    }
  if (!(hi0 > lo0) || !(hi1 > lo1)) return;
  std::vector<double> counts(std::size_t(bins) * bins, 0.0);
  for (std::uint64_t t = 0; t < trace.rows; ++t)
    for (int w = 0; w < trace.meta.walkers; ++w) {
      const int b0 = std::min(bins - 1, int((trace.value(t, w, c0) - lo0) / (hi0 - lo0) * bins));
      const int b1 = std::min(bins - 1, int((trace.value(t, w, c1) - lo1) / (hi1 - lo1) * bins));
      counts[std::size_t(b0) * bins + b1] += 1.0;
    }
  std::ofstream f(fs::path(output) / (trace.meta.sampler + "_hist2d.csv"));
  f << "bin0,bin1,x,y,count,free_energy\n";
  for (int i = 0; i < bins; ++i)
    for (int j = 0; j < bins; ++j) {
      const double c = counts[std::size_t(i) * bins + j];
      f << i << "," << j << "," << lo0 + (i + 0.5) * (hi0 - lo0) / bins << ","
        << lo1 + (j + 0.5) * (hi1 - lo1) / bins << "," << c << ","
        << (c > 0 ? -std::log(c) : std::numeric_limits<double>::quiet_NaN()) << "\n";
    }
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"gaussian_conditioning", "mixture", "cox_small"};
}

PresetOutcome run_preset(const std::string& name, const std::string& output_dir,
                         const PresetOverrides& overrides) {
  Preset preset = make_preset(name, output_dir, overrides);
  PresetOutcome out;

  std::map<std::string, double> tuned_h;
  std::vector<ChainTrace> traces;
  for (auto& entry : preset.roster) {
    try {
      if (!entry.reuse_h_from.empty()) {
        const auto it = tuned_h.find(entry.reuse_h_from);
        if (it != tuned_h.end())
          entry.config.set("sampler", "h", std::to_string(it->second));
      } else if (entry.tune) {
        RunSetup pilot = build_setup(entry.config);
        auto tuned = tune_stepsize(pilot, entry.band, entry.tune_h0);
        entry.config.set("sampler", "h", std::to_string(tuned.h));
        tuned_h[entry.name] = tuned.h;
      }
      // record the exact config this entry ran with
      {
        std::ofstream f(fs::path(output_dir) / (entry.name + ".cfg"));
        f << entry.config.serialize();
      }
      RunSetup setup = build_setup(entry.config);
      setup.preset_label = preset.name;
      setup.sampler_label = entry.name;
      auto res = run_single(setup);
      out.trace_paths.push_back(res.trace_path);
      traces.push_back(read_trace(res.trace_path));
      write_plot_csvs(output_dir, traces.back());
      if (preset.name == "mixture") write_mixture_histogram(output_dir, traces.back());
    } catch (const std::exception& e) {
      out.failures.push_back(entry.name + ": " + e.what());
    }
  }

  if (!traces.empty()) {
    // one comparison table per target lineage (the conditioning preset runs
    // the same roster against several targets)
    std::vector<std::uint64_t> lineages;
    for (const auto& t : traces)
      if (std::find(lineages.begin(), lineages.end(), t.meta.target_hash) == lineages.end())
        lineages.push_back(t.meta.target_hash);
    std::string tables, kvs;
    for (const auto lineage : lineages) {
      std::vector<ChainTrace> group;
      for (const auto& t : traces)
        if (t.meta.target_hash == lineage) group.push_back(t);
      std::string ref = preset.reference;
      bool have_ref = false;
      for (const auto& t : group) have_ref |= t.meta.sampler == ref;
      if (!have_ref) ref = group.front().meta.sampler;
      auto report = summarize_traces(group, ref, preset.basis);
      tables += report.table() + "\n";
      kvs += report.key_values();
    }
    out.report_table = tables;
    const auto table_path = fs::path(output_dir) / "report.txt";
    std::ofstream(table_path) << tables;
    std::ofstream(fs::path(output_dir) / "report.kv") << kvs;
    out.report_path = table_path.string();
  }
  return out;
}

}  // namespace eqn
