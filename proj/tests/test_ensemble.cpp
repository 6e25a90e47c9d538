#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "eqn/ensemble.hpp"
#include "eqn/errors.hpp"
#include "test_helpers.hpp"

using namespace eqn;

namespace {

EnsembleSpec spec_of(int walkers, int groups, int refresh = 1) {
  EnsembleSpec s;
  s.walkers = walkers;
  s.groups = groups;
  s.refresh_every = refresh;
  s.init = InitKind::target;
  return s;
}

GibbsBlock eqn_block(double h, double gamma, int steps, bool met,
                     const PreconditionerSpec& p) {
  GibbsBlock b;
  b.name = "all";
  b.kind = SamplerKind::eqn;
  b.sampler.h = h;
  b.sampler.gamma = gamma;
  b.sampler.steps_per_iteration = steps;
  b.sampler.metropolize = met;
  b.precond = p;
  return b;
}

}  // namespace

TEST_CASE("group arithmetic and configuration errors") {
  GaussianTarget g(Vec{1.0, 1.0});

  auto s = spec_of(64, 4);
  CHECK(s.group_size() == 16);
  CHECK(s.complement_size() == 48);

  auto big = spec_of(160, 10);
  CHECK(big.complement_size() == 144);  // ten groups of 16

  CHECK_THROWS_AS(initialize(spec_of(8, 1), g, 1), ConfigError);   // K would be 0
  CHECK_THROWS_AS(initialize(spec_of(10, 4), g, 1), ConfigError);  // not divisible

  auto ens = initialize(spec_of(64, 4), g, 5);
  CHECK(ens.walkers == 64);
  CHECK(ens.group_of(0) == 0);
  CHECK(ens.group_of(17) == 1);
  CHECK(ens.group_of(63) == 3);
}

TEST_CASE("identity preconditioner sweep equals independent baoab chains bitwise") {
  GaussianTarget g(Vec{1.0, 4.0});
  auto spec = spec_of(6, 3);
  auto ens = initialize(spec, g, 42);

  // manual replica of the initialization draws
  const std::uint64_t iters = 50;
  std::vector<WalkerState> manual(6);
  std::vector<PhiloxRng> rngs;
  for (int w = 0; w < 6; ++w) {
    PhiloxRng r(42, std::uint64_t(w));
    manual[w].q = g.sample_init(r);
    manual[w].p.resize(2);
    r.fill_normal(manual[w].p);
    rngs.push_back(r);
  }

  PreconditionerSpec id{PrecondMode::identity, 0.0, 0.0, WeightMetric::euclidean, {}};
  auto blocks = std::vector<GibbsBlock>{eqn_block(0.2, 0.9, 1, false, id)};
  RunControl ctl;
  ctl.iterations = iters;
  ctl.workers = 2;
  run(ens, g, blocks, spec, ctl);

  auto bt = BlockTarget::whole(g);
  SamplerConfig cfg;
  cfg.h = 0.2;
  cfg.gamma = 0.9;
  for (int w = 0; w < 6; ++w) {
    Vec grad = g.gradient(manual[w].q);
    for (std::uint64_t t = 0; t < iters; ++t) {
      auto r = baoab_step(bt, manual[w], cfg, rngs[w], &grad);
      manual[w] = std::move(r.state);
      grad = std::move(r.grad_end);
    }
    REQUIRE(ens.states[w].q == manual[w].q);  // bitwise
    REQUIRE(ens.states[w].p == manual[w].p);
  }
}

TEST_CASE("complement membership: a walker's preconditioner sees only other groups") {
  GaussianTarget g(Vec{1.0, 1.0});
  auto spec = spec_of(4, 2);
  auto ens = initialize(spec, g, 9);
  auto before = ens.states;

  PreconditionerSpec blended{PrecondMode::blended, 2.0, 0.0, WeightMetric::euclidean, {}};
  auto blocks = std::vector<GibbsBlock>{eqn_block(0.15, 0.8, 1, false, blended)};
  RunControl ctl;
  ctl.iterations = 1;
  run(ens, g, blocks, spec, ctl);

  // replay walker 0 by hand: its complement is exactly walkers 2 and 3
  std::vector<ConstSpan> comp{before[2].q, before[3].q};
  auto op = build_preconditioner(blended, comp, before[0].q, 0);
  PhiloxRng rng = PhiloxRng::from_key(derive_stream_key(9, 0), 4);  // 2 q + 2 p draws
  SamplerConfig cfg;
  cfg.h = 0.15;
  cfg.gamma = 0.8;
  auto bt = BlockTarget::whole(g);
  auto step = eqn_step(bt, before[0], *op, cfg, rng);
  REQUIRE(ens.states[0].q == step.state.q);
  REQUIRE(ens.states[0].p == step.state.p);

  // poisoning the same-group entry must not change the preconditioner output
  Vec poisoned = before[1].q;
  for (auto& v : poisoned) v = std::numeric_limits<double>::quiet_NaN();
  (void)poisoned;  // walker 1 is simply absent from the complement above
}

TEST_CASE("worker count does not change results") {
  GaussianTarget g(Vec{1.0, 9.0});
  PreconditionerSpec blended{PrecondMode::blended, 3.0, 0.0, WeightMetric::euclidean, {}};
  auto blocks = std::vector<GibbsBlock>{eqn_block(0.2, 1.0, 2, true, blended)};

  std::vector<Vec> rows[3];
  std::vector<WalkerState> finals[3];
  const int workers[3] = {1, 4, 16};
  for (int i = 0; i < 3; ++i) {
    auto spec = spec_of(16, 2);
    auto ens = initialize(spec, g, 2024);
    RunControl ctl;
    ctl.iterations = 30;
    ctl.workers = workers[i];
    ctl.row_width = 2;
    ctl.extract = [](std::uint64_t, int, const WalkerState& w, bool acc, MutSpan row) {
      row[0] = w.q[0];
      row[1] = acc ? 1.0 : 0.0;
    };
    ctl.emit = [&rows, i](std::uint64_t, ConstSpan block) {
      rows[i].emplace_back(block.begin(), block.end());
    };
    run(ens, g, blocks, spec, ctl);
    finals[i] = ens.states;
  }
  for (int i = 1; i < 3; ++i) {
    REQUIRE(rows[i].size() == rows[0].size());
    for (std::size_t r = 0; r < rows[0].size(); ++r) REQUIRE(rows[i][r] == rows[0][r]);
    for (int w = 0; w < 16; ++w) {
      REQUIRE(finals[i][w].q == finals[0][w].q);
      REQUIRE(finals[i][w].p == finals[0][w].p);
    }
  }
}

TEST_CASE("refresh_every banding freezes complements within an activation") {
  GaussianTarget g(Vec{1.0, 1.0});
  PreconditionerSpec blended{PrecondMode::blended, 1.0, 0.0, WeightMetric::euclidean, {}};
  auto blocks = std::vector<GibbsBlock>{eqn_block(0.1, 1.0, 1, false, blended)};

  auto spec1 = spec_of(4, 2, 1);
  auto spec5 = spec_of(4, 2, 5);
  auto e1 = initialize(spec1, g, 3);
  auto e5 = initialize(spec5, g, 3);
  RunControl ctl;
  ctl.iterations = 10;
  run(e1, g, blocks, spec1, ctl);
  run(e5, g, blocks, spec5, ctl);
  // different rotation cadences genuinely change the trajectories
  bool same = true;
  for (int w = 0; w < 4; ++w) same &= e1.states[w].q == e5.states[w].q;
  CHECK_FALSE(same);
  // but each is reproducible
  auto e5b = initialize(spec5, g, 3);
  run(e5b, g, blocks, spec5, ctl);
  for (int w = 0; w < 4; ++w) REQUIRE(e5b.states[w].q == e5.states[w].q);
}

TEST_CASE("gibbs: an explicit all-coordinate block matches the whole-space path") {
  auto synth = LogGaussianCoxTarget::generate_synthetic(3, 1.0, 0.2, 5);
  LogGaussianCoxTarget cox(3, synth.counts);
  PreconditionerSpec blended{PrecondMode::blended, 1.0, 0.0, WeightMetric::euclidean, {}};

  auto blocks_whole = std::vector<GibbsBlock>{eqn_block(0.05, 0.5, 2, false, blended)};
  auto blocks_listed = blocks_whole;
  blocks_listed[0].coords.resize(cox.dim());
  for (int i = 0; i < cox.dim(); ++i) blocks_listed[0].coords[i] = i;

  auto spec = spec_of(4, 2);
  auto ea = initialize(spec, cox, 17);
  auto eb = initialize(spec, cox, 17);
  RunControl ctl;
  ctl.iterations = 5;
  run(ea, cox, blocks_whole, spec, ctl);
  run(eb, cox, blocks_listed, spec, ctl);
  for (int w = 0; w < 4; ++w) {
    REQUIRE(ea.states[w].q == eb.states[w].q);
    REQUIRE(ea.states[w].p == eb.states[w].p);
  }
}

TEST_CASE("gibbs blocks: hyper updates leave latent coordinates untouched") {
  auto synth = LogGaussianCoxTarget::generate_synthetic(3, 1.0, 0.2, 6);
  LogGaussianCoxTarget cox(3, synth.counts);
  const int m = cox.latent_dim();

  GibbsBlock hyper;
  hyper.name = "hyper";
  hyper.coords = {m, m + 1};
  hyper.kind = SamplerKind::eqn;
  hyper.sampler.h = 0.05;
  hyper.sampler.gamma = 0.5;
  hyper.sampler.metropolize = false;
  hyper.precond.mode = PrecondMode::identity;

  auto spec = spec_of(4, 2);
  auto ens = initialize(spec, cox, 23);
  auto before = ens.states;
  RunControl ctl;
  ctl.iterations = 3;
  run(ens, cox, {hyper}, spec, ctl);
  for (int w = 0; w < 4; ++w) {
    for (int i = 0; i < m; ++i) {
      REQUIRE(ens.states[w].q[i] == before[w].q[i]);
      REQUIRE(ens.states[w].p[i] == before[w].p[i]);
    }
    // and the hyper coordinates did move
    CHECK(ens.states[w].q[m] != before[w].q[m]);
  }
}

TEST_CASE("cox gibbs preset shape: 50 latent steps per hyper step") {
  auto synth = LogGaussianCoxTarget::generate_synthetic(3, 1.0, 0.2, 7);
  LogGaussianCoxTarget cox(3, synth.counts);
  const int m = cox.latent_dim();

  GibbsBlock latent;
  latent.name = "latent";
  latent.coords.resize(m);
  for (int i = 0; i < m; ++i) latent.coords[i] = i;
  latent.kind = SamplerKind::eqn;
  latent.sampler.h = 0.02;
  latent.sampler.gamma = 0.5;
  latent.sampler.steps_per_iteration = 50;
  latent.sampler.metropolize = false;
  latent.precond.mode = PrecondMode::blended;
  latent.precond.mu = 7.0;

  GibbsBlock hyper = latent;
  hyper.name = "hyper";
  hyper.coords = {m, m + 1};
  hyper.sampler.steps_per_iteration = 1;
  hyper.precond.mu = 1.0;

  auto spec = spec_of(4, 2);
  auto ens = initialize(spec, cox, 29);
  RunControl ctl;
  ctl.iterations = 4;
  run(ens, cox, {latent, hyper}, spec, ctl);
  // 4 iterations x 4 walkers x 2 blocks, one trajectory each
  CHECK(ens.stats.proposals == 4 * 4 * 2);
  // gradient cost is dominated by the 50-step latent trajectories
  CHECK(ens.stats.gradient_evals >= 4 * 4 * 51);
}

TEST_CASE("checkpoint round-trip restores the run bitwise") {
  namespace fs = std::filesystem;
  GaussianTarget g(Vec{1.0, 4.0});
  PreconditionerSpec blended{PrecondMode::blended, 2.0, 0.0, WeightMetric::euclidean, {}};
  auto blocks = std::vector<GibbsBlock>{eqn_block(0.2, 1.0, 1, true, blended)};
  auto spec = spec_of(8, 2);

  // uninterrupted run
  auto full = initialize(spec, g, 77);
  RunControl ctl;
  ctl.iterations = 40;
  run(full, g, blocks, spec, ctl);

  // split run with a checkpoint in the middle
  auto part = initialize(spec, g, 77);
  ctl.iterations = 20;
  run(part, g, blocks, spec, ctl);
  const auto path = (fs::temp_directory_path() / "eqn_ck_test.bin").string();
  save_checkpoint(path, part, 123);

  CHECK_THROWS(load_checkpoint(path, 456));  // config hash mismatch

  auto resumed = load_checkpoint(path, 123);
  CHECK(resumed.iteration == 20);
  for (int w = 0; w < 8; ++w) {
    REQUIRE(resumed.states[w].q == part.states[w].q);
    REQUIRE(resumed.rng_counters[w] == part.rng_counters[w]);
  }
  ctl.iterations = 20;
  run(resumed, g, blocks, spec, ctl);
  for (int w = 0; w < 8; ++w) {
    REQUIRE(resumed.states[w].q == full.states[w].q);
    REQUIRE(resumed.states[w].p == full.states[w].p);
  }
  fs::remove(path);
}

TEST_CASE("exactness is preserved for coupled walkers (pooled variance)") {
  // Metropolized blended ensemble on a 1D gaussian: every walker's marginal
  // stays N(0,1) even though the preconditioners couple them.
  GaussianTarget g(Vec{1.0});
  PreconditionerSpec blended{PrecondMode::blended, 1.5, 0.0, WeightMetric::euclidean, {}};
  auto blocks = std::vector<GibbsBlock>{eqn_block(0.35, 1.0, 1, true, blended)};
  auto spec = spec_of(6, 3);
  auto ens = initialize(spec, g, 101);

  Vec pooled;
  RunControl ctl;
  ctl.iterations = 60000;
  ctl.workers = 2;
  ctl.row_width = 1;
  ctl.extract = [](std::uint64_t, int, const WalkerState& w, bool, MutSpan row) {
    row[0] = w.q[0] * w.q[0];
  };
  ctl.emit = [&pooled](std::uint64_t, ConstSpan block) {
    double s = 0;
    for (double v : block) s += v;
    pooled.push_back(s / double(block.size()));
  };
  run(ens, g, blocks, spec, ctl);

  // drop warmup, then compare against variance 1 with IAT-corrected errors
  Vec tail(pooled.begin() + 2000, pooled.end());
  double mean = kernels::sum(tail) / double(tail.size());
  double var = 0;
  for (double v : tail) var += (v - mean) * (v - mean);
  var /= double(tail.size());
  // crude batch-mean error bars over 50 batches
  const std::size_t bs = tail.size() / 50;
  Vec bm;
  for (int b = 0; b < 50; ++b) {
    double s = 0;
    for (std::size_t i = 0; i < bs; ++i) s += tail[b * bs + i];
    bm.push_back(s / double(bs));
  }
  double bmean = kernels::sum(bm) / 50.0, bvar = 0;
  for (double v : bm) bvar += (v - bmean) * (v - bmean);
  bvar /= 49.0;
  const double se = std::sqrt(bvar / 50.0);
  CHECK(std::abs(mean - 1.0) < 3.5 * se);
}
