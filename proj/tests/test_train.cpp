#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "phnet/controller.hpp"
#include "phnet/topology.hpp"
#include "phnet/train.hpp"

using namespace phnet;
using Catch::Approx;

namespace {

struct Setup {
  TrainProblem prob;
  PhParams params;
  std::vector<ClosedLoopState> inits;
};

Setup small_setup(HamiltonianKind kind, AlphaGrad mode, std::uint64_t seed, std::size_t steps = 20) {
  SeededRng rng(seed, "setup");
  SeededRng trng(seed, "topology");
  const Graph g = generate(topo::Complete{}, 3, trng);
  const KuramotoPlant plant({3, 1.0, Vec(3, 0.0), adjacency(g)});
  const std::vector<std::size_t> q(3, 2), h(3, 3), pd(3, 1);
  PhParams p = initialize_params(comm_mask(g), q, h, pd, kind, 0.85, rng);
  for (double& v : p.d) v = rng.normal(0.0, 0.3);
  const RolloutConfig rc{0.01, 0.01 * static_cast<double>(steps), 0.01, false};
  Setup s{{plant, comm_mask(g), rc, mode}, p, {}};
  for (int k = 0; k < 2; ++k) {
    ClosedLoopState init = sample_initial(3, 6, rng);
    for (double& v : init.xi) v = rng.normal(0.0, 0.5);
    s.inits.push_back(init);
  }
  return s;
}

double fd_error(const Setup& s) {
  const FlatParams fp = FlatParams::from(s.params);
  const LossAndGrad lg = loss_grad(s.prob, fp, s.inits);
  std::optional<double> frozen;
  if (s.prob.alpha_grad == AlphaGrad::frozen) frozen.emplace(assemble(s.params, s.prob.comm).alpha());
  double worst = 0.0;
  for (std::size_t i = 0; i < fp.size(); ++i) {
    auto f = [&](double t) {
      FlatParams q = fp;
      q.values[i] += t;
      return loss(s.prob, q, s.inits, frozen);
    };
    const double fd = oracle::central_difference(f, 0.0, 1e-5);
    const double g = lg.grad[i];
    const double e = std::abs(g) < 1e-8 ? (std::abs(fd - g) <= 1e-8 ? 0.0 : 1.0) : std::abs(fd - g) / std::abs(g);
    worst = std::max(worst, e);
  }
  return worst;
}

}  // namespace

TEST_CASE("adjoint gradient matches central differences") {
  for (auto kind : {HamiltonianKind::log_cosh, HamiltonianKind::quadratic})
    for (auto mode : {AlphaGrad::exact, AlphaGrad::frozen}) {
      INFO(to_string(kind) << ' ' << to_string(mode));
      CHECK(fd_error(small_setup(kind, mode, 51)) <= 1e-4);
    }
}

TEST_CASE("loss_grad reports the same loss as loss") {
  const Setup s = small_setup(HamiltonianKind::log_cosh, AlphaGrad::exact, 52, 50);
  const FlatParams fp = FlatParams::from(s.params);
  CHECK(loss_grad(s.prob, fp, s.inits).loss == Approx(loss(s.prob, fp, s.inits)).epsilon(1e-14));
}

TEST_CASE("loss examples") {
  Setup s = small_setup(HamiltonianKind::log_cosh, AlphaGrad::exact, 53, 50);
  const FlatParams fp = FlatParams::from(s.params);
  const PhController c = assemble(s.params, s.prob.comm);
  const std::vector<ClosedLoopState> one{s.inits[0]};
  const Trajectory tr = rollout(s.prob.plant, c, s.inits[0], s.prob.rollout);
  CHECK(loss(s.prob, fp, one) == Approx(trajectory_cost(tr, s.prob.plant.coupling(), s.prob.rollout.beta)).epsilon(1e-12));
  const std::vector<ClosedLoopState> twice{s.inits[0], s.inits[0]};
  CHECK(loss(s.prob, fp, twice) == Approx(loss(s.prob, fp, one)).epsilon(1e-14));

  s.prob.rollout.normalize_by_horizon = true;
  CHECK(loss(s.prob, fp, one) == Approx(trajectory_cost(tr, s.prob.plant.coupling(), s.prob.rollout.beta) / 0.5)
                                     .epsilon(1e-12));
}

TEST_CASE("zero-cost trajectory has zero gradient") {
  Setup s = small_setup(HamiltonianKind::log_cosh, AlphaGrad::exact, 54);
  s.prob.rollout.beta = 0.0;
  const std::vector<ClosedLoopState> sync{{{0.2, 0.2, 0.2}, Vec(3, 0.5), Vec(6, 0.0)}};
  const LossAndGrad lg = loss_grad(s.prob, FlatParams::from(s.params), sync);
  CHECK(lg.loss == 0.0);
  for (double g : lg.grad) CHECK(g == 0.0);
}

TEST_CASE("masked G blocks are not parameters") {
  Graph path{4, {}};
  path.add_edge(0, 1);
  path.add_edge(1, 2);
  path.add_edge(2, 3);
  SeededRng rng(55, "init");
  const std::vector<std::size_t> q(4, 2), h(4, 2), pd(4, 1);
  const PhParams p = initialize_params(comm_mask(path), q, h, pd, HamiltonianKind::log_cosh, 0.85, rng);
  const ParamLayout layout(p);
  CHECK(layout.g_keys().size() == 4 + 2 * 3);
  for (const auto& k : layout.g_keys()) CHECK(comm_mask(path).allowed(k.first, k.second));
  CHECK(layout.size() == 4 * 4 + 8 + 10 * 2 + 4 * 4);
}

TEST_CASE("flatten and unflatten round trip") {
  const Setup s = small_setup(HamiltonianKind::quadratic, AlphaGrad::exact, 56);
  const FlatParams fp = FlatParams::from(s.params);
  CHECK(fp.to_params().G_blocks == s.params.G_blocks);
  CHECK(fp.to_params().d == s.params.d);
  CHECK(fp.layout->flatten(fp.to_params()) == fp.values);
  CHECK_THROWS_AS(fp.layout->unflatten(Vec(fp.size() + 1)), Error);
}

TEST_CASE("adam step examples") {
  auto [st, v] = adam_step(AdamState::zeros(1, 5e-3), Vec{1.0}, Vec{0.0});
  CHECK(st.t == 1);
  CHECK(v[0] == Approx(-5e-3 / (1.0 + 1e-8)).epsilon(1e-12));
  auto [st2, v2] = adam_step(AdamState::zeros(2, 5e-3), Vec{0.0, 0.0}, Vec{1.5, -2.0});
  CHECK(st2.t == 1);
  CHECK(v2 == Vec{1.5, -2.0});
  auto [st3, v3] = adam_step(AdamState::zeros(1, 5e-3), Vec{-40.0}, Vec{1.0});
  CHECK(v3[0] == Approx(1.0 + 5e-3).epsilon(1e-10));
  CHECK_THROWS_AS(adam_step(AdamState::zeros(1, 5e-3), Vec{1.0, 2.0}, Vec{0.0, 0.0}), Error);
}

TEST_CASE("training with zero epochs returns the initial parameters") {
  const Setup s = small_setup(HamiltonianKind::log_cosh, AlphaGrad::exact, 57);
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.S = 2;
  cfg.rollout = s.prob.rollout;
  const TrainResult r = train(cfg, s.prob.plant, s.prob.comm, s.params, s.inits);
  CHECK(r.log.empty());
  CHECK(r.params.G_blocks == s.params.G_blocks);
  CHECK(r.params.A_blocks == s.params.A_blocks);
  CHECK(r.clip_count == 0);
}

TEST_CASE("training is deterministic and reduces the loss") {
  const Setup s = small_setup(HamiltonianKind::log_cosh, AlphaGrad::exact, 58, 100);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.S = 2;
  cfg.lr = 1e-2;
  cfg.rollout = s.prob.rollout;
  const TrainResult a = train(cfg, s.prob.plant, s.prob.comm, s.params, s.inits);
  const TrainResult b = train(cfg, s.prob.plant, s.prob.comm, s.params, s.inits);
  REQUIRE(a.log.size() == 30);
  for (std::size_t e = 0; e < a.log.size(); ++e) {
    REQUIRE(a.log[e].loss == b.log[e].loss);
    REQUIRE(a.log[e].grad_norm == b.log[e].grad_norm);
  }
  CHECK(a.final_loss < a.log.front().loss);
  for (const auto& rec : a.log) CHECK(rec.alpha > 0.0);

  std::ostringstream os;
  write_training_log_csv(os, a.log);
  CHECK(os.str().rfind("epoch,loss,grad_norm,alpha,clip_active,wall_ms\n", 0) == 0);

  TrainConfig bad = cfg;
  bad.S = 3;
  CHECK_THROWS_AS(train(bad, s.prob.plant, s.prob.comm, s.params, s.inits), Error);
}

TEST_CASE("gradient clipping caps the applied step") {
  const Setup s = small_setup(HamiltonianKind::quadratic, AlphaGrad::exact, 59, 50);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.S = 2;
  cfg.clip_norm = 1e-6;
  cfg.rollout = s.prob.rollout;
  const TrainResult r = train(cfg, s.prob.plant, s.prob.comm, s.params, s.inits);
  CHECK(r.clip_count == 3);
  for (const auto& rec : r.log) CHECK(rec.clip_active);
}
