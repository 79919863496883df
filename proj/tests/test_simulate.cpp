#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "oracles.hpp"
#include "phnet/controller.hpp"
#include "phnet/simulate.hpp"
#include "phnet/topology.hpp"

using namespace phnet;
using Catch::Approx;

namespace {

const double pi = std::numbers::pi;

// x_dot = rate * x with no phases; lets the integrator be checked in isolation.
struct LinearStub {
  double rate = -1.0;
  std::size_t size() const { return 1; }
  PlantState derivative(const PlantState& s, std::span<const double>) const { return {{}, {rate * s.x[0]}}; }
  Vec output(const PlantState& s) const { return s.x; }
};

// One-node controller with G = 0: xi stays at zero and u = 0.
PhController silent_controller(std::size_t n) {
  PhParams p;
  p.q_dims.assign(n, 1);
  p.p_dims.assign(n, 1);
  p.A_blocks.assign(n, Mat{{0}});
  p.d.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) p.G_blocks.emplace(BlockIndex{i, i}, Mat{{0}});
  p.ham = {HamiltonianKind::log_cosh, std::vector<Mat>(n, Mat{{1}})};
  std::vector<std::uint8_t> eye(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) eye[i * n + i] = 1;
  return assemble(p, BlockMask::scalar(n, eye));
}

KuramotoPlant complete_plant(std::size_t n, double k = 1.0) {
  SeededRng rng(0, "topology");
  return KuramotoPlant({n, k, Vec(n, 0.0), adjacency(generate(topo::Complete{}, n, rng))});
}

PhController random_controller(std::size_t n, SeededRng& rng, HamiltonianKind kind = HamiltonianKind::log_cosh) {
  SeededRng trng(rng.next_u64(), "topology");
  const Graph g = generate(topo::Complete{}, n, trng);
  const std::vector<std::size_t> q(n, 2), h(n, 3), pd(n, 1);
  return assemble(initialize_params(comm_mask(g), q, h, pd, kind, 0.85, rng), comm_mask(g));
}

}  // namespace

TEST_CASE("consensus metric examples") {
  CHECK(consensus_metric(Vec{0, 0, 0}) == Approx(1.0).epsilon(1e-15));
  CHECK(consensus_metric(Vec{0, pi}) == Approx(0.0).margin(1e-7));
  CHECK(consensus_metric(Vec{0, pi / 2}) == Approx(std::sqrt(0.5)).epsilon(1e-12));
  CHECK(consensus_metric(Vec{1.3}) == 1.0);
}

TEST_CASE("consensus metric equals the order-parameter modulus") {
  SeededRng rng(41, "r");
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 1 + rng.index(20);
    Vec th(n);
    for (double& v : th) v = rng.uniform(-10, 10);
    double c = 0.0, s = 0.0;
    for (double v : th) {
      c += std::cos(v);
      s += std::sin(v);
    }
    const double r = consensus_metric(th);
    REQUIRE(r >= 0.0);
    REQUIRE(r <= 1.0 + 1e-12);
    REQUIRE(r == Approx(std::hypot(c, s) / static_cast<double>(n)).margin(1e-7));
  }
}

TEST_CASE("stage and trajectory cost examples") {
  const KuramotoPlant plant = complete_plant(2);
  const PhController c = silent_controller(2);
  const ClosedLoopState init{{0, pi / 2}, {0, 0}, {0, 0}};
  const Trajectory tr = rollout(plant, c, init, RolloutConfig{0.01, 1.0, 0.0, false});
  CHECK(trajectory_cost(tr, plant.coupling(), 0.0) == Approx(1.0).epsilon(1e-12));
  CHECK(std::accumulate(tr.step_cost.begin(), tr.step_cost.end() - 1, 0.0) * tr.dt == Approx(1.0).epsilon(1e-12));

  const ClosedLoopState sync{{0.4, 0.4}, {0, 0}, {0, 0}};
  CHECK(trajectory_cost(rollout(plant, c, sync, RolloutConfig{0.01, 1.0, 0.0, false}), plant.coupling(), 0.0) == 0.0);

  // The control term is linear in beta.
  SeededRng rng(42, "beta");
  const PhController live = random_controller(3, rng);
  const KuramotoPlant p3 = complete_plant(3);
  const ClosedLoopState s3{{0.1, 0.1, 0.1}, {1.0, -0.5, 0.3}, Vec(6, 0.0)};
  const Trajectory t3 = rollout(p3, live, s3, RolloutConfig{0.01, 1.0, 0.0, false});
  const double base = trajectory_cost(t3, p3.coupling(), 0.0);
  const double b1 = trajectory_cost(t3, p3.coupling(), 0.01) - base;
  const double b2 = trajectory_cost(t3, p3.coupling(), 0.02) - base;
  CHECK(b1 > 0.0);
  CHECK(b2 == Approx(2.0 * b1).epsilon(1e-12));
}

TEST_CASE("forward Euler on a scalar stub") {
  PhParams p;
  p.q_dims = {1};
  p.p_dims = {1};
  p.A_blocks = {Mat{{0}}};
  p.d = {0.0};
  p.G_blocks = {{{0, 0}, Mat{{0}}}};
  p.ham = {HamiltonianKind::quadratic, {Mat{{1}}}};
  const PhController c = assemble(p, BlockMask::scalar(1, {1}));
  const Trajectory tr = rollout_steps(LinearStub{}, c, {{}, {1.0}, {0.0}}, 0.1, 1, 0.0);
  REQUIRE(tr.size() == 2);
  CHECK(tr.states[1].x[0] == Approx(0.9).epsilon(1e-15));
  const Trajectory ten = rollout_steps(LinearStub{}, c, {{}, {1.0}, {0.0}}, 0.1, 10, 0.0);
  CHECK(ten.states.back().x[0] == Approx(std::pow(0.9, 10)).epsilon(1e-13));

  try {
    rollout_steps(LinearStub{1e200}, c, {{}, {1e200}, {0.0}}, 0.1, 5, 0.0);
    FAIL("expected a divergence error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::divergence);
    CHECK(std::string(e.what()).find("step 1") != std::string::npos);
  }
}

TEST_CASE("silent controller lets the plant coast") {
  const KuramotoPlant plant = complete_plant(3);
  const ClosedLoopState init{{0.1, 0.2, 0.3}, {1, 2, 3}, {0, 0, 0}};
  const Trajectory tr = rollout(plant, silent_controller(3), init, RolloutConfig{0.01, 1.0, 0.01, false});
  for (const auto& s : tr.states) {
    CHECK(s.x == init.x);
    CHECK(s.xi == init.xi);
  }
  CHECK(tr.states.back().theta[2] == Approx(0.3 + 3.0).epsilon(1e-12));
}

TEST_CASE("rollout length, time grid and equilibria") {
  SeededRng rng(43, "rollout");
  const KuramotoPlant plant = complete_plant(4);
  const PhController c = random_controller(4, rng);
  const RolloutConfig cfg{0.01, 3.0, 0.01, false};
  const ClosedLoopState zero{{0.5, 0.5, 0.5, 0.5}, Vec(4, 0.0), Vec(8, 0.0)};
  const Trajectory tr = rollout(plant, c, zero, cfg);
  REQUIRE(tr.size() == 301);
  for (std::size_t k = 0; k < tr.size(); ++k) REQUIRE(tr.times[k] == static_cast<double>(k) * 0.01);
  for (const auto& s : tr.states) REQUIRE(s.theta == zero.theta);

  // Equal velocities: the network drifts in lockstep, x stays put, r stays at 1.
  const ClosedLoopState drift{{0.3, 0.3, 0.3, 0.3}, Vec(4, 0.7), Vec(8, 0.0)};
  const Trajectory td = rollout(plant, c, drift, cfg);
  for (std::size_t k = 0; k < td.size(); ++k) {
    REQUIRE(td.states[k].x == drift.x);
    REQUIRE(td.r[k] == Approx(1.0).epsilon(1e-14));
  }
  CHECK_THROWS_AS(rollout(plant, c, zero, RolloutConfig{0.007, 1.0, 0.01, false}), Error);
}

TEST_CASE("rollouts are bit-identical across runs") {
  SeededRng a(44, "det"), b(44, "det");
  const KuramotoPlant plant = complete_plant(5);
  const PhController ca = random_controller(5, a), cb = random_controller(5, b);
  SeededRng ia(9, "inits"), ib(9, "inits");
  const auto sa = sample_initial(5, 10, ia), sb = sample_initial(5, 10, ib);
  const RolloutConfig cfg{0.01, 2.0, 0.01, false};
  const Trajectory ta = rollout(plant, ca, sa, cfg), tb = rollout(plant, cb, sb, cfg);
  for (std::size_t k = 0; k < ta.size(); ++k) {
    REQUIRE(ta.states[k].theta == tb.states[k].theta);
    REQUIRE(ta.states[k].xi == tb.states[k].xi);
    REQUIRE(ta.step_cost[k] == tb.step_cost[k]);
  }
}

TEST_CASE("sample_initial ranges") {
  SeededRng rng(45, "inits");
  for (int t = 0; t < 200; ++t) {
    const auto s = sample_initial(16, 64, rng);
    for (double v : s.theta) REQUIRE((v >= 0.0 && v < pi / 2));
    for (double v : s.x) REQUIRE((v >= -2.0 && v <= 2.0));
    REQUIRE(s.xi == Vec(64, 0.0));
    REQUIRE(in_phase_domain(s.theta));
  }
}

TEST_CASE("Euler error is first order in dt") {
  SeededRng rng(46, "order");
  const KuramotoPlant plant = complete_plant(4, 2.0);
  const PhController c = random_controller(4, rng, HamiltonianKind::quadratic);
  SeededRng ir(3, "inits");
  const ClosedLoopState init = sample_initial(4, 8, ir);
  auto terminal = [&](double dt) {
    const auto steps = static_cast<std::size_t>(std::lround(1.0 / dt));
    const Trajectory tr = rollout_steps(plant, c, init, dt, steps, 0.0);
    Vec v = tr.states.back().theta;
    v.insert(v.end(), tr.states.back().x.begin(), tr.states.back().x.end());
    return v;
  };
  const Vec ref = terminal(1e-5);
  auto err = [&](double dt) {
    const Vec v = terminal(dt);
    double e = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) e = std::max(e, std::abs(v[i] - ref[i]));
    return e;
  };
  const double ratio = err(0.01) / err(0.005);
  CHECK(ratio > 1.7);
  CHECK(ratio < 2.3);
}

TEST_CASE("trajectory CSV layout") {
  const KuramotoPlant plant = complete_plant(2);
  const Trajectory tr = rollout(plant, silent_controller(2), {{0, 1}, {0, 0}, {0, 0}}, RolloutConfig{0.5, 1.0, 0.0, false});
  std::ostringstream os;
  write_trajectory_csv(os, tr);
  std::istringstream is(os.str());
  std::string header;
  std::getline(is, header);
  CHECK(header == "t,r,cost,theta_0,theta_1,x_0,x_1,u_0,u_1");
  std::size_t rows = 0;
  for (std::string line; std::getline(is, line);) ++rows;
  CHECK(rows == 3);
}

TEST_CASE("first-order baseline") {
  SeededRng rng(0, "topology");
  const KuramotoParams p{3, 1.0, Vec{0.5, 1.0, 1.5}, adjacency(generate(topo::Complete{}, 3, rng))};
  const PhaseTrajectory tr = simulate_first_order(p, Vec{0, 0, 0}, Vec(3, 1.0), 0.01, 100);
  CHECK(tr.theta.size() == 101);
  CHECK(tr.r.front() == Approx(1.0));
  // Zero coupling input: each phase advances at its natural frequency.
  const PhaseTrajectory free = simulate_first_order(p, Vec{0, 0, 0}, Vec(3, 0.0), 0.01, 100);
  CHECK(free.theta.back()[2] == Approx(1.5).epsilon(1e-12));
}
