#include <catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "phnet/config.hpp"
#include "phnet/verify.hpp"

using namespace phnet;
using Catch::Approx;

namespace {

PhParams scalar_params(double g, double log_damping, HamiltonianKind kind = HamiltonianKind::quadratic) {
  PhParams p;
  p.q_dims = {1};
  p.p_dims = {1};
  p.A_blocks = {Mat{{0}}};
  p.d = {log_damping};
  p.G_blocks = {{{0, 0}, Mat{{g}}}};
  p.ham = {kind, {Mat{{1}}}};
  return p;
}

BlockMask one_node() { return BlockMask::scalar(1, {1}); }

struct Loop {
  KuramotoPlant plant;
  PhParams params;
  BlockMask comm;
  PhController c;
  std::vector<ClosedLoopState> inits;
};

Loop random_loop(std::uint64_t seed, std::size_t n, HamiltonianKind kind) {
  SeededRng rng(seed, "loop");
  SeededRng trng(seed, "topology");
  const Graph g = generate(topo::ErdosRenyi{0.5}, n, trng);
  const KuramotoPlant plant({n, 1.0, Vec(n, 0.0), adjacency(g)});
  const std::vector<std::size_t> q(n, 2), h(n, 4), pd(n, 1);
  PhParams p = initialize_params(comm_mask(g), q, h, pd, kind, 0.85, rng);
  for (double& v : p.d) v = rng.normal(0.0, 1.0);
  Loop l{plant, p, comm_mask(g), assemble(p, comm_mask(g)), {}};
  for (int k = 0; k < 2; ++k) l.inits.push_back(sample_initial(n, 2 * n, rng));
  return l;
}

}  // namespace

TEST_CASE("matrix certificate examples") {
  // Lambda = I, alpha certified: lambda_max = eps lambda_bar - alpha - 1 = -1.
  const Loop l = random_loop(61, 6, HamiltonianKind::log_cosh);
  PhParams p = l.params;
  for (double& v : p.d) v = 0.0;
  const PhController c = assemble(p, l.comm);
  CHECK(matrix_certificate(c) == Approx(-1.0).margin(1e-9));

  // G = 0: alpha = 0 and the certificate is -min Lambda.
  const PhController z = assemble(scalar_params(0.0, std::log(3.0)), one_node());
  CHECK(z.alpha() == 0.0);
  CHECK(matrix_certificate(z) == Approx(-3.0).epsilon(1e-14));

  // Corrupted alpha: G = I, eps = 1, Lambda = e^-10 I, alpha halved.
  PhParams bad = scalar_params(1.0, -10.0);
  bad.epsilon = 1.0;
  const PhController h = assemble(bad, one_node(), 0.5);
  CHECK(matrix_certificate(h) == Approx(0.5 - std::exp(-10.0)).epsilon(1e-12));
  CHECK(matrix_certificate(h) > 0.0);
}

TEST_CASE("eigen routes agree") {
  SeededRng rng(62, "eig");
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 1 + rng.index(10);
    const Mat m = oracle::random_psd(n, 1 + rng.index(n + 1), rng);
    const Vec a = symmetric_eigenvalues(m), b = oracle::jacobi_eigenvalues(m);
    for (std::size_t i = 0; i < n; ++i) REQUIRE(a[i] == Approx(b[i]).margin(1e-9 * (1.0 + b.back())));
    const Mat g = oracle::random_matrix(n, 1 + rng.index(4), rng);
    const Vec gg = oracle::jacobi_eigenvalues(g.rows() >= g.cols() ? gram_cols(g) : gram_rows(g));
    REQUIRE(min_singular_value(g) == Approx(std::sqrt(std::max(gg.front(), 0.0))).margin(1e-7));
  }
}

TEST_CASE("dissipation residual examples") {
  const Vec zero(5, 0.0);
  CHECK(dissipation_residual(zero, zero, 0.1).residual == 0.0);
  // Storage rising by exactly the trapezoidal supply integral.
  const Vec s{0.0, 0.5, 1.0}, w{5.0, 5.0, 5.0};
  CHECK(dissipation_residual(s, w, 0.1).residual == Approx(0.0).margin(1e-15));
  const auto r = dissipation_residual(Vec{0.0, 2.0, 1.0}, Vec{0.0, 0.0, 0.0}, 0.1);
  CHECK(r.residual == 2.0);
  CHECK(r.worst_step == 1);
  CHECK(r.energy_scale == 2.0);
  CHECK_THROWS_AS(dissipation_residual(Vec{1.0}, Vec{1.0, 2.0}, 0.1), Error);
}

TEST_CASE("supply rates") {
  CHECK(supply_value(supply::Passive{}, Vec{1, 2}, Vec{3, 4}) == 11.0);
  CHECK(supply_value(supply::OutputStrictPassive{0.5}, Vec{1, 2}, Vec{3, 4}) == 11.0 - 12.5);
  CHECK(supply_value(supply::L2Gain{2.0}, Vec{1, 0}, Vec{1, 1}) == 2.0);
}

TEST_CASE("trajectory dissipation on rest and random loops") {
  const Loop l = random_loop(63, 5, HamiltonianKind::log_cosh);
  const ClosedLoopState rest{Vec(5, 0.3), Vec(5, 0.0), Vec(10, 0.0)};
  const Trajectory tr0 = rollout(l.plant, l.c, rest, RolloutConfig{0.01, 1.0, 0.01, false});
  CHECK(trajectory_dissipation(tr0, l.c, supply::OutputStrictPassive{0.85}).residual == 0.0);
  CHECK(plant_dissipation(tr0).residual == 0.0);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto kind = seed % 2 ? HamiltonianKind::quadratic : HamiltonianKind::log_cosh;
    const Loop r = random_loop(100 + seed, 4 + seed % 5, kind);
    const RolloutConfig cfg{1e-3, 2.0, 0.01, false};
    const Trajectory tr = rollout(r.plant, r.c, r.inits[0], cfg);
    const auto osp = trajectory_dissipation(tr, r.c, supply::OutputStrictPassive{r.c.epsilon()});
    const auto pas = trajectory_dissipation(tr, r.c, supply::Passive{});
    REQUIRE(pas.residual <= osp.residual);
    REQUIRE(osp.normalized() <= cfg.dt);
    REQUIRE(plant_dissipation(tr).normalized() <= cfg.dt);
  }
}

TEST_CASE("discretization residual shrinks with dt") {
  // u = xi, xi_dot = -eps xi + y: eps-OSP with equality, so the only residual
  // is the Euler defect.
  PhParams p = scalar_params(1.0, -30.0);
  const PhController c = assemble(p, one_node());
  auto residual = [&](double dt) {
    const auto steps = static_cast<std::size_t>(std::lround(2.0 / dt));
    std::vector<Vec> y;
    for (std::size_t k = 0; k <= steps; ++k) y.push_back({std::sin(3.0 * static_cast<double>(k) * dt)});
    const auto u = drive_open_loop(c, y, dt);
    Vec storage, supply;
    for (std::size_t k = 0; k <= steps; ++k) {
      storage.push_back(0.5 * u[k][0] * u[k][0]);
      supply.push_back(supply_value(supply::OutputStrictPassive{c.epsilon()}, y[k], u[k]));
    }
    return dissipation_residual(storage, supply, dt).residual;
  };
  const double r1 = residual(1e-2), r2 = residual(5e-3);
  REQUIRE(r1 > 0.0);
  CHECK(r1 / r2 >= 1.5);
}

TEST_CASE("empirical gain respects the passivity bound") {
  CHECK((1.0 + 0.05) / 0.85 == Approx(1.2352941176).margin(1e-9));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Loop l = random_loop(200 + seed, 4, seed % 2 ? HamiltonianKind::quadratic : HamiltonianKind::log_cosh);
    const RolloutConfig cfg{0.01, 3.0, 0.01, false};
    const auto probes = make_probe_corpus(l.c.output_dim(), cfg.steps(), cfg.dt, 7);
    REQUIRE(probes.size() == 24);
    const GainEstimate g = empirical_l2_gain(l.c, probes, cfg);
    CHECK(g.probes_used == 24);
    CHECK(g.gamma_hat <= 1.05 / 0.85);
    CHECK(g.max_ratio <= 1.05 / 0.85);
  }
}

TEST_CASE("empirical gain edge cases") {
  const PhController c = assemble(scalar_params(1.0, 0.0), one_node());
  const RolloutConfig cfg{0.1, 1.0, 0.0, false};
  auto constant = [](double a) {
    return Probe{"c", std::vector<Vec>(11, Vec{a})};
  };
  const std::vector<Probe> with_zero{constant(0.0), constant(1.0), constant(2.0)};
  CHECK(empirical_l2_gain(c, with_zero, cfg).probes_used == 2);
  const std::vector<Probe> same{constant(1.0), constant(-1.0)};
  try {
    empirical_l2_gain(c, same, cfg);
    FAIL("expected a degenerate fit error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::numeric);
  }
  const std::vector<Probe> zeros{constant(0.0), constant(0.0)};
  CHECK_THROWS_AS(empirical_l2_gain(c, zeros, cfg), Error);
}

TEST_CASE("probe corpus is reproducible") {
  const auto a = make_probe_corpus(3, 100, 0.01, 7), b = make_probe_corpus(3, 100, 0.01, 7);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i].signal == b[i].signal);
  CHECK(make_probe_corpus(3, 100, 0.01, 8)[1].signal != a[1].signal);
}

TEST_CASE("closed_loop_check on rest and untrained controllers") {
  const Loop l = random_loop(64, 6, HamiltonianKind::log_cosh);
  const RolloutConfig cfg{0.01, 1.0, 0.01, false};
  const std::vector<ClosedLoopState> rest{{Vec(6, 0.2), Vec(6, 0.0), Vec(12, 0.0)}};
  const CertificateReport r0 = closed_loop_check(l.plant, l.c, rest, cfg);
  CHECK(r0.controller_residual == 0.0);
  CHECK(r0.plant_residual == 0.0);
  CHECK(r0.all_pass());

  const CertificateReport r = closed_loop_check(l.plant, l.c, l.inits, cfg);
  CHECK(r.verdicts.at("matrix_certificate"));
  CHECK(r.verdicts.at("controller_output_strict_passivity"));
  CHECK(r.verdicts.at("plant_passivity"));
  CHECK(r.verdicts.at("l2_gain"));
  CHECK(r.verdicts.count("post_horizon_consensus") == 1);
  CHECK(r.n_probes == 24);
  CHECK(r.r_at_horizon.size() == 2);

  // Stored alpha halved: only the matrix verdict can flag it.
  PhParams weak = l.params;
  for (double& v : weak.d) v = -10.0;
  const PhController halved = assemble(weak, l.comm, assemble(weak, l.comm).alpha() / 2);
  CHECK(matrix_certificate(halved) > 0.0);
  CHECK_FALSE(closed_loop_check(l.plant, halved, rest, cfg).verdicts.at("matrix_certificate"));
}
