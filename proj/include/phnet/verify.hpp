#pragma once

// Numerical certification of the controller:
//  * the matrix certificate lambda_max(eps G G^T - alpha I - Lambda) <= 0,
//  * dissipation inequalities along logged trajectories,
//  * an empirical L2 gain fitted over a probe corpus,
//  * closed-loop checks combining the above with post-horizon consensus.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "phnet/controller.hpp"
#include "phnet/error.hpp"
#include "phnet/numerics.hpp"
#include "phnet/plant.hpp"
#include "phnet/rng.hpp"
#include "phnet/simulate.hpp"

namespace phnet {

inline constexpr double kMatrixCertificateTol = 1e-9;

/// All eigenvalues of a symmetric matrix, ascending (Eigen's self-adjoint solver).
inline Vec symmetric_eigenvalues(const Mat& m) {
  require_dims(m.square(), "symmetric_eigenvalues: matrix must be square");
  if (m.rows() == 0) return {};
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(i, j);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(e, Eigen::EigenvaluesOnly);
  require(solver.info() == Eigen::Success, ErrorKind::convergence, "symmetric_eigenvalues: solver failed");
  const auto& ev = solver.eigenvalues();
  return Vec(ev.data(), ev.data() + ev.size());
}

/// Smallest singular value of G (sqrt of the smallest eigenvalue of G^T G).
inline double min_singular_value(const Mat& g) {
  if (g.size() == 0) return 0.0;
  const Vec ev = symmetric_eigenvalues(g.rows() >= g.cols() ? gram_cols(g) : gram_rows(g));
  return std::sqrt(std::max(ev.front(), 0.0));
}

/// lambda_max(eps G_c G_c^T - alpha I - Lambda). Non-positive (up to 1e-9) for
/// every controller whose alpha was set by assembly.
inline double matrix_certificate(const PhController& c) {
  Mat m = c.epsilon() * gram_rows(c.G());
  for (std::size_t k = 0; k < m.rows(); ++k) m(k, k) -= c.alpha() + c.lambda()[k];
  return symmetric_eigenvalues(m).back();
}

namespace supply {
struct Passive {};
struct OutputStrictPassive {
  double epsilon = 0.85;
};
struct L2Gain {
  double gamma = 1.0;
};
}  // namespace supply

using SupplyRate = std::variant<supply::Passive, supply::OutputStrictPassive, supply::L2Gain>;

/// s(input, output): input'output, input'output - eps |output|^2, or
/// gamma^2 |input|^2 - |output|^2.
inline double supply_value(const SupplyRate& rate, std::span<const double> in, std::span<const double> out) {
  if (std::holds_alternative<supply::Passive>(rate)) return dot(in, out);
  if (const auto* osp = std::get_if<supply::OutputStrictPassive>(&rate))
    return dot(in, out) - osp->epsilon * squared_norm(out);
  const double g = std::get<supply::L2Gain>(rate).gamma;
  return g * g * squared_norm(in) - squared_norm(out);
}

struct DissipationResult {
  double residual = 0.0;  // max_k [S(k) - S(0) - integral of supply up to t_k]
  double energy_scale = 0.0;  // max_k |S(k)| + integral of |supply|
  std::size_t worst_step = 0;

  double normalized() const { return residual / (1.0 + energy_scale); }
};

/// Dissipation residual of a storage sequence against a supply sequence, with
/// the supply integrated by the trapezoidal rule.
inline DissipationResult dissipation_residual(std::span<const double> storage, std::span<const double> supply_seq,
                                              double dt) {
  require_dims(storage.size() == supply_seq.size() && !storage.empty(), "dissipation: sequence length mismatch");
  DissipationResult res;
  double integral = 0.0, abs_integral = 0.0, max_storage = std::abs(storage[0]);
  for (std::size_t k = 1; k < storage.size(); ++k) {
    integral += 0.5 * dt * (supply_seq[k - 1] + supply_seq[k]);
    abs_integral += 0.5 * dt * (std::abs(supply_seq[k - 1]) + std::abs(supply_seq[k]));
    max_storage = std::max(max_storage, std::abs(storage[k]));
    const double r = storage[k] - storage[0] - integral;
    if (r > res.residual) {
      res.residual = r;
      res.worst_step = k;
    }
  }
  res.energy_scale = max_storage + abs_integral;
  return res;
}

/// Controller dissipation along a closed-loop trajectory: storage H(xi), input
/// y, output u.
inline DissipationResult trajectory_dissipation(const Trajectory& tr, const PhController& c, const SupplyRate& rate) {
  require_dims(tr.size() > 0, "trajectory_dissipation: empty trajectory");
  Vec storage(tr.size()), s(tr.size());
  for (std::size_t k = 0; k < tr.size(); ++k) {
    require_dims(tr.states[k].xi.size() == c.state_dim() && tr.y[k].size() == c.output_dim() &&
                     tr.u[k].size() == c.output_dim(),
                 "trajectory_dissipation: trajectory does not match controller dimensions");
    storage[k] = hamiltonian(c, tr.states[k].xi);
    s[k] = supply_value(rate, tr.y[k], tr.u[k]);
  }
  return dissipation_residual(storage, s, tr.dt);
}

/// Plant dissipation on its physical port: storage V = |x|^2 / 2, input nu =
/// x_dot, output y = x.
inline DissipationResult plant_dissipation(const Trajectory& tr, const SupplyRate& rate = supply::Passive{}) {
  require_dims(tr.size() > 0, "plant_dissipation: empty trajectory");
  Vec storage(tr.size()), s(tr.size());
  for (std::size_t k = 0; k < tr.size(); ++k) {
    storage[k] = storage_value(tr.states[k].plant());
    s[k] = supply_value(rate, tr.nu[k], tr.y[k]);
  }
  return dissipation_residual(storage, s, tr.dt);
}

/// Open-loop input signal sampled at t_k = k dt, k = 0..M.
struct Probe {
  std::string description;
  std::vector<Vec> signal;
};

/// Steps, sinusoids at five frequencies in [0.1, 10] rad/s and two white-noise
/// sequences, each at amplitudes 0.1, 1 and 10. Directions and phases come from
/// the seed.
inline std::vector<Probe> make_probe_corpus(std::size_t dim, std::size_t steps, double dt, std::uint64_t seed) {
  SeededRng rng(seed, "probes");
  const double amplitudes[] = {0.1, 1.0, 10.0};
  const double freqs[] = {0.1, 0.316227766, 1.0, 3.16227766, 10.0};
  auto unit_direction = [&] {
    Vec d(dim);
    for (double& v : d) v = rng.normal();
    const double nd = norm(d);
    for (double& v : d) v /= nd;
    return d;
  };
  std::vector<Probe> out;
  for (double a : amplitudes) {
    {
      const Vec dir = unit_direction();
      Probe p{"step amplitude=" + std::to_string(a), {}};
      for (std::size_t k = 0; k <= steps; ++k) {
        Vec y(dim);
        for (std::size_t j = 0; j < dim; ++j) y[j] = a * dir[j];
        p.signal.push_back(std::move(y));
      }
      out.push_back(std::move(p));
    }
    for (double w : freqs) {
      const Vec dir = unit_direction();
      Vec phase(dim);
      for (double& ph : phase) ph = rng.uniform(0.0, 2.0 * std::numbers::pi);
      Probe p{"sinusoid amplitude=" + std::to_string(a) + " omega=" + std::to_string(w), {}};
      for (std::size_t k = 0; k <= steps; ++k) {
        const double t = static_cast<double>(k) * dt;
        Vec y(dim);
        for (std::size_t j = 0; j < dim; ++j) y[j] = a * dir[j] * std::sin(w * t + phase[j]);
        p.signal.push_back(std::move(y));
      }
      out.push_back(std::move(p));
    }
    for (int rep = 0; rep < 2; ++rep) {
      Probe p{"white_noise amplitude=" + std::to_string(a) + " rep=" + std::to_string(rep), {}};
      const double sd = a / std::sqrt(static_cast<double>(dim));
      for (std::size_t k = 0; k <= steps; ++k) {
        Vec y(dim);
        for (double& v : y) v = rng.normal(0.0, sd);
        p.signal.push_back(std::move(y));
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

/// Controller driven open loop from xi = 0 by `input`; returns the output u_k
/// at every sample.
inline std::vector<Vec> drive_open_loop(const PhController& c, std::span<const Vec> input, double dt) {
  std::vector<Vec> out;
  out.reserve(input.size());
  Vec xi(c.state_dim(), 0.0);
  for (std::size_t k = 0; k < input.size(); ++k) {
    out.push_back(controller_output(c, xi));
    if (k + 1 == input.size()) break;
    const Vec dxi = controller_rhs(c, xi, input[k]);
    axpy(dt, dxi, xi);
    require(all_finite(xi), ErrorKind::divergence, "drive_open_loop: non-finite state at step " + std::to_string(k + 1));
  }
  return out;
}

/// Controller dissipation with the controller driven open loop from xi = 0:
/// storage H(xi_k), input y = `input`, output u.
inline DissipationResult open_loop_dissipation(const PhController& c, std::span<const Vec> input, double dt,
                                               const SupplyRate& rate) {
  require_dims(!input.empty(), "open_loop_dissipation: empty input");
  Vec storage, s;
  storage.reserve(input.size());
  s.reserve(input.size());
  Vec xi(c.state_dim(), 0.0);
  for (std::size_t k = 0; k < input.size(); ++k) {
    require_dims(input[k].size() == c.output_dim(), "open_loop_dissipation: input dimension mismatch");
    storage.push_back(hamiltonian(c, xi));
    s.push_back(supply_value(rate, input[k], controller_output(c, xi)));
    if (k + 1 == input.size()) break;
    axpy(dt, controller_rhs(c, xi, input[k]), xi);
    require(all_finite(xi), ErrorKind::divergence,
            "open_loop_dissipation: non-finite state at step " + std::to_string(k + 1));
  }
  return dissipation_residual(storage, s, dt);
}

inline double signal_l2_norm(std::span<const Vec> sig, double dt) {
  double s = 0.0;
  for (std::size_t k = 0; k + 1 < sig.size(); ++k) s += squared_norm(sig[k]);
  return std::sqrt(dt * s);
}

struct GainEstimate {
  double gamma_hat = 0.0;  // least-squares slope of |u|_2 against |y|_2
  double bias_b = 0.0;     // intercept
  double max_ratio = 0.0;  // max over probes of |u|_2 / |y|_2
  std::size_t probes_used = 0;
  Vec input_norms;
  Vec output_norms;
};

inline GainEstimate empirical_l2_gain(const PhController& c, std::span<const Probe> probes, const RolloutConfig& cfg) {
  GainEstimate g;
  for (const auto& p : probes) {
    require_dims(p.signal.empty() || p.signal[0].size() == c.output_dim(), "empirical_l2_gain: probe dimension mismatch");
    const double ny = signal_l2_norm(p.signal, cfg.dt);
    if (ny == 0.0) continue;
    const double nu = signal_l2_norm(drive_open_loop(c, p.signal, cfg.dt), cfg.dt);
    g.input_norms.push_back(ny);
    g.output_norms.push_back(nu);
    g.max_ratio = std::max(g.max_ratio, nu / ny);
  }
  g.probes_used = g.input_norms.size();
  require(g.probes_used >= 2, ErrorKind::numeric, "empirical_l2_gain: fewer than two non-zero probes");
  const double n = static_cast<double>(g.probes_used);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < g.probes_used; ++i) {
    mx += g.input_norms[i];
    my += g.output_norms[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < g.probes_used; ++i) {
    sxx += (g.input_norms[i] - mx) * (g.input_norms[i] - mx);
    sxy += (g.input_norms[i] - mx) * (g.output_norms[i] - my);
  }
  require(sxx > 0.0, ErrorKind::numeric, "empirical_l2_gain: degenerate fit (all probe energies equal)");
  g.gamma_hat = sxy / sxx;
  g.bias_b = my - g.gamma_hat * mx;
  return g;
}

struct VerifyOptions {
  double dissipation_c_tol = 1.0;  // residual / (1 + energy) <= c_tol * dt
  double gain_margin = 0.05;       // gamma_hat <= (1 + margin) / eps
  double consensus_drop = 0.05;    // min r over [T, 2T] >= r(T) - drop
  std::uint64_t probe_seed = 7;
};

struct CertificateReport {
  double dt = 0.0;
  std::size_t n_inits = 0;
  std::size_t n_probes = 0;
  std::uint64_t probe_seed = 0;

  double matrix_residual = 0.0;
  double matrix_tol = kMatrixCertificateTol;
  double alpha = 0.0;
  double certified_alpha = 0.0;

  double controller_residual = 0.0;  // max over inits of normalized OSP residual
  double plant_residual = 0.0;       // max over inits of normalized passivity residual
  double dissipation_tol = 0.0;

  double empirical_gain = 0.0;
  double bias_b = 0.0;
  double max_gain_ratio = 0.0;
  double gain_bound = 0.0;

  Vec r_at_horizon;
  Vec r_post_min;
  double consensus_drop = 0.0;
  std::size_t domain_exits = 0;  // rollouts that left the pi/2 phase domain

  std::vector<std::string> probe_descriptions;
  std::map<std::string, bool> verdicts;

  bool all_pass() const {
    return std::all_of(verdicts.begin(), verdicts.end(), [](const auto& kv) { return kv.second; });
  }
};

/// Rolls the closed loop out to 2T from every initial condition and aggregates
/// the matrix certificate, controller eps-OSP and plant passivity residuals, the
/// empirical gain and post-horizon consensus.
template <Plant P>
CertificateReport closed_loop_check(const P& plant, const PhController& c, std::span<const ClosedLoopState> inits,
                                    const RolloutConfig& cfg, const VerifyOptions& opt = {}) {
  cfg.validate();
  require(!inits.empty(), ErrorKind::configuration, "closed_loop_check: need at least one initial condition");
  CertificateReport rep;
  rep.dt = cfg.dt;
  rep.n_inits = inits.size();
  rep.probe_seed = opt.probe_seed;
  rep.alpha = c.alpha();
  rep.certified_alpha = c.epsilon() * c.lambda_bar();

  rep.matrix_residual = matrix_certificate(c);
  rep.verdicts["matrix_certificate"] = rep.matrix_residual <= rep.matrix_tol;

  const std::size_t steps = cfg.steps();
  rep.dissipation_tol = opt.dissipation_c_tol * cfg.dt;
  rep.consensus_drop = opt.consensus_drop;
  bool consensus_ok = true;
  for (const auto& init : inits) {
    const Trajectory tr = rollout_steps(plant, c, init, cfg.dt, 2 * steps, cfg.beta);
    rep.controller_residual = std::max(
        rep.controller_residual, trajectory_dissipation(tr, c, supply::OutputStrictPassive{c.epsilon()}).normalized());
    rep.plant_residual = std::max(rep.plant_residual, plant_dissipation(tr).normalized());
    const double rT = tr.r[steps];
    const double rmin = *std::min_element(tr.r.begin() + static_cast<std::ptrdiff_t>(steps), tr.r.end());
    rep.r_at_horizon.push_back(rT);
    rep.r_post_min.push_back(rmin);
    consensus_ok = consensus_ok && rmin >= rT - opt.consensus_drop;
    if (std::find(tr.in_domain.begin(), tr.in_domain.end(), 0) != tr.in_domain.end()) ++rep.domain_exits;
  }
  rep.verdicts["controller_output_strict_passivity"] = rep.controller_residual <= rep.dissipation_tol;
  rep.verdicts["plant_passivity"] = rep.plant_residual <= rep.dissipation_tol;
  rep.verdicts["post_horizon_consensus"] = consensus_ok;

  const auto probes = make_probe_corpus(c.output_dim(), steps, cfg.dt, opt.probe_seed);
  rep.n_probes = probes.size();
  for (const auto& p : probes) rep.probe_descriptions.push_back(p.description);
  const GainEstimate g = empirical_l2_gain(c, probes, cfg);
  rep.empirical_gain = g.gamma_hat;
  rep.bias_b = g.bias_b;
  rep.max_gain_ratio = g.max_ratio;
  rep.gain_bound = (1.0 + opt.gain_margin) / c.epsilon();
  rep.verdicts["l2_gain"] = g.gamma_hat <= rep.gain_bound;
  return rep;
}

}  // namespace phnet
