#pragma once

// Closed loop plant || controller, forward-Euler rollout, cost and consensus
// metric. The controller output u drives the plant directly; the controller
// reads y = plant output.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "phnet/controller.hpp"
#include "phnet/error.hpp"
#include "phnet/numerics.hpp"
#include "phnet/plant.hpp"
#include "phnet/rng.hpp"

namespace phnet {

struct ClosedLoopState {
  Vec theta;
  Vec x;
  Vec xi;

  PlantState plant() const { return {theta, x}; }
  friend bool operator==(const ClosedLoopState&, const ClosedLoopState&) = default;
};

struct RolloutConfig {
  double dt = 0.01;
  double horizon = 3.0;  // T
  double beta = 0.01;
  bool normalize_by_horizon = false;  // multiply the cost by 1/T

  std::size_t steps() const {
    require(dt > 0.0 && horizon > 0.0, ErrorKind::configuration, "rollout: dt and T must be positive");
    const double ratio = horizon / dt;
    const double r = std::round(ratio);
    require(std::abs(ratio - r) <= 1e-9 * std::max(1.0, r), ErrorKind::configuration,
            "rollout: T/dt must be an integer");
    return static_cast<std::size_t>(r);
  }
  void validate() const {
    (void)steps();
    require(beta >= 0.0, ErrorKind::configuration, "rollout: beta must be non-negative");
  }
};

/// Logged closed-loop rollout. Index k holds the state at t_k = k dt and the
/// signals evaluated at that state. `nu` is the rate applied to the plant's
/// measured part (x_dot), i.e. the input of its passive port.
struct Trajectory {
  double dt = 0.0;
  Vec times;
  std::vector<ClosedLoopState> states;
  std::vector<Vec> u;
  std::vector<Vec> y;
  std::vector<Vec> nu;
  Vec step_cost;
  Vec r;
  std::vector<std::uint8_t> in_domain;  // all pairwise phase gaps below pi/2

  std::size_t size() const noexcept { return times.size(); }
};

/// r = N^-1 sqrt(sum_{i,j} cos(theta_j - theta_i)), summed over all ordered
/// pairs including i = j. Returns 1 for fewer than two oscillators.
inline double consensus_metric(std::span<const double> theta) {
  const std::size_t n = theta.size();
  if (n <= 1) return 1.0;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s += std::cos(theta[j] - theta[i]);
  require(s >= -1e-12, ErrorKind::numeric, "consensus_metric: negative radicand");
  return std::sqrt(std::max(s, 0.0)) / static_cast<double>(n);
}

inline bool in_phase_domain(std::span<const double> theta) {
  if (theta.empty()) return true;
  const auto [lo, hi] = std::minmax_element(theta.begin(), theta.end());
  return *hi - *lo < std::numbers::pi / 2.0;
}

/// Integrand of the cost, halved: (sum_ij P_ij sin^2(theta_j - theta_i) + beta |u|^2) / 2.
inline double stage_cost(std::span<const double> theta, std::span<const double> u, const Mat& coupling, double beta) {
  double s = 0.0;
  for (std::size_t i = 0; i < coupling.rows(); ++i)
    for (std::size_t j = 0; j < coupling.cols(); ++j) {
      if (coupling(i, j) == 0.0) continue;
      const double sn = std::sin(theta[j] - theta[i]);
      s += coupling(i, j) * sn * sn;
    }
  return 0.5 * (s + beta * squared_norm(u));
}

template <Plant P>
ClosedLoopState closed_loop_rhs(const P& plant, const PhController& c, const ClosedLoopState& s) {
  require_dims(s.xi.size() == c.state_dim(), "closed_loop_rhs: xi has wrong length");
  require_dims(plant.size() == c.output_dim(), "closed_loop_rhs: plant and controller port sizes differ");
  const PlantState ps = s.plant();
  const Vec y = plant.output(ps);
  const Vec u = controller_output(c, s.xi);
  PlantState dp = plant.derivative(ps, u);
  return {std::move(dp.theta), std::move(dp.x), controller_rhs(c, s.xi, y)};
}

namespace detail {

inline void euler_update(Vec& v, const Vec& dv, double dt) {
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += dt * dv[i];
}

}  // namespace detail

/// Forward Euler from `init` for exactly `steps` steps (steps + 1 logged samples).
template <Plant P>
Trajectory rollout_steps(const P& plant, const PhController& c, const ClosedLoopState& init, double dt,
                         std::size_t steps, double beta, double cost_scale = 1.0) {
  require_dims(init.xi.size() == c.state_dim(), "rollout: xi has wrong length");
  Trajectory tr;
  tr.dt = dt;
  tr.times.reserve(steps + 1);
  tr.states.reserve(steps + 1);

  ClosedLoopState s = init;
  for (std::size_t k = 0;; ++k) {
    const PlantState ps = s.plant();
    Vec y = plant.output(ps);
    Vec u = controller_output(c, s.xi);
    PlantState dp = plant.derivative(ps, u);
    Vec dxi = controller_rhs(c, s.xi, y);

    double cost = 0.0;
    if constexpr (CoupledPlant<P>)
      cost = stage_cost(s.theta, u, plant.coupling(), beta);
    else
      cost = 0.5 * beta * squared_norm(u);

    tr.times.push_back(static_cast<double>(k) * dt);
    tr.step_cost.push_back(cost_scale * cost);
    tr.r.push_back(consensus_metric(s.theta));
    tr.in_domain.push_back(in_phase_domain(s.theta) ? 1 : 0);
    tr.states.push_back(s);
    tr.u.push_back(std::move(u));
    tr.y.push_back(std::move(y));
    tr.nu.push_back(dp.x);
    if (k == steps) break;

    detail::euler_update(s.theta, dp.theta, dt);
    detail::euler_update(s.x, dp.x, dt);
    detail::euler_update(s.xi, dxi, dt);
    if (!all_finite(s.theta) || !all_finite(s.x) || !all_finite(s.xi))
      throw Error(ErrorKind::divergence, "rollout: non-finite state at step " + std::to_string(k + 1));
  }
  return tr;
}

template <Plant P>
Trajectory rollout(const P& plant, const PhController& c, const ClosedLoopState& init, const RolloutConfig& cfg) {
  cfg.validate();
  return rollout_steps(plant, c, init, cfg.dt, cfg.steps(), cfg.beta,
                       cfg.normalize_by_horizon ? 1.0 / cfg.horizon : 1.0);
}

/// Left Riemann sum of the cost integrand over [0, T); the final sample is excluded.
inline double trajectory_cost(const Trajectory& tr, const Mat& coupling, double beta) {
  double c = 0.0;
  for (std::size_t k = 0; k + 1 < tr.size(); ++k) c += stage_cost(tr.states[k].theta, tr.u[k], coupling, beta);
  return tr.dt * c;
}

/// theta_i ~ U[0, pi/2), x_i ~ U[-2, 2], xi = 0.
inline ClosedLoopState sample_initial(std::size_t n, std::size_t q_total, SeededRng& rng) {
  ClosedLoopState s;
  s.theta.resize(n);
  s.x.resize(n);
  for (double& t : s.theta) t = rng.uniform(0.0, std::numbers::pi / 2.0);
  for (double& v : s.x) v = rng.uniform(-2.0, 2.0);
  s.xi.assign(q_total, 0.0);
  return s;
}

inline std::vector<ClosedLoopState> sample_initials(std::size_t count, std::size_t n, std::size_t q_total,
                                                    SeededRng& rng) {
  std::vector<ClosedLoopState> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) out.push_back(sample_initial(n, q_total, rng));
  return out;
}

/// Uncontrolled first-order network.
struct PhaseTrajectory {
  Vec times;
  std::vector<Vec> theta;
  Vec r;
};

inline PhaseTrajectory simulate_first_order(const KuramotoParams& p, Vec theta0, std::span<const double> u,
                                            double dt, std::size_t steps) {
  require_dims(theta0.size() == p.n, "simulate_first_order: theta0 has wrong length");
  PhaseTrajectory tr;
  for (std::size_t k = 0;; ++k) {
    tr.times.push_back(static_cast<double>(k) * dt);
    tr.r.push_back(consensus_metric(theta0));
    tr.theta.push_back(theta0);
    if (k == steps) break;
    const Vec d = rhs_first_order(p, theta0, u);
    detail::euler_update(theta0, d, dt);
    if (!all_finite(theta0))
      throw Error(ErrorKind::divergence, "simulate_first_order: non-finite state at step " + std::to_string(k + 1));
  }
  return tr;
}

inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr) {
  require(tr.size() > 0, ErrorKind::numeric, "write_trajectory_csv: empty trajectory");
  const std::size_t n = tr.states[0].theta.size();
  const std::size_t m = tr.u[0].size();
  os << "t,r,cost";
  for (std::size_t i = 0; i < n; ++i) os << ",theta_" << i;
  for (std::size_t i = 0; i < tr.states[0].x.size(); ++i) os << ",x_" << i;
  for (std::size_t i = 0; i < m; ++i) os << ",u_" << i;
  os << '\n';
  os << std::setprecision(12);
  for (std::size_t k = 0; k < tr.size(); ++k) {
    os << tr.times[k] << ',' << tr.r[k] << ',' << tr.step_cost[k];
    for (double v : tr.states[k].theta) os << ',' << v;
    for (double v : tr.states[k].x) os << ',' << v;
    for (double v : tr.u[k]) os << ',' << v;
    os << '\n';
  }
}

inline void write_phase_csv(std::ostream& os, const PhaseTrajectory& tr) {
  const std::size_t n = tr.theta.empty() ? 0 : tr.theta[0].size();
  os << "t,r";
  for (std::size_t i = 0; i < n; ++i) os << ",theta_" << i;
  os << '\n' << std::setprecision(12);
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    os << tr.times[k] << ',' << tr.r[k];
    for (double v : tr.theta[k]) os << ',' << v;
    os << '\n';
  }
}

}  // namespace phnet
