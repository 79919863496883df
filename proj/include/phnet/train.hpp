#pragma once

// Training of the port-Hamiltonian controller on the Kuramoto benchmark.
//
// The loss is the mean rollout cost over a fixed set of initial conditions.
// Gradients are the exact reverse sweep through the stored forward-Euler steps
// (the discrete adjoint), so they match finite differences of the computed
// loss to rounding.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "phnet/controller.hpp"
#include "phnet/error.hpp"
#include "phnet/numerics.hpp"
#include "phnet/plant.hpp"
#include "phnet/simulate.hpp"
#include "phnet/verify.hpp"

namespace phnet {

enum class AlphaGrad { exact, frozen };

inline std::string to_string(AlphaGrad a) { return a == AlphaGrad::exact ? "exact" : "frozen"; }
inline AlphaGrad parse_alpha_grad(const std::string& s) {
  if (s == "exact") return AlphaGrad::exact;
  if (s == "frozen") return AlphaGrad::frozen;
  throw Error(ErrorKind::configuration, "unknown alpha_grad mode '" + s + "'");
}

/// Index map between PhParams and its flat vector: all A_i (row-major), d, the
/// allowed G blocks in (row, col) order, then all K_i.
class ParamLayout {
 public:
  explicit ParamLayout(PhParams shape) : shape_(std::move(shape)) {
    std::size_t off = 0;
    for (const auto& a : shape_.A_blocks) {
      a_off_.push_back(off);
      off += a.size();
    }
    d_off_ = off;
    off += shape_.d.size();
    for (const auto& [idx, g] : shape_.G_blocks) {
      g_keys_.push_back(idx);
      g_off_.push_back(off);
      off += g.size();
    }
    for (const auto& k : shape_.ham.K_blocks) {
      k_off_.push_back(off);
      off += k.size();
    }
    total_ = off;
  }

  std::size_t size() const noexcept { return total_; }
  const PhParams& shape() const noexcept { return shape_; }
  std::size_t a_offset(std::size_t i) const { return a_off_[i]; }
  std::size_t d_offset() const noexcept { return d_off_; }
  const std::vector<BlockIndex>& g_keys() const noexcept { return g_keys_; }
  std::size_t g_offset(std::size_t b) const { return g_off_[b]; }
  std::size_t k_offset(std::size_t i) const { return k_off_[i]; }

  Vec flatten(const PhParams& p) const {
    Vec v;
    v.reserve(total_);
    for (const auto& a : p.A_blocks) v.insert(v.end(), a.values().begin(), a.values().end());
    v.insert(v.end(), p.d.begin(), p.d.end());
    for (const auto& [idx, g] : p.G_blocks) v.insert(v.end(), g.values().begin(), g.values().end());
    for (const auto& k : p.ham.K_blocks) v.insert(v.end(), k.values().begin(), k.values().end());
    require_dims(v.size() == total_, "ParamLayout::flatten: parameters do not match the layout");
    return v;
  }

  PhParams unflatten(std::span<const double> v) const {
    require_dims(v.size() == total_, "ParamLayout::unflatten: vector length mismatch");
    PhParams p = shape_;
    auto fill = [&](Mat& m, std::size_t off) { std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(off), m.size(), m.values().begin()); };
    for (std::size_t i = 0; i < p.A_blocks.size(); ++i) fill(p.A_blocks[i], a_off_[i]);
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(d_off_), p.d.size(), p.d.begin());
    std::size_t b = 0;
    for (auto& [idx, g] : p.G_blocks) fill(g, g_off_[b++]);
    for (std::size_t i = 0; i < p.ham.K_blocks.size(); ++i) fill(p.ham.K_blocks[i], k_off_[i]);
    return p;
  }

 private:
  PhParams shape_;
  std::vector<std::size_t> a_off_, g_off_, k_off_;
  std::vector<BlockIndex> g_keys_;
  std::size_t d_off_ = 0;
  std::size_t total_ = 0;
};

struct FlatParams {
  Vec values;
  std::shared_ptr<const ParamLayout> layout;

  static FlatParams from(const PhParams& p) {
    auto layout = std::make_shared<const ParamLayout>(p);
    return {layout->flatten(p), layout};
  }
  PhParams to_params() const { return layout->unflatten(values); }
  std::size_t size() const noexcept { return values.size(); }
};

/// Everything the loss depends on besides the parameters.
struct TrainProblem {
  KuramotoPlant plant;
  BlockMask comm;  // node-level pattern, diagonal set
  RolloutConfig rollout;
  AlphaGrad alpha_grad = AlphaGrad::exact;
};

struct LossAndGrad {
  double loss = 0.0;
  Vec grad;
};

namespace detail {

// Stored forward pass for one initial condition.
struct Tape {
  std::vector<ClosedLoopState> states;  // k = 0..M
  std::vector<Vec> act;                 // per step: tanh(K xi) (log-cosh) or K xi (quadratic), stacked per node
  std::vector<Vec> g;                   // dH/dxi
  std::vector<Vec> u;
  double cost = 0.0;
};

inline std::vector<std::size_t> hidden_offsets(const PhController& c) {
  std::vector<std::size_t> h;
  for (const auto& k : c.ham().K_blocks) h.push_back(k.rows());
  return offsets_of(h);
}

inline void hamiltonian_activations(const PhController& c, const std::vector<std::size_t>& h_off,
                                    std::span<const double> xi, Vec& act, Vec& g) {
  act.assign(h_off.back(), 0.0);
  g.assign(c.state_dim(), 0.0);
  const bool lc = c.ham().kind == HamiltonianKind::log_cosh;
  for (std::size_t i = 0; i < c.nodes(); ++i) {
    const Mat& k = c.ham().K_blocks[i];
    const std::size_t qo = c.q_offsets()[i], q = c.q_dims()[i];
    for (std::size_t r = 0; r < k.rows(); ++r) {
      double z = 0.0;
      for (std::size_t col = 0; col < q; ++col) z += k(r, col) * xi[qo + col];
      act[h_off[i] + r] = lc ? std::tanh(z) : z;
    }
    for (std::size_t r = 0; r < k.rows(); ++r) {
      const double a = act[h_off[i] + r];
      for (std::size_t col = 0; col < q; ++col) g[qo + col] += k(r, col) * a;
    }
  }
}

inline Tape forward(const TrainProblem& prob, const PhController& c, const ClosedLoopState& init,
                    std::size_t steps, double cost_weight) {
  const auto h_off = hidden_offsets(c);
  const auto& P = prob.plant.coupling();
  const double dt = prob.rollout.dt;
  Tape tp;
  tp.states.reserve(steps + 1);
  ClosedLoopState s = init;
  for (std::size_t k = 0;; ++k) {
    Vec act, g;
    hamiltonian_activations(c, h_off, s.xi, act, g);
    Vec u = matvec_t(c.G(), g);
    tp.states.push_back(s);
    if (k == steps) break;
    tp.cost += cost_weight * stage_cost(s.theta, u, P, prob.rollout.beta);
    const auto rates = rhs_second_order(prob.plant.params(), s.plant(), u);
    Vec dxi = damped_interconnection(c, g);
    axpy(1.0, matvec(c.G(), s.x), dxi);
    euler_update(s.theta, rates.theta_dot, dt);
    euler_update(s.x, rates.x_dot, dt);
    euler_update(s.xi, dxi, dt);
    if (!all_finite(s.theta) || !all_finite(s.x) || !all_finite(s.xi))
      throw Error(ErrorKind::divergence, "training rollout: non-finite state at step " + std::to_string(k + 1));
    tp.act.push_back(std::move(act));
    tp.g.push_back(std::move(g));
    tp.u.push_back(std::move(u));
  }
  return tp;
}

// Parameter adjoints in structured form, accumulated over all steps.
struct ParamBars {
  std::vector<Mat> J;  // dL/dJ_i (before projection onto A)
  Vec lambda;          // dL/dLambda_kk
  Mat G;
  std::vector<Mat> K;
  double alpha = 0.0;
};

inline void reverse(const TrainProblem& prob, const PhController& c, const Tape& tp, double cost_weight,
                    ParamBars& bars) {
  const auto h_off = hidden_offsets(c);
  const auto& kp = prob.plant.params();
  const auto& P = kp.adjacency;
  const std::size_t n = kp.n;
  const std::size_t nq = c.state_dim();
  const double dt = prob.rollout.dt;
  const double beta = prob.rollout.beta;
  const double kn = kp.coupling / static_cast<double>(n);
  const bool lc = c.ham().kind == HamiltonianKind::log_cosh;
  const std::size_t steps = tp.states.size() - 1;

  Vec a_theta(n, 0.0), a_x(n, 0.0), a_xi(nq, 0.0);  // adjoint of s_{k+1}
  Vec b_theta(n), b_x(n), b_xi(nq), u_bar(c.output_dim()), g_bar(nq), ell(nq);

  for (std::size_t kk = steps; kk-- > 0;) {
    const ClosedLoopState& s = tp.states[kk];
    const Vec& g = tp.g[kk];
    const Vec& u = tp.u[kk];
    const Vec& act = tp.act[kk];
    std::fill(b_theta.begin(), b_theta.end(), 0.0);
    std::fill(b_x.begin(), b_x.end(), 0.0);
    std::fill(b_xi.begin(), b_xi.end(), 0.0);
    std::fill(g_bar.begin(), g_bar.end(), 0.0);
    std::fill(u_bar.begin(), u_bar.end(), 0.0);

    // theta_{k+1} = theta_k + dt x_k
    axpy(dt, a_theta, b_x);

    // x_{k+1} = x_k + dt (K/N) u_i sum_j P_ij cos(theta_j - theta_i)(x_j - x_i)
    for (std::size_t i = 0; i < n; ++i) {
      const double ai = dt * a_x[i] * kn;
      if (ai == 0.0) continue;
      double w = 0.0;
      const double bi = ai * u[i];
      for (std::size_t j = 0; j < n; ++j) {
        const double pij = P(i, j);
        if (pij == 0.0) continue;
        const double diff = s.theta[j] - s.theta[i];
        const double cs = std::cos(diff), sn = std::sin(diff);
        const double dx = s.x[j] - s.x[i];
        w += pij * cs * dx;
        b_x[j] += bi * pij * cs;
        b_x[i] -= bi * pij * cs;
        b_theta[j] -= bi * pij * sn * dx;
        b_theta[i] += bi * pij * sn * dx;
      }
      u_bar[i] += ai * w;
    }

    // xi_{k+1} = xi_k + dt ([J - (alpha + Lambda)] g + G x)
    for (std::size_t q = 0; q < nq; ++q) ell[q] = dt * a_xi[q];
    for (std::size_t i = 0; i < c.nodes(); ++i) {
      const std::size_t off = c.q_offsets()[i], qd = c.q_dims()[i];
      const Mat& J = c.J_blocks()[i];
      Mat& Jb = bars.J[i];
      for (std::size_t r = 0; r < qd; ++r)
        for (std::size_t col = 0; col < qd; ++col) {
          g_bar[off + col] += J(r, col) * ell[off + r];
          Jb(r, col) += ell[off + r] * g[off + col];
        }
    }
    for (std::size_t q = 0; q < nq; ++q) {
      g_bar[q] -= (c.alpha() + c.lambda()[q]) * ell[q];
      bars.alpha -= ell[q] * g[q];
      bars.lambda[q] -= ell[q] * g[q];
    }
    {
      const Mat& G = c.G();
      for (std::size_t r = 0; r < G.rows(); ++r) {
        const double lr = ell[r];
        if (lr == 0.0) continue;
        for (std::size_t col = 0; col < G.cols(); ++col) {
          b_x[col] += G(r, col) * lr;
          bars.G(r, col) += lr * s.x[col];
        }
      }
    }

    // running cost
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double pij = P(i, j);
        if (pij == 0.0) continue;
        const double v = cost_weight * 0.5 * pij * std::sin(2.0 * (s.theta[j] - s.theta[i]));
        b_theta[j] += v;
        b_theta[i] -= v;
      }
    for (std::size_t m = 0; m < u.size(); ++m) u_bar[m] += cost_weight * beta * u[m];

    // u = G^T g
    {
      const Mat& G = c.G();
      for (std::size_t r = 0; r < G.rows(); ++r) {
        double acc = 0.0;
        for (std::size_t col = 0; col < G.cols(); ++col) {
          acc += G(r, col) * u_bar[col];
          bars.G(r, col) += g[r] * u_bar[col];
        }
        g_bar[r] += acc;
      }
    }

    // g = K^T act(K xi)
    for (std::size_t i = 0; i < c.nodes(); ++i) {
      const Mat& K = c.ham().K_blocks[i];
      Mat& Kb = bars.K[i];
      const std::size_t qo = c.q_offsets()[i], qd = c.q_dims()[i], ho = h_off[i];
      for (std::size_t r = 0; r < K.rows(); ++r) {
        const double a = act[ho + r];
        double t_bar = 0.0;
        for (std::size_t col = 0; col < qd; ++col) {
          t_bar += K(r, col) * g_bar[qo + col];
          Kb(r, col) += a * g_bar[qo + col];
        }
        const double z_bar = lc ? t_bar * (1.0 - a * a) : t_bar;
        for (std::size_t col = 0; col < qd; ++col) {
          Kb(r, col) += z_bar * s.xi[qo + col];
          b_xi[qo + col] += K(r, col) * z_bar;
        }
      }
    }

    axpy(1.0, b_theta, a_theta);
    axpy(1.0, b_x, a_x);
    axpy(1.0, b_xi, a_xi);
  }
}

}  // namespace detail

/// Mean rollout cost over `inits`. `alpha_override` pins the damping instead of
/// recomputing it from G (used to check the frozen-alpha gradient).
inline double loss(const TrainProblem& prob, const FlatParams& params, std::span<const ClosedLoopState> inits,
                   std::optional<double> alpha_override = std::nullopt) {
  require(!inits.empty(), ErrorKind::configuration, "loss: need at least one initial condition");
  const PhController c = assemble(params.to_params(), prob.comm, alpha_override);
  const std::size_t steps = prob.rollout.steps();
  const double scale = prob.rollout.normalize_by_horizon ? 1.0 / prob.rollout.horizon : 1.0;
  const double w = scale * prob.rollout.dt / static_cast<double>(inits.size());
  double total = 0.0;
  for (const auto& init : inits) total += detail::forward(prob, c, init, steps, w).cost;
  return total;
}

inline LossAndGrad loss_grad(const TrainProblem& prob, const FlatParams& params,
                             std::span<const ClosedLoopState> inits) {
  require(!inits.empty(), ErrorKind::configuration, "loss_grad: need at least one initial condition");
  const PhParams p = params.to_params();
  const PhController c = assemble(p, prob.comm);
  const std::size_t steps = prob.rollout.steps();
  const double scale = prob.rollout.normalize_by_horizon ? 1.0 / prob.rollout.horizon : 1.0;
  const double w = scale * prob.rollout.dt / static_cast<double>(inits.size());

  detail::ParamBars bars;
  for (std::size_t i = 0; i < c.nodes(); ++i) bars.J.emplace_back(c.q_dims()[i], c.q_dims()[i]);
  bars.lambda.assign(c.state_dim(), 0.0);
  bars.G = Mat(c.G().rows(), c.G().cols());
  for (const auto& k : c.ham().K_blocks) bars.K.emplace_back(k.rows(), k.cols());

  LossAndGrad out;
  for (const auto& init : inits) {
    const detail::Tape tp = detail::forward(prob, c, init, steps, w);
    out.loss += tp.cost;
    detail::reverse(prob, c, tp, w, bars);
  }

  // alpha = eps * lambda_max(G G^T); d lambda_max / dG = 2 v v^T G.
  if (prob.alpha_grad == AlphaGrad::exact && bars.alpha != 0.0 && c.lambda_bar() > 0.0) {
    const Vec& v = c.dominant_eigvec();
    const Vec vtg = matvec_t(c.G(), v);
    const double f = 2.0 * c.epsilon() * bars.alpha;
    for (std::size_t r = 0; r < bars.G.rows(); ++r)
      for (std::size_t col = 0; col < bars.G.cols(); ++col) bars.G(r, col) += f * v[r] * vtg[col];
  }

  const ParamLayout& layout = *params.layout;
  out.grad.assign(layout.size(), 0.0);
  for (std::size_t i = 0; i < c.nodes(); ++i) {
    const Mat& Jb = bars.J[i];
    const std::size_t off = layout.a_offset(i), q = Jb.rows();
    for (std::size_t r = 0; r < q; ++r)
      for (std::size_t col = 0; col < q; ++col) out.grad[off + r * q + col] = Jb(r, col) - Jb(col, r);
  }
  for (std::size_t k = 0; k < bars.lambda.size(); ++k)
    out.grad[layout.d_offset() + k] = bars.lambda[k] * c.lambda()[k];
  const auto roff = offsets_of(p.q_dims);
  const auto coff = offsets_of(p.p_dims);
  for (std::size_t b = 0; b < layout.g_keys().size(); ++b) {
    const auto [bi, bj] = layout.g_keys()[b];
    const std::size_t rows = p.q_dims[bi], cols = p.p_dims[bj], off = layout.g_offset(b);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t col = 0; col < cols; ++col)
        out.grad[off + r * cols + col] = bars.G(roff[bi] + r, coff[bj] + col);
  }
  for (std::size_t i = 0; i < bars.K.size(); ++i)
    std::copy(bars.K[i].values().begin(), bars.K[i].values().end(),
              out.grad.begin() + static_cast<std::ptrdiff_t>(layout.k_offset(i)));

  require(all_finite(out.grad), ErrorKind::numeric, "loss_grad: non-finite gradient");
  return out;
}

struct AdamState {
  Vec m;
  Vec v;
  std::size_t t = 0;
  double lr = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;

  static AdamState zeros(std::size_t n, double lr) {
    AdamState s;
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
    s.lr = lr;
    return s;
  }
};

/// One bias-corrected Adam update.
inline std::pair<AdamState, Vec> adam_step(AdamState state, std::span<const double> grad, Vec params) {
  require_dims(grad.size() == params.size() && state.m.size() == params.size() && state.v.size() == params.size(),
               "adam_step: length mismatch");
  state.t += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps_hat);
  }
  return {std::move(state), std::move(params)};
}

struct TrainConfig {
  std::size_t epochs = 500;
  std::size_t S = 4;
  RolloutConfig rollout;
  std::uint64_t seed = 1;
  AlphaGrad alpha_grad = AlphaGrad::exact;
  double lr = 5e-3;
  double clip_norm = 100.0;
  bool record_wall_time = false;

  void validate() const {
    require(S >= 1, ErrorKind::configuration, "train: S must be at least 1");
    require(lr > 0.0, ErrorKind::configuration, "train: lr must be positive");
    require(clip_norm > 0.0, ErrorKind::configuration, "train: clip norm must be positive");
    rollout.validate();
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double grad_norm = 0.0;  // before clipping
  double alpha = 0.0;
  bool clip_active = false;
  double wall_ms = 0.0;
};

struct TrainResult {
  PhParams params;
  std::vector<EpochRecord> log;
  double final_loss = 0.0;
  std::size_t clip_count = 0;
};

/// Full-batch Adam over the given initial conditions. After every update the
/// new controller is assembled and its matrix certificate checked; a failure
/// there is a bug, never a property of the parameters.
inline TrainResult train(const TrainConfig& cfg, const KuramotoPlant& plant, const BlockMask& comm,
                         const PhParams& init, std::span<const ClosedLoopState> inits,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  require(inits.size() == cfg.S, ErrorKind::configuration, "train: number of initial conditions must equal S");
  const TrainProblem prob{plant, comm, cfg.rollout, cfg.alpha_grad};
  FlatParams fp = FlatParams::from(init);
  AdamState adam = AdamState::zeros(fp.size(), cfg.lr);

  TrainResult res;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    const double alpha = assemble(fp.to_params(), comm).alpha();
    LossAndGrad lg = loss_grad(prob, fp, inits);
    EpochRecord rec;
    rec.epoch = e;
    rec.loss = lg.loss;
    rec.alpha = alpha;
    rec.grad_norm = norm(lg.grad);
    if (rec.grad_norm > cfg.clip_norm) {
      rec.clip_active = true;
      ++res.clip_count;
      const double f = cfg.clip_norm / rec.grad_norm;
      for (double& gval : lg.grad) gval *= f;
    }
    auto [next_state, next_values] = adam_step(std::move(adam), lg.grad, std::move(fp.values));
    adam = std::move(next_state);
    fp.values = std::move(next_values);

    const PhController c = assemble(fp.to_params(), comm);
    const double residual = matrix_certificate(c);
    require(residual <= kMatrixCertificateTol, ErrorKind::verification,
            "train: matrix certificate violated after epoch " + std::to_string(e) + " (residual " +
                std::to_string(residual) + ")");
    if (cfg.record_wall_time)
      rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    res.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  res.params = fp.to_params();
  res.final_loss = loss(prob, fp, inits);
  return res;
}

inline void write_training_log_csv(std::ostream& os, std::span<const EpochRecord> log) {
  os << "epoch,loss,grad_norm,alpha,clip_active,wall_ms\n" << std::setprecision(17);
  for (const auto& r : log)
    os << r.epoch << ',' << r.loss << ',' << r.grad_norm << ',' << r.alpha << ',' << (r.clip_active ? 1 : 0) << ','
       << r.wall_ms << '\n';
}

}  // namespace phnet
