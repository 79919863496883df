#pragma once

// Distributed port-Hamiltonian controller
//
//   xi_dot = [J_c - (alpha I + Lambda)] dH/dxi + G_c y
//   u      = G_c^T dH/dxi
//
// with J_c = blkdiag(A_i - A_i^T), Lambda = diag(exp(d)), G_c block-sparse
// according to the communication mask and alpha = eps * lambda_max(G_c G_c^T).
// Every finite parameter vector yields an eps-output strictly passive
// controller, hence one with L2 gain at most 1/eps.

#include <cmath>
#include <cstddef>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "phnet/error.hpp"
#include "phnet/numerics.hpp"
#include "phnet/rng.hpp"

namespace phnet {

enum class HamiltonianKind { log_cosh, quadratic };

inline std::string to_string(HamiltonianKind k) { return k == HamiltonianKind::log_cosh ? "logcosh" : "quadratic"; }

inline HamiltonianKind parse_hamiltonian_kind(const std::string& s) {
  if (s == "logcosh" || s == "log_cosh") return HamiltonianKind::log_cosh;
  if (s == "quadratic") return HamiltonianKind::quadratic;
  throw Error(ErrorKind::configuration, "unknown hamiltonian kind '" + s + "'");
}

/// H(xi) = sum_i sum_k log cosh((K_i xi_i)_k)   or   H(xi) = 1/2 sum_i |K_i xi_i|^2.
/// Each K_i is h_i x q_i with full column rank.
struct HamiltonianSpec {
  HamiltonianKind kind = HamiltonianKind::log_cosh;
  std::vector<Mat> K_blocks;
};

/// Free (unconstrained) controller parameters.
struct PhParams {
  std::vector<std::size_t> q_dims;  // controller state per node
  std::vector<std::size_t> p_dims;  // plant output per node
  std::vector<Mat> A_blocks;        // q_i x q_i, J_i = A_i - A_i^T
  Vec d;                            // log-damping, length sum q_i
  std::map<BlockIndex, Mat> G_blocks;
  HamiltonianSpec ham;
  double epsilon = 0.85;

  std::size_t nodes() const noexcept { return q_dims.size(); }
  std::size_t state_dim() const {
    std::size_t s = 0;
    for (auto q : q_dims) s += q;
    return s;
  }
  std::size_t output_dim() const {
    std::size_t s = 0;
    for (auto p : p_dims) s += p;
    return s;
  }
};

/// Controller mask over (node, node) blocks carrying the q_i x p_j block shapes.
inline BlockMask controller_mask(const BlockMask& comm, std::span<const std::size_t> q_dims,
                                 std::span<const std::size_t> p_dims) {
  return comm.with_dims({q_dims.begin(), q_dims.end()}, {p_dims.begin(), p_dims.end()});
}

namespace detail {

inline double log_cosh(double z) {
  const double a = std::abs(z);
  return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

}  // namespace detail

/// Certified controller derived from PhParams. Immutable once assembled.
class PhController {
 public:
  const std::vector<std::size_t>& q_dims() const noexcept { return q_dims_; }
  const std::vector<std::size_t>& p_dims() const noexcept { return p_dims_; }
  const std::vector<std::size_t>& q_offsets() const noexcept { return q_off_; }
  std::size_t nodes() const noexcept { return q_dims_.size(); }
  std::size_t state_dim() const noexcept { return q_off_.back(); }
  std::size_t output_dim() const noexcept { return G_.cols(); }

  const std::vector<Mat>& J_blocks() const noexcept { return J_blocks_; }
  const Vec& lambda() const noexcept { return lambda_; }
  const Mat& G() const noexcept { return G_; }
  double alpha() const noexcept { return alpha_; }
  /// lambda_max(G_c G_c^T) as computed at assembly (independent of any alpha override).
  double lambda_bar() const noexcept { return lambda_bar_; }
  const Vec& dominant_eigvec() const noexcept { return dominant_eigvec_; }
  const HamiltonianSpec& ham() const noexcept { return ham_; }
  double epsilon() const noexcept { return epsilon_; }
  const BlockMask& mask() const noexcept { return mask_; }

  Mat J_c() const { return block_diag(J_blocks_); }
  Mat Lambda() const { return Mat::diagonal(lambda_); }

  friend PhController assemble(const PhParams&, const BlockMask&, std::optional<double>);

 private:
  std::vector<std::size_t> q_dims_, p_dims_, q_off_;
  std::vector<Mat> J_blocks_;
  Vec lambda_;
  Mat G_;
  double alpha_ = 0.0;
  double lambda_bar_ = 0.0;
  Vec dominant_eigvec_;
  HamiltonianSpec ham_;
  double epsilon_ = 0.0;
  BlockMask mask_;
};

/// lambda_max(G G^T) and its unit eigenvector, computed on whichever Gram
/// matrix (G G^T or G^T G) is smaller.
inline EigenPair dominant_gram_eigen(const Mat& g) {
  if (g.rows() == 0 || g.cols() == 0 || g.max_abs() == 0.0) {
    EigenPair e;
    e.vector.assign(g.rows(), 0.0);
    if (!e.vector.empty()) e.vector[0] = 1.0;
    return e;
  }
  if (g.rows() <= g.cols()) return lambda_max_sym(gram_rows(g));
  EigenPair small = lambda_max_sym(gram_cols(g));
  Vec v = matvec(g, small.vector);
  const double nv = norm(v);
  for (double& x : v) x /= nv;
  small.vector = std::move(v);
  return small;
}

/// Builds the certified controller. `mask` is the node-level communication
/// pattern (diagonal set); its block shapes are taken from q_dims and p_dims.
/// `alpha_override` replaces the certified damping (used when loading stored
/// controllers whose alpha is to be audited).
inline PhController assemble(const PhParams& params, const BlockMask& mask,
                             std::optional<double> alpha_override = std::nullopt) {
  const std::size_t n = params.nodes();
  require(params.epsilon > 0.0 && std::isfinite(params.epsilon), ErrorKind::parametrization,
          "assemble: epsilon must be positive");
  require_dims(params.p_dims.size() == n, "assemble: p_dims must have one entry per node");
  require_dims(params.A_blocks.size() == n, "assemble: one A block per node required");
  require_dims(params.ham.K_blocks.size() == n, "assemble: one K block per node required");
  require_dims(mask.block_rows() == n && mask.block_cols() == n, "assemble: mask must be N x N blocks");
  for (std::size_t i = 0; i < n; ++i)
    require(mask.allowed(i, i), ErrorKind::structure, "assemble: mask diagonal blocks must be enabled");

  PhController c;
  c.q_dims_ = params.q_dims;
  c.p_dims_ = params.p_dims;
  c.q_off_ = offsets_of(params.q_dims);
  c.epsilon_ = params.epsilon;
  c.mask_ = controller_mask(mask, params.q_dims, params.p_dims);
  require_dims(params.d.size() == c.q_off_.back(), "assemble: d must have length sum(q_i)");

  c.J_blocks_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Mat& a = params.A_blocks[i];
    require_dims(a.rows() == params.q_dims[i] && a.cols() == params.q_dims[i], "assemble: A_i must be q_i x q_i");
    require(all_finite(a.values()), ErrorKind::numeric, "assemble: non-finite entry in A_" + std::to_string(i));
    c.J_blocks_.push_back(skew_from_free(a));
  }

  c.lambda_ = exp_diag_entries(params.d);
  for (const auto& [idx, blk] : params.G_blocks)
    require(all_finite(blk.values()), ErrorKind::numeric, "assemble: non-finite entry in G block");
  c.G_ = masked_assemble(c.mask_, params.G_blocks);

  for (std::size_t i = 0; i < n; ++i) {
    const Mat& k = params.ham.K_blocks[i];
    require_dims(k.cols() == params.q_dims[i], "assemble: K_i must have q_i columns");
    require(k.rows() >= k.cols(), ErrorKind::parametrization, "assemble: K_i needs at least as many rows as columns");
    require(all_finite(k.values()), ErrorKind::numeric, "assemble: non-finite entry in K_" + std::to_string(i));
    require(column_rank(k, 1e-10) == k.cols(), ErrorKind::parametrization,
            "assemble: K_" + std::to_string(i) + " is rank deficient");
  }
  c.ham_ = params.ham;

  EigenPair e = dominant_gram_eigen(c.G_);
  c.lambda_bar_ = e.value;
  c.dominant_eigvec_ = std::move(e.vector);
  c.alpha_ = alpha_override.value_or(params.epsilon * e.value);
  return c;
}

inline double hamiltonian(const PhController& c, std::span<const double> xi) {
  require_dims(xi.size() == c.state_dim(), "hamiltonian: xi has wrong length");
  double h = 0.0;
  for (std::size_t i = 0; i < c.nodes(); ++i) {
    const Vec z = matvec(c.ham().K_blocks[i], xi.subspan(c.q_offsets()[i], c.q_dims()[i]));
    for (double zk : z) h += c.ham().kind == HamiltonianKind::log_cosh ? detail::log_cosh(zk) : 0.5 * zk * zk;
  }
  return h;
}

/// dH/dxi: per node K_i^T tanh(K_i xi_i) (log-cosh) or K_i^T K_i xi_i (quadratic).
inline Vec grad_hamiltonian(const PhController& c, std::span<const double> xi) {
  require_dims(xi.size() == c.state_dim(), "grad_hamiltonian: xi has wrong length");
  Vec g(c.state_dim(), 0.0);
  for (std::size_t i = 0; i < c.nodes(); ++i) {
    const Mat& k = c.ham().K_blocks[i];
    const std::size_t off = c.q_offsets()[i];
    Vec z = matvec(k, xi.subspan(off, c.q_dims()[i]));
    if (c.ham().kind == HamiltonianKind::log_cosh)
      for (double& zk : z) zk = std::tanh(zk);
    const Vec gi = matvec_t(k, z);
    std::copy(gi.begin(), gi.end(), g.begin() + static_cast<std::ptrdiff_t>(off));
  }
  return g;
}

/// [J_c - (alpha I + Lambda)] g, with g = dH/dxi given.
inline Vec damped_interconnection(const PhController& c, std::span<const double> g) {
  Vec out(c.state_dim(), 0.0);
  for (std::size_t i = 0; i < c.nodes(); ++i) {
    const std::size_t off = c.q_offsets()[i];
    const Vec ji = matvec(c.J_blocks()[i], g.subspan(off, c.q_dims()[i]));
    std::copy(ji.begin(), ji.end(), out.begin() + static_cast<std::ptrdiff_t>(off));
  }
  for (std::size_t k = 0; k < out.size(); ++k) out[k] -= (c.alpha() + c.lambda()[k]) * g[k];
  return out;
}

inline Vec controller_rhs(const PhController& c, std::span<const double> xi, std::span<const double> y) {
  require_dims(y.size() == c.output_dim(), "controller_rhs: y has wrong length");
  const Vec g = grad_hamiltonian(c, xi);
  Vec out = damped_interconnection(c, g);
  const Vec gy = matvec(c.G(), y);
  axpy(1.0, gy, out);
  return out;
}

inline Vec controller_output(const PhController& c, std::span<const double> xi) {
  return matvec_t(c.G(), grad_hamiltonian(c, xi));
}

/// Random initial parameters: A_i, K_i and G blocks ~ N(0, 1/sqrt(fan-in)),
/// d = 0 (Lambda = I). The fan-in of a G row is the number of plant outputs it
/// may read. K_i is redrawn in the (measure-zero) event of rank deficiency.
inline PhParams initialize_params(const BlockMask& comm, std::span<const std::size_t> q_dims,
                                  std::span<const std::size_t> h_dims, std::span<const std::size_t> p_dims,
                                  HamiltonianKind kind, double epsilon, SeededRng& rng) {
  const std::size_t n = q_dims.size();
  require_dims(h_dims.size() == n && p_dims.size() == n && comm.block_rows() == n && comm.block_cols() == n,
               "initialize_params: per-node dimension lists must match the mask");
  PhParams p;
  p.q_dims.assign(q_dims.begin(), q_dims.end());
  p.p_dims.assign(p_dims.begin(), p_dims.end());
  p.epsilon = epsilon;
  p.ham.kind = kind;

  auto draw = [&rng](std::size_t r, std::size_t c, std::size_t fan_in) {
    Mat m(r, c);
    const double sd = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : m.values()) v = rng.normal(0.0, sd);
    return m;
  };

  for (std::size_t i = 0; i < n; ++i) p.A_blocks.push_back(draw(q_dims[i], q_dims[i], q_dims[i]));
  p.d.assign(p.state_dim(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t fan_in = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (comm.allowed(i, j)) fan_in += p_dims[j];
    for (std::size_t j = 0; j < n; ++j)
      if (comm.allowed(i, j)) p.G_blocks.emplace(BlockIndex{i, j}, draw(q_dims[i], p_dims[j], fan_in));
  }
  for (std::size_t i = 0; i < n; ++i) {
    require(h_dims[i] >= q_dims[i], ErrorKind::configuration, "initialize_params: need h_i >= q_i");
    Mat k = draw(h_dims[i], q_dims[i], q_dims[i]);
    while (column_rank(k, 1e-10) < q_dims[i]) k = draw(h_dims[i], q_dims[i], q_dims[i]);
    p.ham.K_blocks.push_back(std::move(k));
  }
  return p;
}

}  // namespace phnet
