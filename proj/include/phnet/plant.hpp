#pragma once

// Kuramoto oscillator network. First-order phase model (uncontrolled baseline)
// and the second-order rate form used in closed loop:
//   theta_dot_i = x_i
//   x_dot_i     = (K u_i / N) sum_j P_ij cos(theta_j - theta_i) (x_j - x_i)
//   y_i         = x_i

#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <utility>

#include "phnet/error.hpp"
#include "phnet/numerics.hpp"

namespace phnet {

/// Plant state. theta is the unmeasured configuration (may be empty for plants
/// without phases); x carries the measured output.
struct PlantState {
  Vec theta;
  Vec x;
};

/// Minimal contract for a plant in the closed loop: `size()` inputs and outputs,
/// a vector field and an output map.
template <class P>
concept Plant = requires(const P& p, const PlantState& s, std::span<const double> u) {
  { p.size() } -> std::convertible_to<std::size_t>;
  { p.derivative(s, u) } -> std::same_as<PlantState>;
  { p.output(s) } -> std::same_as<Vec>;
};

/// Plants whose phase-disagreement cost is defined by a coupling adjacency.
template <class P>
concept CoupledPlant = Plant<P> && requires(const P& p) {
  { p.coupling() } -> std::convertible_to<const Mat&>;
};

struct KuramotoParams {
  std::size_t n = 0;
  double coupling = 1.0;  // K
  Vec omega;              // natural frequencies, first-order model only
  Mat adjacency;          // P

  void validate() const {
    require(n > 0, ErrorKind::configuration, "kuramoto: n must be positive");
    require(coupling > 0.0, ErrorKind::configuration, "kuramoto: coupling K must be positive");
    require_dims(omega.size() == n, "kuramoto: omega length must equal n");
    require_dims(adjacency.rows() == n && adjacency.cols() == n, "kuramoto: adjacency must be n x n");
    for (std::size_t i = 0; i < n; ++i) {
      require(adjacency(i, i) == 0.0, ErrorKind::structure, "kuramoto: adjacency diagonal must be zero");
      for (std::size_t j = 0; j < n; ++j)
        require(adjacency(i, j) == adjacency(j, i), ErrorKind::structure, "kuramoto: adjacency must be symmetric");
    }
  }
};

/// theta_dot_i = omega_i + (K u_i / N) sum_j P_ij sin(theta_j - theta_i)
inline Vec rhs_first_order(const KuramotoParams& p, std::span<const double> theta, std::span<const double> u) {
  require_dims(theta.size() == p.n && u.size() == p.n, "rhs_first_order: length mismatch");
  const double scale = p.coupling / static_cast<double>(p.n);
  Vec out(p.n);
  for (std::size_t i = 0; i < p.n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < p.n; ++j)
      if (p.adjacency(i, j) != 0.0) s += p.adjacency(i, j) * std::sin(theta[j] - theta[i]);
    out[i] = p.omega[i] + scale * u[i] * s;
  }
  return out;
}

struct SecondOrderRates {
  Vec theta_dot;
  Vec x_dot;
};

inline SecondOrderRates rhs_second_order(const KuramotoParams& p, const PlantState& s, std::span<const double> u) {
  require_dims(s.theta.size() == p.n && s.x.size() == p.n && u.size() == p.n, "rhs_second_order: length mismatch");
  const double scale = p.coupling / static_cast<double>(p.n);
  SecondOrderRates r{s.x, Vec(p.n, 0.0)};
  for (std::size_t i = 0; i < p.n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < p.n; ++j) {
      const double pij = p.adjacency(i, j);
      if (pij == 0.0) continue;
      acc += pij * std::cos(s.theta[j] - s.theta[i]) * (s.x[j] - s.x[i]);
    }
    r.x_dot[i] = scale * u[i] * acc;
  }
  return r;
}

inline Vec plant_output(const PlantState& s) { return s.x; }

/// V(x) = x'x / 2
inline double storage_value(const PlantState& s) { return 0.5 * squared_norm(s.x); }

/// Second-order Kuramoto network packaged for the closed loop.
class KuramotoPlant {
 public:
  KuramotoPlant() = default;
  explicit KuramotoPlant(KuramotoParams params) : params_(std::move(params)) { params_.validate(); }

  std::size_t size() const noexcept { return params_.n; }
  const KuramotoParams& params() const noexcept { return params_; }
  const Mat& coupling() const noexcept { return params_.adjacency; }

  PlantState derivative(const PlantState& s, std::span<const double> u) const {
    auto r = rhs_second_order(params_, s, u);
    return {std::move(r.theta_dot), std::move(r.x_dot)};
  }
  Vec output(const PlantState& s) const { return plant_output(s); }

 private:
  KuramotoParams params_;
};

static_assert(CoupledPlant<KuramotoPlant>);

}  // namespace phnet
