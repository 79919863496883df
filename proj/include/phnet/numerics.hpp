#pragma once

// Dense kernels shared by every module. Reductions run left to right in index
// order so results are reproducible across runs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "phnet/error.hpp"

namespace phnet {

using Vec = std::vector<double>;

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  require_dims(a.size() == b.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_norm(std::span<const double> a) { return dot(a, a); }
inline double norm(std::span<const double> a) { return std::sqrt(squared_norm(a)); }

// y += a * x
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  require_dims(x.size() == y.size(), "axpy: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

/// Row-major dense matrix with value semantics.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Mat(std::size_t rows, std::size_t cols, Vec data) : rows_(rows), cols_(cols), data_(std::move(data)) {
    require_dims(data_.size() == rows_ * cols_, "Mat: entry count does not match rows*cols");
  }
  Mat(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      require_dims(r.size() == cols_, "Mat: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Mat diagonal(std::span<const double> d) {
    Mat m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const Vec& storage() const noexcept { return data_; }

  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  Mat transpose() const {
    Mat t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  friend bool operator==(const Mat&, const Mat&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vec data_;
};

inline Mat operator+(const Mat& a, const Mat& b) {
  require_dims(a.rows() == b.rows() && a.cols() == b.cols(), "matrix add: shape mismatch");
  Mat c = a;
  for (std::size_t k = 0; k < c.size(); ++k) c.values()[k] += b.values()[k];
  return c;
}

inline Mat operator-(const Mat& a, const Mat& b) {
  require_dims(a.rows() == b.rows() && a.cols() == b.cols(), "matrix sub: shape mismatch");
  Mat c = a;
  for (std::size_t k = 0; k < c.size(); ++k) c.values()[k] -= b.values()[k];
  return c;
}

inline Mat operator*(double s, const Mat& a) {
  Mat c = a;
  for (double& v : c.values()) v *= s;
  return c;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  require_dims(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  Mat c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

// A * A^T
inline Mat gram_rows(const Mat& a) {
  Mat c(a.rows(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      const double v = dot(a.row(i), a.row(j));
      c(i, j) = v;
      c(j, i) = v;
    }
  return c;
}

// A^T * A
inline Mat gram_cols(const Mat& a) { return gram_rows(a.transpose()); }

/// y = A x
inline Vec matvec(const Mat& a, std::span<const double> x) {
  require_dims(a.cols() == x.size(), "matvec: dimension mismatch");
  Vec y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
  return y;
}

/// y = A^T x
inline Vec matvec_t(const Mat& a, std::span<const double> x) {
  require_dims(a.rows() == x.size(), "matvec_t: dimension mismatch");
  Vec y(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    for (std::size_t j = 0; j < a.cols(); ++j) y[j] += a(i, j) * xi;
  }
  return y;
}

/// J = A - A^T; the result is skew-symmetric entry for entry.
inline Mat skew_from_free(const Mat& a) {
  require_dims(a.square(), "skew_from_free: matrix must be square");
  Mat j(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) j(r, c) = a(r, c) - a(c, r);
  return j;
}

inline constexpr double kMaxLogDamping = 300.0;

/// Entries e^{d_i} of a positive diagonal. Returned as the diagonal only; use
/// Mat::diagonal for the dense form.
inline Vec exp_diag_entries(std::span<const double> d) {
  Vec out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    require(std::isfinite(d[i]) && std::abs(d[i]) <= kMaxLogDamping, ErrorKind::numeric,
            "exp_diag: |d_" + std::to_string(i) + "| exceeds " + std::to_string(kMaxLogDamping));
    out[i] = std::exp(d[i]);
  }
  return out;
}

inline Mat exp_diag(std::span<const double> d) { return Mat::diagonal(exp_diag_entries(d)); }

struct EigenPair {
  double value = 0.0;
  Vec vector;
  std::size_t iterations = 0;
};

inline bool is_symmetric(const Mat& m, double rel_tol = 1e-12) {
  if (!m.square()) return false;
  const double scale = std::max(1.0, m.max_abs());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(m(i, j) - m(j, i)) > rel_tol * scale) return false;
  return true;
}

namespace detail {

// Fixed, well-spread start vector. Avoids the all-ones vector, which is
// orthogonal to the dominant eigenvector of many structured matrices.
inline Vec power_start(std::size_t n) {
  Vec v(n);
  std::uint64_t s = 0x9E3779B97F4A7C15ULL;
  for (std::size_t i = 0; i < n; ++i) {
    s ^= s >> 12;
    s ^= s << 25;
    s ^= s >> 27;
    const double u = static_cast<double>((s * 0x2545F4914F6CDD1DULL) >> 11) * 0x1.0p-53;
    v[i] = 0.5 + u;
  }
  const double nv = norm(v);
  for (double& x : v) x /= nv;
  return v;
}

}  // namespace detail

/// Largest eigenvalue and a unit eigenvector of a symmetric positive
/// semidefinite matrix by power iteration on B = M + sigma*I, sigma = trace(M)/n.
/// The operator is squared after every step (B, B^2, B^4, ...), so step k has
/// applied B^(2^k - 1) in total; a tight cluster at the top of the spectrum then
/// costs a logarithmic rather than linear number of steps. Converged when
/// successive Rayleigh quotients differ by less than tol*|lambda|. With a
/// repeated dominant eigenvalue any unit vector of that eigenspace may be
/// returned.
inline EigenPair lambda_max_sym(const Mat& m, double tol = 1e-13, std::size_t max_iter = 10'000) {
  require_dims(m.square() && m.rows() > 0, "lambda_max_sym: matrix must be square and non-empty");
  require(is_symmetric(m), ErrorKind::structure, "lambda_max_sym: matrix is not symmetric");
  const std::size_t n = m.rows();

  double trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) trace += m(i, i);
  const double sigma = trace / static_cast<double>(n);

  EigenPair out;
  out.vector = detail::power_start(n);
  if (m.max_abs() == 0.0) return out;

  Mat b = m;
  for (std::size_t i = 0; i < n; ++i) b(i, i) += sigma;
  auto rayleigh = [&m](const Vec& v) { return dot(v, matvec(m, v)); };

  double rq_prev = rayleigh(out.vector);
  for (std::size_t it = 1; it <= max_iter; ++it) {
    Vec w = matvec(b, out.vector);
    const double nw = norm(w);
    require(nw > 0.0 && std::isfinite(nw), ErrorKind::numeric, "lambda_max_sym: iterate collapsed");
    for (double& x : w) x /= nw;
    out.vector = std::move(w);
    const double rq = rayleigh(out.vector);
    out.iterations = it;
    if (std::abs(rq - rq_prev) < tol * std::abs(rq)) {
      out.value = rq;
      return out;
    }
    rq_prev = rq;
    b = matmul(b, b);
    const double scale = b.max_abs();
    require(scale > 0.0 && std::isfinite(scale), ErrorKind::numeric, "lambda_max_sym: operator collapsed");
    for (double& x : b.values()) x /= scale;
  }
  throw Error(ErrorKind::convergence,
              "lambda_max_sym: no convergence after " + std::to_string(max_iter) + " iterations");
}

/// Numerical column rank by Gaussian elimination with full pivoting. A pivot
/// counts when it exceeds tol times the largest absolute entry.
inline std::size_t column_rank(const Mat& a, double tol = 1e-10) {
  Mat w = a;
  const double scale = w.max_abs();
  if (scale == 0.0) return 0;
  const std::size_t r = w.rows(), c = w.cols();
  std::vector<bool> row_used(r, false), col_used(c, false);
  std::size_t rank = 0;
  for (std::size_t step = 0; step < std::min(r, c); ++step) {
    double best = 0.0;
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < r; ++i) {
      if (row_used[i]) continue;
      for (std::size_t j = 0; j < c; ++j) {
        if (col_used[j]) continue;
        if (std::abs(w(i, j)) > best) {
          best = std::abs(w(i, j));
          bi = i;
          bj = j;
        }
      }
    }
    if (best <= tol * scale) break;
    row_used[bi] = true;
    col_used[bj] = true;
    ++rank;
    for (std::size_t i = 0; i < r; ++i) {
      if (row_used[i]) continue;
      const double f = w(i, bj) / w(bi, bj);
      for (std::size_t j = 0; j < c; ++j) w(i, j) -= f * w(bi, j);
    }
  }
  return rank;
}

using BlockIndex = std::pair<std::size_t, std::size_t>;

/// Binary block pattern: block (i, j) has row_dims[i] x col_dims[j] entries and
/// may be nonzero only where the mask is 1.
struct BlockMask {
  std::vector<std::size_t> row_dims;
  std::vector<std::size_t> col_dims;
  std::vector<std::uint8_t> mask;  // row-major, block_rows x block_cols

  BlockMask() = default;
  BlockMask(std::vector<std::size_t> rdims, std::vector<std::size_t> cdims, std::vector<std::uint8_t> m)
      : row_dims(std::move(rdims)), col_dims(std::move(cdims)), mask(std::move(m)) {
    require_dims(mask.size() == row_dims.size() * col_dims.size(), "BlockMask: mask size mismatch");
    for (auto d : row_dims) require_dims(d > 0, "BlockMask: block dimensions must be positive");
    for (auto d : col_dims) require_dims(d > 0, "BlockMask: block dimensions must be positive");
    for (auto v : mask) require(v <= 1, ErrorKind::structure, "BlockMask: entries must be 0 or 1");
  }

  /// Square pattern with scalar blocks, e.g. straight from an adjacency matrix.
  static BlockMask scalar(std::size_t n, std::vector<std::uint8_t> m) {
    return BlockMask(std::vector<std::size_t>(n, 1), std::vector<std::size_t>(n, 1), std::move(m));
  }

  std::size_t block_rows() const noexcept { return row_dims.size(); }
  std::size_t block_cols() const noexcept { return col_dims.size(); }
  bool allowed(std::size_t i, std::size_t j) const { return mask[i * block_cols() + j] != 0; }

  BlockMask with_dims(std::vector<std::size_t> rdims, std::vector<std::size_t> cdims) const {
    require_dims(rdims.size() == block_rows() && cdims.size() == block_cols(),
                 "BlockMask::with_dims: block count mismatch");
    return BlockMask(std::move(rdims), std::move(cdims), mask);
  }

  std::vector<BlockIndex> allowed_blocks() const {
    std::vector<BlockIndex> out;
    for (std::size_t i = 0; i < block_rows(); ++i)
      for (std::size_t j = 0; j < block_cols(); ++j)
        if (allowed(i, j)) out.emplace_back(i, j);
    return out;
  }

  friend bool operator==(const BlockMask&, const BlockMask&) = default;
};

inline std::vector<std::size_t> offsets_of(std::span<const std::size_t> dims) {
  std::vector<std::size_t> off(dims.size() + 1, 0);
  for (std::size_t i = 0; i < dims.size(); ++i) off[i + 1] = off[i] + dims[i];
  return off;
}

/// Dense matrix whose block (i, j) is blocks[(i, j)] where the mask allows it
/// and exactly zero elsewhere. Missing allowed blocks are zero.
inline Mat masked_assemble(const BlockMask& mask, const std::map<BlockIndex, Mat>& blocks) {
  const auto roff = offsets_of(mask.row_dims);
  const auto coff = offsets_of(mask.col_dims);
  Mat out(roff.back(), coff.back());
  for (const auto& [idx, blk] : blocks) {
    const auto [bi, bj] = idx;
    require_dims(bi < mask.block_rows() && bj < mask.block_cols(), "masked_assemble: block index out of range");
    require(mask.allowed(bi, bj), ErrorKind::structure,
            "masked_assemble: block (" + std::to_string(bi) + "," + std::to_string(bj) +
                ") supplied at a masked-out position");
    require_dims(blk.rows() == mask.row_dims[bi] && blk.cols() == mask.col_dims[bj],
                 "masked_assemble: block shape disagrees with mask dimensions");
    for (std::size_t r = 0; r < blk.rows(); ++r)
      for (std::size_t c = 0; c < blk.cols(); ++c) out(roff[bi] + r, coff[bj] + c) = blk(r, c);
  }
  return out;
}

inline Mat block_diag(std::span<const Mat> blocks) {
  std::size_t r = 0, c = 0;
  for (const auto& b : blocks) {
    r += b.rows();
    c += b.cols();
  }
  Mat out(r, c);
  std::size_t ro = 0, co = 0;
  for (const auto& b : blocks) {
    for (std::size_t i = 0; i < b.rows(); ++i)
      for (std::size_t j = 0; j < b.cols(); ++j) out(ro + i, co + j) = b(i, j);
    ro += b.rows();
    co += b.cols();
  }
  return out;
}

}  // namespace phnet
