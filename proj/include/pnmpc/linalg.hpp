#pragma once

// Dense kernels shared by the square-root filter and smoother. Templated on
// the scalar so the same code runs on double and on Dual.

#include <cmath>
#include <stdexcept>

#include <Eigen/Core>

#include "pnmpc/dual.hpp"

namespace pnmpc {

template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

using VecD = Vec<double>;
using MatD = Mat<double>;

/// Relative size below which a Householder subcolumn is treated as exactly
/// zero. Rank-deficient pre-arrays leave rounding residue of order
/// eps * |column| there; reflecting on that residue is meaningless for the
/// value and explodes the tangent.
inline constexpr double kRankTolerance = 1e-13;

/// Upper-triangular R (cols x cols) with R^T R = M^T M, computed by
/// Householder reflections. Rows beyond min(rows, cols) are zero.
template <class S>
Mat<S> triangularize(Mat<S> m) {
  using std::sqrt;
  const Eigen::Index rows = m.rows();
  const Eigen::Index cols = m.cols();
  const Eigen::Index steps = std::min(rows, cols);
  for (Eigen::Index k = 0; k < steps; ++k) {
    double col_scale = 0.0;
    for (Eigen::Index i = 0; i < rows; ++i) col_scale = std::max(col_scale, std::abs(value_of(m(i, k))));
    S sq(0.0);
    for (Eigen::Index i = k; i < rows; ++i) sq += m(i, k) * m(i, k);
    const double tail = std::sqrt(value_of(sq));
    if (tail <= kRankTolerance * col_scale * std::sqrt(static_cast<double>(rows)) || tail == 0.0) {
      for (Eigen::Index i = k; i < rows; ++i) m(i, k) = S(0.0);
      continue;
    }
    const S alpha = sqrt(sq);
    const S signed_alpha = value_of(m(k, k)) < 0.0 ? -alpha : alpha;
    // v = x + sign(x0) |x| e0, with beta = 2 / v^T v = 1 / (|x| (|x| + |x0|)).
    Vec<S> v = m.col(k).segment(k, rows - k);
    v(0) += signed_alpha;
    const S beta = S(1.0) / (signed_alpha * v(0));
    for (Eigen::Index j = k + 1; j < cols; ++j) {
      S dot(0.0);
      for (Eigen::Index i = 0; i < rows - k; ++i) dot += v(i) * m(k + i, j);
      const S scale = beta * dot;
      for (Eigen::Index i = 0; i < rows - k; ++i) m(k + i, j) -= scale * v(i);
    }
    m(k, k) = -signed_alpha;
    for (Eigen::Index i = k + 1; i < rows; ++i) m(i, k) = S(0.0);
  }
  Mat<S> r = Mat<S>::Zero(cols, cols);
  const Eigen::Index keep = std::min(rows, cols);
  r.topRows(keep) = m.topRows(keep).template triangularView<Eigen::Upper>();
  return r;
}

/// Solves R X = B for upper-triangular R.
template <class S>
Mat<S> solve_upper(const Mat<S>& r, const Mat<S>& b) {
  const Eigen::Index n = r.rows();
  Mat<S> x = b;
  for (Eigen::Index c = 0; c < b.cols(); ++c) {
    for (Eigen::Index i = n - 1; i >= 0; --i) {
      S acc = x(i, c);
      for (Eigen::Index j = i + 1; j < n; ++j) acc -= r(i, j) * x(j, c);
      if (value_of(r(i, i)) == 0.0) throw std::domain_error("solve_upper: zero pivot");
      x(i, c) = acc / r(i, i);
    }
  }
  return x;
}

/// Solves R^T X = B for upper-triangular R.
template <class S>
Mat<S> solve_upper_transposed(const Mat<S>& r, const Mat<S>& b) {
  const Eigen::Index n = r.rows();
  Mat<S> x = b;
  for (Eigen::Index c = 0; c < b.cols(); ++c) {
    for (Eigen::Index i = 0; i < n; ++i) {
      S acc = x(i, c);
      for (Eigen::Index j = 0; j < i; ++j) acc -= r(j, i) * x(j, c);
      if (value_of(r(i, i)) == 0.0) throw std::domain_error("solve_upper_transposed: zero pivot");
      x(i, c) = acc / r(i, i);
    }
  }
  return x;
}

template <class S>
Mat<S> gram(const Mat<S>& factor) {
  return factor.transpose() * factor;
}

template <class S>
MatD values(const Mat<S>& m) {
  return m.unaryExpr([](const S& x) { return value_of(x); });
}
template <class S>
VecD values(const Vec<S>& v) {
  return v.unaryExpr([](const S& x) { return value_of(x); });
}

}  // namespace pnmpc
