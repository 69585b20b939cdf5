#pragma once

// Truncated Taylor polynomial arithmetic.
//
// Taylor<S> holds normalized coefficients c_k = x^(k)(t0) / k! of a scalar
// function around t0. Mixed expressions truncate to the longest operand, and
// a lifted constant is a length-one series. Used to compute the exact initial
// derivatives of an IVP solution (Taylor-mode differentiation of the vector
// field), with S = double or S = Dual.

#include <algorithm>
#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "pnmpc/dual.hpp"

namespace pnmpc {

template <class S>
class Taylor {
 public:
  Taylor() = default;
  Taylor(double c) : c_{S(c)} {}  // NOLINT: implicit lift of constants
  Taylor(const S& c) requires(!std::is_same_v<S, double>) : c_{c} {}  // NOLINT
  explicit Taylor(std::vector<S> coeffs) : c_(std::move(coeffs)) {}

  /// Coefficient k; zero beyond the stored length.
  S operator[](std::size_t k) const { return k < c_.size() ? c_[k] : S(0.0); }
  std::size_t size() const { return c_.size(); }
  const std::vector<S>& coeffs() const { return c_; }

  Taylor& operator+=(const Taylor& o) {
    grow(o.size());
    for (std::size_t k = 0; k < o.size(); ++k) c_[k] += o.c_[k];
    return *this;
  }
  Taylor& operator-=(const Taylor& o) {
    grow(o.size());
    for (std::size_t k = 0; k < o.size(); ++k) c_[k] -= o.c_[k];
    return *this;
  }
  Taylor& operator*=(const Taylor& o) { return *this = *this * o; }
  Taylor& operator/=(const Taylor& o) { return *this = *this / o; }

  friend Taylor operator+(Taylor a, const Taylor& b) { return a += b; }
  friend Taylor operator-(Taylor a, const Taylor& b) { return a -= b; }
  friend Taylor operator-(const Taylor& a) {
    Taylor r = a;
    for (auto& x : r.c_) x = -x;
    return r;
  }
  friend Taylor operator+(const Taylor& a) { return a; }

  friend Taylor operator*(const Taylor& a, const Taylor& b) {
    const std::size_t n = std::max(a.size(), b.size());
    std::vector<S> r(n, S(0.0));
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < b.size() && i + j < n; ++j) r[i + j] += a.c_[i] * b.c_[j];
    return Taylor(std::move(r));
  }

  friend Taylor operator/(const Taylor& a, const Taylor& b) {
    const std::size_t n = std::max(a.size(), b.size());
    std::vector<S> r(n, S(0.0));
    const S b0 = b[0];
    for (std::size_t k = 0; k < n; ++k) {
      S acc = a[k];
      for (std::size_t j = 1; j <= k; ++j) acc -= b[j] * r[k - j];
      r[k] = acc / b0;
    }
    return Taylor(std::move(r));
  }

  // Ordering compares the constant term only.
  friend bool operator<(const Taylor& a, const Taylor& b) { return a[0] < b[0]; }
  friend bool operator>(const Taylor& a, const Taylor& b) { return a[0] > b[0]; }
  friend bool operator==(const Taylor& a, const Taylor& b) { return a.c_ == b.c_; }

 private:
  void grow(std::size_t n) {
    if (c_.size() < n) c_.resize(n, S(0.0));
  }

  std::vector<S> c_;
};

}  // namespace pnmpc

namespace Eigen {

template <class S>
struct NumTraits<pnmpc::Taylor<S>> : NumTraits<double> {
  using Real = pnmpc::Taylor<S>;
  using NonInteger = pnmpc::Taylor<S>;
  using Nested = pnmpc::Taylor<S>;
  using Literal = pnmpc::Taylor<S>;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 8,
    AddCost = 8,
    MulCost = 32
  };
};

}  // namespace Eigen
