#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "pnmpc/prior.hpp"

using namespace pnmpc;

namespace {

double max_abs(const MatD& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

TEST_CASE("iwp model validates order and dimension") {
  CHECK_THROWS_AS(IWPModel(0, 1), std::invalid_argument);
  CHECK_THROWS_AS(IWPModel(1, 0), std::invalid_argument);
  CHECK(IWPModel(3, 2).state_size() == 8);
}

TEST_CASE("transition at zero step is identity and zero noise") {
  const TransitionPair tp = transition_matrices(IWPModel(1, 1), 0.0);
  CHECK(max_abs(tp.a - MatD::Identity(2, 2)) == 0.0);
  CHECK(max_abs(tp.qn) == 0.0);
  CHECK(max_abs(tp.qn_sqrt) == 0.0);
}

TEST_CASE("transition for p=1 at unit step") {
  const TransitionPair tp = transition_matrices(IWPModel(1, 1), 1.0);
  MatD a(2, 2), q(2, 2);
  a << 1, 1, 0, 1;
  q << 1.0 / 3, 0.5, 0.5, 1;
  CHECK(max_abs(tp.a - a) < 1e-15);
  CHECK(max_abs(tp.qn - q) < 1e-15);
  const oracle::DiscreteModel o = oracle::iwp_quadrature(1, 1.0);
  CHECK(max_abs(tp.qn - o.q) < 1e-12);
}

TEST_CASE("transition for p=2 at half step matches quadrature") {
  const TransitionPair tp = transition_matrices(IWPModel(2, 1), 0.5);
  CHECK(tp.a(0, 0) == 1.0);
  CHECK(tp.a(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(tp.a(0, 2) == doctest::Approx(0.125).epsilon(1e-15));
  const oracle::DiscreteModel o = oracle::iwp_quadrature(2, 0.5);
  CHECK(max_abs(tp.a - o.a) < 1e-12);
  CHECK(max_abs(tp.qn - o.q) < 1e-12);
}

TEST_CASE("negative step is rejected") {
  CHECK_THROWS_AS(transition_matrices(IWPModel(1, 1), -1e-3), std::invalid_argument);
}

TEST_CASE("multi-dimensional transitions are the derivative-major kron extension") {
  for (int p = 1; p <= 3; ++p) {
    const TransitionPair t1 = transition_matrices(IWPModel(p, 1), 0.3);
    const TransitionPair t3 = transition_matrices(IWPModel(p, 3), 0.3);
    CHECK(max_abs(t3.a - oracle::kron_identity(t1.a, 3)) == 0.0);
    CHECK(max_abs(t3.qn - oracle::kron_identity(t1.qn, 3)) == 0.0);
  }
}

TEST_CASE("square-root noise factor reproduces the noise matrix") {
  for (int p = 1; p <= 4; ++p)
    for (double dt : {1e-4, 0.01, 0.3, 1.0, 2.5}) {
      const TransitionPair tp = transition_matrices(IWPModel(p, 2), dt);
      const MatD lower = tp.qn_sqrt.triangularView<Eigen::StrictlyLower>();
      CHECK(max_abs(lower) == 0.0);
      CHECK(max_abs(tp.qn_sqrt.transpose() * tp.qn_sqrt - tp.qn) <= 1e-13 * (1.0 + max_abs(tp.qn)));
    }
}

TEST_CASE("semigroup, consistency and PSD on random steps") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int p = 1; p <= 3; ++p) {
    const IWPModel m(p, 1);
    for (int trial = 0; trial < 20; ++trial) {
      const double h1 = unif(rng), h2 = unif(rng);
      const TransitionPair a = transition_matrices(m, h1), b = transition_matrices(m, h2),
                           ab = transition_matrices(m, h1 + h2);
      CHECK(max_abs(ab.a - b.a * a.a) < 1e-12);
      CHECK(max_abs(ab.qn - (b.a * a.qn * b.a.transpose() + b.qn)) < 1e-12);
      CHECK(max_abs(a.qn - a.qn.transpose()) == 0.0);
      const double min_eig = Eigen::SelfAdjointEigenSolver<MatD>(a.qn).eigenvalues().minCoeff();
      CHECK(min_eig >= -1e-10);
    }
  }
}

TEST_CASE("selectors pick position and first derivative") {
  const Selectors s = selectors(IWPModel(2, 3));
  CHECK(max_abs(s.e0 * s.e0.transpose() - MatD::Identity(3, 3)) == 0.0);
  CHECK(max_abs(s.e1 * s.e1.transpose() - MatD::Identity(3, 3)) == 0.0);
  CHECK(max_abs(s.e0 * s.e1.transpose()) == 0.0);
  CHECK(s.e1(1, 4) == 1.0);
}

namespace {

InputPolicy zero_policy(double horizon, int input_dim = 1) {
  return {PolicyBasis({0.0, horizon}, PolicyKind::CubicHermite, input_dim), VecD::Zero(2 * input_dim)};
}

}  // namespace

TEST_CASE("taylor init for a constant field") {
  auto field = [](const auto& t, const auto& x, const auto&) {
    using S = std::decay_t<decltype(t)>;
    return Vec<S>::Constant(x.size(), S(2.5)).eval();
  };
  auto jac = [](const auto& t, const auto& x, const auto&) {
    using S = std::decay_t<decltype(t)>;
    return Mat<S>::Zero(x.size(), x.size()).eval();
  };
  const ControlledIVP ivp = make_ivp("c", VecD::Constant(1, 0.7), 1.0, 1, field, jac);
  const VecD x = taylor_init(ivp, zero_policy(1.0), IWPModel(2, 1));
  CHECK(x(0) == 0.7);
  CHECK(x(1) == 2.5);
  CHECK(x(2) == 0.0);
}

TEST_CASE("taylor init for a linear field gives powers of F") {
  MatD f(2, 2);
  f << -0.4, 1.3, -2.0, 0.25;
  auto field = [f](const auto& t, const auto& x, const auto&) {
    using S = std::decay_t<decltype(t)>;
    Vec<S> dx(2);
    dx(0) = S(f(0, 0)) * x(0) + S(f(0, 1)) * x(1);
    dx(1) = S(f(1, 0)) * x(0) + S(f(1, 1)) * x(1);
    return dx;
  };
  auto jac = [f](const auto& t, const auto&, const auto&) {
    using S = std::decay_t<decltype(t)>;
    return f.cast<S>().eval();
  };
  VecD x0(2);
  x0 << 1.5, -0.5;
  const ControlledIVP ivp = make_ivp("lin", x0, 1.0, 1, field, jac);
  for (int p = 2; p <= 4; ++p) {
    const VecD x = taylor_init(ivp, zero_policy(1.0), IWPModel(p, 2));
    VecD expect = x0;
    for (int k = 0; k <= p; ++k) {
      CHECK(max_abs(x.segment(2 * k, 2) - expect) < 1e-14 * (1 + expect.norm()));
      expect = f * expect;
    }
  }
}

TEST_CASE("taylor init on the controlled example at p=1") {
  const Problem pr = logistic_example();
  for (double u0 : {0.0, 1.5, -3.0}) {
    const PolicyBasis basis(std::vector<double>{0.0, 5.0}, PolicyKind::PiecewiseConstant);
    const VecD theta = VecD::Constant(2, u0);
    const VecD x = taylor_init(pr.ivp, InputPolicy{basis, theta}, IWPModel(1, 2));
    CHECK(x(0) == 3.0);
    CHECK(x(1) == 1.0);
    CHECK(x(2) == doctest::Approx(u0 - 1.0));
    CHECK(x(3) == 3.0);
  }
}

TEST_CASE("taylor init higher components match hand-derived total derivatives") {
  // x' = x^2 - t x + u(t), differentiated by hand at t = 0.
  auto field = [](const auto& t, const auto& x, const auto& u) {
    using S = std::decay_t<decltype(t)>;
    Vec<S> dx(1);
    dx(0) = x(0) * x(0) - t * x(0) + u(0);
    return dx;
  };
  auto jac = [](const auto& t, const auto& x, const auto&) {
    using S = std::decay_t<decltype(t)>;
    Mat<S> j(1, 1);
    j(0, 0) = S(2.0) * x(0) - t;
    return j;
  };
  const ControlledIVP ivp = make_ivp("poly", VecD::Constant(1, 0.3), 1.0, 1, field, jac);
  const PolicyBasis basis(std::vector<double>{0.0, 0.5, 1.0}, PolicyKind::CubicHermite);
  VecD theta(3);
  theta << 0.2, -0.4, 1.0;
  const VecD x = taylor_init(ivp, InputPolicy{basis, theta}, IWPModel(3, 1));
  const double u0 = basis.evaluate<double>(0.0, theta)(0);
  const double u1 = basis.evaluate<double>(0.0, theta, 1)(0);
  const double u2 = basis.evaluate<double>(0.0, theta, 2)(0);
  const double x0 = 0.3;
  const double d1 = x0 * x0 + u0;
  const double d2 = 2 * x0 * d1 - x0 + u1;
  const double d3 = 2 * d1 * d1 + 2 * x0 * d2 - 2 * d1 + u2;
  CHECK(x(1) == doctest::Approx(d1).epsilon(1e-14));
  CHECK(x(2) == doctest::Approx(d2).epsilon(1e-14));
  CHECK(x(3) == doctest::Approx(d3).epsilon(1e-13));
}
