#include <random>

#include "doctest.h"
#include "dense_adapter.hpp"
#include "pnmpc/filter.hpp"
#include "pnmpc/reference.hpp"

using namespace pnmpc;

namespace {

double max_abs(const MatD& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

GaussianBelief<double> belief(VecD mean, MatD cov_sqrt) { return {std::move(mean), std::move(cov_sqrt)}; }

template <class F, class J>
ControlledIVP scalar_ivp(const char* name, double x0, double horizon, F f, J j) {
  return make_ivp(name, VecD::Constant(1, x0), horizon, 1, f, j);
}

// Polynomial 2-d field with additive input; coefficients drawn per trial.
ControlledIVP random_polynomial_ivp(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  const double a1 = unif(rng), a2 = unif(rng), a3 = unif(rng), a4 = 0.5 * unif(rng);
  auto field = [=](const auto& t, const auto& x, const auto& u) {
    using S = std::decay_t<decltype(t)>;
    Vec<S> dx(2);
    dx(0) = S(a1) * x(1) + S(a2) * x(0) * x(1) + u(0);
    dx(1) = S(a3) * x(0) + S(a4) * x(1) * x(1);
    return dx;
  };
  auto jac = [=](const auto& t, const auto& x, const auto&) {
    using S = std::decay_t<decltype(t)>;
    Mat<S> j(2, 2);
    j(0, 0) = S(a2) * x(1);
    j(0, 1) = S(a1) + S(a2) * x(0);
    j(1, 0) = S(a3);
    j(1, 1) = S(2.0 * a4) * x(1);
    return j;
  };
  VecD x0(2);
  x0 << unif(rng), unif(rng);
  return make_ivp("random_poly", x0, 2.0, 1, field, jac);
}

}  // namespace

TEST_CASE("predict with identity dynamics leaves the belief unchanged") {
  TransitionPair tp;
  tp.dt = 0.0;
  tp.a = MatD::Identity(2, 2);
  tp.qn = tp.qn_sqrt = MatD::Zero(2, 2);
  MatD s(2, 2);
  s << 2.0, 0.5, 0.0, 1.0;
  const auto out = predict(belief(VecD::Ones(2), s), tp);
  CHECK(out.mean == VecD::Ones(2));
  CHECK(max_abs(out.covariance() - gram(s)) < 1e-15);
}

TEST_CASE("predict from a Dirac belief gives the process noise") {
  const TransitionPair tp = transition_matrices(IWPModel(1, 1), 1.0);
  const auto out = predict(belief(VecD::Ones(2), MatD::Zero(2, 2)), tp);
  CHECK(out.mean(0) == 2.0);
  CHECK(out.mean(1) == 1.0);
  CHECK(max_abs(out.covariance() - tp.qn) < 1e-15);
  const MatD lower = out.cov_sqrt.triangularView<Eigen::StrictlyLower>();
  CHECK(max_abs(lower) == 0.0);
}

TEST_CASE("linearization of linear and constant fields") {
  const IWPModel m(2, 2);
  const Selectors sel = selectors(m);
  MatD f(2, 2);
  f << 0.5, -1.0, 2.0, 0.0;
  auto lin_field = [f](const auto& t, const auto& x, const auto&) {
    using S = std::decay_t<decltype(t)>;
    Vec<S> dx(2);
    dx(0) = S(f(0, 0)) * x(0) + S(f(0, 1)) * x(1);
    dx(1) = S(f(1, 0)) * x(0) + S(f(1, 1)) * x(1);
    return dx;
  };
  auto lin_jac = [f](const auto& t, const auto&, const auto&) {
    using S = std::decay_t<decltype(t)>;
    return f.cast<S>().eval();
  };
  const ControlledIVP lin = make_ivp("lin", VecD::Zero(2), 1.0, 1, lin_field, lin_jac);
  const VecD xt = (VecD(2) << 0.3, -0.7).finished();
  const auto l1 = linearize<double>(lin, sel, 0.2, xt, VecD::Zero(1));
  CHECK(max_abs(l1.c - (sel.e1 - f * sel.e0)) < 1e-15);
  CHECK(max_abs(l1.b) < 1e-15);

  auto c_field = [](const auto& t, const auto& x, const auto&) {
    using S = std::decay_t<decltype(t)>;
    return Vec<S>::Constant(x.size(), S(4.0)).eval();
  };
  auto c_jac = [](const auto& t, const auto& x, const auto&) {
    using S = std::decay_t<decltype(t)>;
    return Mat<S>::Zero(x.size(), x.size()).eval();
  };
  const ControlledIVP cst = make_ivp("c", VecD::Zero(2), 1.0, 1, c_field, c_jac);
  const auto l2 = linearize<double>(cst, sel, 0.2, xt, VecD::Zero(1));
  CHECK(max_abs(l2.c - sel.e1) == 0.0);
  CHECK(l2.b == VecD::Constant(2, 4.0));
}

TEST_CASE("linearization of the controlled example at (3, 1)") {
  const Problem pr = logistic_example();
  const Selectors sel = selectors(IWPModel(1, 2));
  const VecD xt = (VecD(2) << 3.0, 1.0).finished();
  const VecD u = VecD::Constant(1, 0.25);
  const auto l = linearize<double>(pr.ivp, sel, 0.0, xt, u);
  MatD j(2, 2);
  j << 0.0, -1.0, 1.0, 0.0;
  CHECK(max_abs(l.c - (sel.e1 - j * sel.e0)) < 1e-15);
  const VecD f = pr.ivp.f(0.0, xt, u);
  CHECK(max_abs(l.b - (f - j * xt)) < 1e-15);
}

TEST_CASE("affine residual does not depend on the linearization point") {
  const Problem pr = make_problem("linear_decay");
  const IWPModel m(2, 1);
  const Selectors sel = selectors(m);
  const VecD u = VecD::Constant(1, 0.7);
  const VecD X = (VecD(3) << 0.2, -1.0, 0.5).finished();
  const auto a = linearize<double>(pr.ivp, sel, 0.1, VecD::Constant(1, -5.0), u);
  const auto b = linearize<double>(pr.ivp, sel, 0.1, VecD::Constant(1, 3.0), u);
  CHECK((a.c * X - a.b)(0) == doctest::Approx((b.c * X - b.b)(0)).epsilon(1e-15));
}

TEST_CASE("update with zero innovation keeps the mean and shrinks the covariance") {
  MatD s(2, 2);
  s << 1.0, 0.3, 0.0, 0.8;
  const VecD mean = (VecD(2) << 0.4, -0.2).finished();
  Linearization<double> lin{(MatD(1, 2) << 1.0, 0.5).finished(), VecD()};
  lin.b = lin.c * mean;
  const auto out = update(belief(mean, s), lin);
  CHECK(max_abs(out.belief.mean - mean) < 1e-15);
  CHECK(out.innovation.norm() < 1e-15);
  CHECK(out.belief.covariance().trace() < gram(s).trace());
  CHECK(std::abs((lin.c * out.belief.covariance() * lin.c.transpose())(0, 0)) < 1e-14);
}

TEST_CASE("scalar zero-noise update") {
  const VecD mean = (VecD(2) << 1.0, 0.0).finished();
  MatD s = MatD::Zero(2, 2);
  s(0, 0) = 2.0;  // variance 4 on the observed coordinate
  s(1, 1) = 1.0;
  const Linearization<double> lin{(MatD(1, 2) << 1.0, 0.0).finished(), VecD::Constant(1, 3.0)};
  const auto out = update(belief(mean, s), lin);
  CHECK(out.innovation(0) == 2.0);
  CHECK(out.belief.mean(0) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(out.belief.mean(1) == doctest::Approx(0.0));
  const MatD cov = out.belief.covariance();
  CHECK(std::abs(cov(0, 0)) < 1e-15);
  CHECK(cov(1, 1) == doctest::Approx(1.0));
  CHECK(std::abs(gram(out.s_sqrt)(0, 0) - 4.0) < 1e-14);
}

TEST_CASE("update without observation rows is the identity") {
  MatD s(2, 2);
  s << 1.0, 0.3, 0.0, 0.8;
  const VecD mean = VecD::Constant(2, 0.5);
  const Linearization<double> lin{MatD(0, 2), VecD(0)};
  const auto out = update(belief(mean, s), lin);
  CHECK(out.belief.mean == mean);
  CHECK(out.belief.cov_sqrt == s);
  CHECK(out.innovation.size() == 0);
}

TEST_CASE("update throws on an unobservable direction") {
  const Linearization<double> lin{(MatD(1, 2) << 1.0, 0.0).finished(), VecD::Constant(1, 1.0)};
  CHECK_THROWS_AS(update(belief(VecD::Zero(2), MatD::Zero(2, 2)), lin), SingularInnovationError);
}

TEST_CASE("rts on a single node returns the filtered belief") {
  const std::vector<GaussianBelief<double>> filtered{belief(VecD::Ones(2), MatD::Identity(2, 2))};
  const auto out = rts_pass(filtered, filtered, {});
  REQUIRE(out.size() == 1);
  CHECK(out[0].mean == filtered[0].mean);
  CHECK(out[0].cov_sqrt == filtered[0].cov_sqrt);
}

TEST_CASE("rts with identity dynamics propagates the terminal mean") {
  TransitionPair tp;
  tp.a = MatD::Identity(2, 2);
  tp.qn = tp.qn_sqrt = MatD::Zero(2, 2);
  MatD s(2, 2);
  s << 1.0, 0.2, 0.0, 0.5;
  std::vector<GaussianBelief<double>> filtered, predicted;
  for (int i = 0; i < 4; ++i) filtered.push_back(belief(VecD::Constant(2, i * 1.5 - 1.0), s));
  predicted.push_back(filtered[0]);
  for (int i = 1; i < 4; ++i) predicted.push_back(filtered[i - 1]);
  const auto out = rts_pass(filtered, predicted, std::vector<TransitionPair>(3, tp));
  for (const auto& b : out) CHECK(max_abs(b.mean - filtered.back().mean) < 1e-14);
}

TEST_CASE("rts matches a dense smoother on a three-node linear problem") {
  const Problem pr = make_problem("linear_decay");
  const Grids g = Grids::refine({0.0, 1.0, 2.0}, 1);
  const IWPModel m(1, 1);
  const InputPolicy pol{PolicyBasis(g.control, PolicyKind::CubicHermite), (VecD(3) << 0.5, -0.2, 0.1).finished()};
  const auto post = ode_filter_smoother(pr.ivp, pol, g, m);
  const auto ref = oracle::dense_smoother(dense_problem(pr.ivp, pol, g, m));
  for (int i = 0; i < 3; ++i) {
    CHECK(max_abs(post.means[i] - ref.smoothed_mean[i].cast<double>()) < 1e-12);
    CHECK(max_abs(gram(post.cov_sqrt[i]) - ref.smoothed_cov[i].cast<double>()) < 1e-12);
  }
}

TEST_CASE("terminal smoothed belief equals the terminal filtered belief") {
  const Problem pr = vanderpol_example();
  const Grids g = Grids::uniform(5.0, 20, 40);
  const InputPolicy pol{PolicyBasis(g.control, PolicyKind::CubicHermite), VecD::Constant(21, -0.5)};
  const auto post = ode_filter_smoother(pr.ivp, pol, g, IWPModel(2, 2));
  CHECK(post.means.back() == post.filtered.back().mean);
  CHECK(max_abs(gram(post.cov_sqrt.back()) - gram(post.filtered.back().cov_sqrt)) < 1e-14);
}

TEST_CASE("affine problem: EKS and IEKS equal the dense smoother") {
  const Problem pr = make_problem("linear_decay");
  const Grids g = Grids::uniform(3.0, 7, 49);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  VecD theta(8);
  for (int i = 0; i < 8; ++i) theta(i) = nd(rng);
  const InputPolicy pol{PolicyBasis(g.control, PolicyKind::CubicHermite), theta};
  for (int p = 1; p <= 3; ++p) {
    const IWPModel m(p, 1);
    const auto ref = oracle::dense_smoother(dense_problem(pr.ivp, pol, g, m));
    for (SmootherMode mode : {SmootherMode::EKS, SmootherMode::IEKS}) {
      SmootherOptions opt;
      opt.mode = mode;
      const auto post = ode_filter_smoother(pr.ivp, pol, g, m, opt);
      double mean_err = 0.0, cov_err = 0.0;
      for (std::size_t i = 0; i < post.means.size(); ++i) {
        mean_err = std::max(mean_err, max_abs(post.means[i] - ref.smoothed_mean[i].cast<double>()));
        const MatD c = ref.smoothed_cov[i].cast<double>();
        cov_err = std::max(cov_err, max_abs(gram(post.cov_sqrt[i]) - c) / std::max(max_abs(c), 1e-300));
      }
      CHECK_MESSAGE(mean_err < 1e-10, "p=", p);
      CHECK_MESSAGE(cov_err < 1e-8, "p=", p);
      CHECK(post.calibrated_kappa == doctest::Approx(static_cast<double>(ref.kappa)).epsilon(1e-10));
    }
  }
}

TEST_CASE("calibration formula examples") {
  FilterStats<double> zero;
  zero.innovations = {VecD::Zero(1), VecD::Zero(1)};
  zero.s_sqrt = {MatD::Identity(1, 1), MatD::Identity(1, 1)};
  CHECK(calibrate(zero, 2, 1) == 0.0);

  FilterStats<double> one;
  one.innovations = {VecD::Constant(1, 2.0)};
  one.s_sqrt = {MatD::Constant(1, 1, 2.0)};
  CHECK(calibrate(one, 1, 1) == doctest::Approx(1.0).epsilon(1e-15));

  FilterStats<double> two;
  two.innovations = {VecD::Constant(1, 1.0), VecD::Constant(1, 3.0)};
  two.s_sqrt = {MatD::Constant(1, 1, 1.0), MatD::Constant(1, 1, 3.0)};
  CHECK(calibrate(two, 2, 1) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("calibrated diffusion matches the dense formula on random nonlinear problems") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 6; ++trial) {
    const ControlledIVP ivp = random_polynomial_ivp(rng);
    const Grids g = Grids::uniform(ivp.horizon, 4, 40);
    std::normal_distribution<double> nd;
    VecD theta(5);
    for (int i = 0; i < 5; ++i) theta(i) = nd(rng);
    const InputPolicy pol{PolicyBasis(g.control, PolicyKind::CubicHermite), theta};
    const IWPModel m(1 + trial % 2, 2);
    const auto post = ode_filter_smoother(ivp, pol, g, m);
    // formula on the filter's own residuals, dense solve
    long double acc = 0;
    for (std::size_t i = 0; i < post.stats.innovations.size(); ++i) {
      const oracle::MatL s = gram(post.stats.s_sqrt[i]).cast<long double>();
      const oracle::VecL r = post.stats.innovations[i].cast<long double>();
      acc += r.dot(s.inverse() * r);
    }
    const double formula = static_cast<double>(acc / (post.stats.innovations.size() * 2.0L));
    CHECK(post.calibrated_kappa == doctest::Approx(formula).epsilon(1e-12));
    // full independent filter
    const auto ref = oracle::dense_smoother(dense_problem(ivp, pol, g, m));
    CHECK(post.calibrated_kappa == doctest::Approx(static_cast<double>(ref.kappa)).epsilon(1e-8));
  }
}

TEST_CASE("external diffusion never changes means or unscaled factors") {
  const Problem pr = vanderpol_example();
  const Grids g = Grids::uniform(5.0, 20, 40);
  const InputPolicy pol{PolicyBasis(g.control, PolicyKind::CubicHermite), VecD::LinSpaced(21, -1.0, 1.0)};
  for (SmootherMode mode : {SmootherMode::EKS, SmootherMode::IEKS}) {
    SmootherOptions base;
    base.mode = mode;
    const auto ref = ode_filter_smoother(pr.ivp, pol, g, IWPModel(2, 2), base);
    for (double kappa : {0.1, 1.0, 10.0}) {
      SmootherOptions opt = base;
      opt.diffusion = kappa;
      const auto post = ode_filter_smoother(pr.ivp, pol, g, IWPModel(2, 2), opt);
      CHECK(post.kappa == kappa);
      CHECK(post.calibrated_kappa == ref.calibrated_kappa);
      for (std::size_t i = 0; i < post.means.size(); ++i) {
        CHECK(post.means[i] == ref.means[i]);
        CHECK(post.cov_sqrt[i] == ref.cov_sqrt[i]);
        CHECK(post.filtered[i].mean == ref.filtered[i].mean);
        CHECK(post.filtered[i].cov_sqrt == ref.filtered[i].cov_sqrt);
      }
    }
  }
}

TEST_CASE("zero field gives an exact zero-uncertainty posterior") {
  const Problem pr = make_problem("zero");
  for (int p = 1; p <= 3; ++p)
    for (int n : {1, 4}) {
      const Grids g = Grids::uniform(1.0, 1, n);
      const InputPolicy pol{PolicyBasis(g.control, PolicyKind::CubicHermite), VecD::Zero(2)};
      for (SmootherMode mode : {SmootherMode::EKS, SmootherMode::IEKS}) {
        SmootherOptions opt;
        opt.mode = mode;
        const auto post = ode_filter_smoother(pr.ivp, pol, g, IWPModel(p, 1), opt);
        CHECK(post.calibrated_kappa == 0.0);
        for (std::size_t i = 0; i < post.means.size(); ++i) {
          CHECK(post.means[i].isZero(0.0));
          CHECK(post.state_covariance(static_cast<int>(i), 1).isZero(0.0));
          CHECK((post.kappa * gram(post.cov_sqrt[i])).isZero(0.0));
        }
      }
    }
}

TEST_CASE("constant field is solved exactly") {
  const Problem pr = make_problem("constant");
  const Grids g = Grids::uniform(1.0, 2, 8);
  const InputPolicy pol{PolicyBasis(g.control, PolicyKind::CubicHermite), VecD::Zero(3)};
  const auto post = ode_filter_smoother(pr.ivp, pol, g, IWPModel(1, 1));
  CHECK(post.calibrated_kappa == 0.0);
  for (std::size_t i = 0; i < post.means.size(); ++i)
    CHECK(post.means[i](0) == doctest::Approx(g.integration[i]).epsilon(1e-14));
}

TEST_CASE("IEKS stops within its budget and below tolerance") {
  const Problem pr = vanderpol_example();
  const Grids g = Grids::uniform(5.0, 20, 80);
  const InputPolicy pol{PolicyBasis(g.control, PolicyKind::CubicHermite), VecD::Constant(21, 0.3)};
  SmootherOptions opt;
  opt.mode = SmootherMode::IEKS;
  const auto post = ode_filter_smoother(pr.ivp, pol, g, IWPModel(2, 2), opt);
  CHECK(post.iterations <= opt.max_iter);
  CHECK(post.iterations >= 2);
  if (post.iterations < opt.max_iter) CHECK(post.final_change < opt.tol);
  opt.max_iter = 2;
  const auto capped = ode_filter_smoother(pr.ivp, pol, g, IWPModel(2, 2), opt);
  CHECK(capped.iterations == 2);
  opt.max_iter = 0;
  CHECK_THROWS_AS(ode_filter_smoother(pr.ivp, pol, g, IWPModel(2, 2), opt), std::invalid_argument);
}

TEST_CASE("all smoothed covariances are positive semidefinite") {
  for (const char* name : {"vanderpol_input", "scalar_logistic"}) {
    const Problem pr = make_problem(name);
    for (int p = 1; p <= 3; ++p) {
      const Grids g = Grids::uniform(pr.ivp.horizon, pr.settings.intervals, 4 * pr.settings.intervals);
      const InputPolicy pol{PolicyBasis(g.control, PolicyKind::CubicHermite),
                            VecD::Constant(pr.settings.intervals + 1, 0.2)};
      const auto post = ode_filter_smoother(pr.ivp, pol, g, IWPModel(p, pr.ivp.dim()));
      for (const MatD& f : post.cov_sqrt) {
        const MatD c = gram(f);
        const auto ev = Eigen::SelfAdjointEigenSolver<MatD>(c).eigenvalues();
        CHECK(ev.minCoeff() >= -1e-10 * (1.0 + ev.maxCoeff()));
      }
    }
  }
}

TEST_CASE("convergence order on the scalar logistic equation") {
  const Problem pr = make_problem("scalar_logistic");
  for (int p = 1; p <= 2; ++p) {
    std::vector<double> errs;
    for (int n : {40, 80, 160, 320, 640}) {
      const Grids g = Grids::uniform(5.0, 1, n);
      const InputPolicy pol{PolicyBasis(g.control, PolicyKind::CubicHermite), VecD::Zero(2)};
      const auto post = ode_filter_smoother(pr.ivp, pol, g, IWPModel(p, 1));
      double e = 0.0;
      for (std::size_t i = 0; i < post.means.size(); ++i)
        e = std::max(e, std::abs(post.means[i](0) - pr.ivp.exact_solution(g.integration[i])(0)));
      errs.push_back(e);
    }
    for (std::size_t i = 1; i < errs.size(); ++i) CHECK(errs[i - 1] / errs[i] >= std::pow(2.0, p - 0.5));
  }
}

TEST_CASE("solver mean stays within three calibrated sigmas of the reference") {
  const Problem pr = vanderpol_example();
  const Grids g = Grids::uniform(5.0, 20, 40);
  const InputPolicy pol{PolicyBasis(g.control, PolicyKind::CubicHermite), VecD::Zero(21)};
  const ReferenceSolution ref = solve_reference(pr.ivp, pol);
  for (int p = 1; p <= 3; ++p) {
    const auto post = ode_filter_smoother(pr.ivp, pol, g, IWPModel(p, 2));
    int inside = 0, total = 0;
    for (std::size_t i = 0; i < post.means.size(); ++i) {
      const MatD cov = post.state_covariance(static_cast<int>(i), 2);
      const VecD x = ref.state_at(g.integration[i]);
      for (int j = 0; j < 2; ++j) {
        ++total;
        if (std::abs(post.means[i](j) - x(j)) <= 3.0 * std::sqrt(cov(j, j)) + 1e-12) ++inside;
      }
    }
    CHECK_MESSAGE(inside >= 0.95 * total, "p=", p, " inside=", inside, "/", total);
  }
}

TEST_CASE("the printed controlled example escapes in finite time without input") {
  const Problem pr = logistic_example();
  const Grids g = Grids::uniform(5.0, 20, 40);
  const InputPolicy pol{PolicyBasis(g.control, PolicyKind::CubicHermite), VecD::Zero(21)};
  ReferenceOptions opt;
  opt.stop_at_escape = true;
  const ReferenceSolution ref = solve_reference(pr.ivp, pol, opt);
  REQUIRE(ref.escape_time.has_value());
  CHECK(*ref.escape_time == doctest::Approx(0.9702).epsilon(1e-3));
  CHECK_THROWS_AS(solve_reference(pr.ivp, pol), StiffnessError);
}

TEST_CASE("non-finite states raise a divergence error naming the step") {
  auto field = [](const auto& t, const auto& x, const auto&) {
    using S = std::decay_t<decltype(t)>;
    Vec<S> dx(1);
    dx(0) = x(0) * x(0) * x(0) * x(0);
    return dx;
  };
  auto jac = [](const auto& t, const auto& x, const auto&) {
    using S = std::decay_t<decltype(t)>;
    Mat<S> j(1, 1);
    j(0, 0) = S(4.0) * x(0) * x(0) * x(0);
    return j;
  };
  const ControlledIVP ivp = scalar_ivp("blowup", 1e70, 5.0, field, jac);
  const Grids g = Grids::uniform(5.0, 1, 10);
  const InputPolicy pol{PolicyBasis(g.control, PolicyKind::CubicHermite), VecD::Zero(2)};
  try {
    ode_filter_smoother(ivp, pol, g, IWPModel(1, 1));
    FAIL("expected a divergence error");
  } catch (const DivergenceError& e) {
    CHECK(e.step() >= 1);
    CHECK(e.step() <= 10);
  }
}
