#include "pnmpc/prior.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>

namespace pnmpc {

namespace {

double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

// Expands a (p+1)x(p+1) one-dimensional matrix to d independent dimensions in
// derivative-major order.
MatD expand(const MatD& m, int d) {
  const Eigen::Index q = m.rows();
  MatD out = MatD::Zero(q * d, q * d);
  for (Eigen::Index i = 0; i < q; ++i)
    for (Eigen::Index k = 0; k < q; ++k)
      if (m(i, k) != 0.0)
        for (int j = 0; j < d; ++j) out(i * d + j, k * d + j) = m(i, k);
  return out;
}

// Cholesky factor of the step-independent noise Qbar_ij = 1 / (2p + 1 - i - j).
// With T = diag(dt^(p - i + 1/2) / (p - i)!), Qn = T Qbar T, so U T is an exact
// factor of Qn without factorizing Qn itself, whose entries span 2p + 1 powers of dt.
MatD preconditioned_noise_factor(int p) {
  MatD qbar(p + 1, p + 1);
  for (int i = 0; i <= p; ++i)
    for (int j = 0; j <= p; ++j) qbar(i, j) = 1.0 / (2 * p + 1 - i - j);
  return Eigen::LLT<MatD>(qbar).matrixU();
}

}  // namespace

IWPModel::IWPModel(int order, int dim) : order_(order), dim_(dim) {
  if (order < 1) throw std::invalid_argument("IWP order must be at least 1");
  if (dim < 1) throw std::invalid_argument("state dimension must be at least 1");
}

TransitionPair transition_matrices(const IWPModel& model, double dt) {
  if (!(dt >= 0.0)) throw std::invalid_argument("step size must be nonnegative");
  const int p = model.order();
  MatD a = MatD::Zero(p + 1, p + 1);
  MatD q(p + 1, p + 1);
  VecD scale(p + 1);
  for (int i = 0; i <= p; ++i) {
    for (int j = i; j <= p; ++j) a(i, j) = std::pow(dt, j - i) / factorial(j - i);
    for (int j = 0; j <= p; ++j) {
      const int e = 2 * p + 1 - i - j;
      q(i, j) = std::pow(dt, e) / (e * factorial(p - i) * factorial(p - j));
    }
    scale(i) = std::pow(dt, p - i + 0.5) / factorial(p - i);
  }
  const MatD factor = preconditioned_noise_factor(p) * scale.asDiagonal();

  TransitionPair tp;
  tp.dt = dt;
  tp.a = expand(a, model.dim());
  tp.qn = expand(q, model.dim());
  tp.qn_sqrt = expand(factor, model.dim());
  return tp;
}

Selectors selectors(const IWPModel& model) {
  const int d = model.dim();
  Selectors sel{MatD::Zero(d, model.state_size()), MatD::Zero(d, model.state_size())};
  sel.e0.leftCols(d).setIdentity();
  sel.e1.middleCols(d, d).setIdentity();
  return sel;
}

template <class S>
Vec<S> taylor_init(const ControlledIVP& ivp, const PolicyBasis& basis, const Vec<S>& theta,
                   const IWPModel& model) {
  using T = Taylor<S>;
  const int p = model.order();
  const int d = model.dim();
  if (ivp.dim() != d) throw std::invalid_argument("model dimension does not match the IVP");

  // Normalized coefficients of x(t) and u(t) around t = 0.
  std::vector<Vec<S>> xc{ivp.x0.template cast<S>()};
  std::vector<Vec<S>> uc;
  double fact = 1.0;
  for (int r = 0; r < p; ++r) {
    if (r > 0) fact *= r;
    uc.push_back(basis.evaluate<S>(0.0, theta, r) / S(fact));
  }
  const T time(std::vector<S>{S(0.0), S(1.0)});

  for (int k = 0; k < p; ++k) {
    Vec<T> x(d);
    for (int j = 0; j < d; ++j) {
      std::vector<S> c(k + 1);
      for (int r = 0; r <= k; ++r) c[r] = xc[r](j);
      x(j) = T(std::move(c));
    }
    Vec<T> u(ivp.input_dim);
    for (int j = 0; j < ivp.input_dim; ++j) {
      std::vector<S> c(k + 1);
      for (int r = 0; r <= k; ++r) c[r] = uc[r](j);
      u(j) = T(std::move(c));
    }
    const Vec<T> fx = ivp.field<T>(time, x, u);
    Vec<S> next(d);
    for (int j = 0; j < d; ++j) next(j) = fx(j)[k] / S(k + 1.0);
    xc.push_back(next);
  }

  Vec<S> init(model.state_size());
  double kfact = 1.0;
  for (int k = 0; k <= p; ++k) {
    if (k > 0) kfact *= k;
    init.segment(k * d, d) = xc[k] * S(kfact);
  }
  return init;
}

template Vec<double> taylor_init<double>(const ControlledIVP&, const PolicyBasis&, const Vec<double>&,
                                         const IWPModel&);
template Vec<Dual> taylor_init<Dual>(const ControlledIVP&, const PolicyBasis&, const Vec<Dual>&,
                                     const IWPModel&);

VecD taylor_init(const ControlledIVP& ivp, const InputPolicy& policy, const IWPModel& model) {
  return taylor_init<double>(ivp, policy.basis, policy.theta, model);
}

}  // namespace pnmpc
