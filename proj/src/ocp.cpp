#include "pnmpc/ocp.hpp"

#include <cmath>
#include <exception>
#include <sstream>

#include <Eigen/Cholesky>

namespace pnmpc {

CostMode parse_cost_mode(const std::string& s) {
  if (s == "proposed") return CostMode::Proposed;
  if (s == "classical") return CostMode::Classical;
  throw std::invalid_argument("unknown cost mode: " + s);
}

std::string to_string(CostMode mode) { return mode == CostMode::Proposed ? "proposed" : "classical"; }

namespace {

std::string describe(const VecD& theta) {
  std::ostringstream os;
  os.precision(17);
  os << "[";
  for (Eigen::Index i = 0; i < theta.size(); ++i) os << (i ? ", " : "") << theta(i);
  os << "]";
  return os.str();
}

void require_spd(const MatD& m, const char* name) {
  if (m.rows() == 0 || m.rows() != m.cols()) throw std::invalid_argument(std::string(name) + " must be square");
  if (!m.isApprox(m.transpose(), 1e-12)) throw std::invalid_argument(std::string(name) + " must be symmetric");
  Eigen::LLT<MatD> llt(m);
  if (llt.info() != Eigen::Success) throw std::invalid_argument(std::string(name) + " must be positive definite");
}

}  // namespace

CostEvaluationError::CostEvaluationError(const std::string& what, VecD theta)
    : std::runtime_error(what + " (theta = " + describe(theta) + ")"), theta_(std::move(theta)) {}

OCPSpec::OCPSpec(MatD q_cost, MatD r_cost, Grids grids, IWPModel model, CostMode mode, PolicyKind policy_kind,
                 SmootherOptions smoother, std::optional<Bounds> bounds)
    : q_(std::move(q_cost)),
      r_(std::move(r_cost)),
      grids_(std::move(grids)),
      model_(model),
      mode_(mode),
      policy_kind_(policy_kind),
      smoother_(smoother),
      bounds_(std::move(bounds)) {
  require_spd(q_, "Q_cost");
  require_spd(r_, "R_cost");
  if (q_.rows() != model_.dim()) throw std::invalid_argument("Q_cost does not match the state dimension");
  if (bounds_) {
    const int m = parameter_count();
    if (bounds_->lower.size() != m || bounds_->upper.size() != m)
      throw std::invalid_argument("bounds do not match the parameter count");
    if ((bounds_->lower.array() > bounds_->upper.array()).any())
      throw std::invalid_argument("inconsistent bounds: lo > hi");
  }
}

OCPSpec OCPSpec::with_mode(CostMode mode) const {
  OCPSpec s = *this;
  s.mode_ = mode;
  return s;
}

OCPSpec OCPSpec::with_weights(MatD q_cost, MatD r_cost) const {
  return OCPSpec(std::move(q_cost), std::move(r_cost), grids_, model_, mode_, policy_kind_, smoother_, bounds_);
}

OCPSpec make_spec(const Problem& problem, CostMode mode, int n_int, SmootherOptions smoother) {
  const Grids grids = Grids::uniform(problem.ivp.horizon, problem.settings.intervals, n_int);
  const int m = problem.ivp.input_dim * (grids.intervals() + 1);
  Bounds bounds{VecD::Constant(m, problem.settings.lower_bound), VecD::Constant(m, problem.settings.upper_bound)};
  return OCPSpec(problem.settings.q_cost, problem.settings.r_cost, grids, IWPModel(problem.settings.order, problem.ivp.dim()), mode,
                 problem.settings.policy_kind, smoother, bounds);
}

namespace {

template <class S>
struct CostTerms {
  S total{0.0};
  std::vector<NodeCost> per_node;
};

template <class S>
CostTerms<S> accumulate(const OCPSpec& spec, const PolicyBasis& basis, const Vec<S>& theta,
                        const PosteriorTrajectory<S>& post) {
  const Grids& g = spec.grids();
  const int d = spec.model().dim();
  const Mat<S> q = spec.q_cost().cast<S>();
  const Mat<S> r = spec.r_cost().cast<S>();
  CostTerms<S> out;
  out.per_node.reserve(g.intervals());
  for (int k = 0; k < g.intervals(); ++k) {
    const double t = g.control[k];
    const S half_dt((g.control[k + 1] - t) / 2.0);
    const int i = g.integration_index(k);
    const Vec<S> x = post.means[i].head(d);
    const Vec<S> u = basis.evaluate<S>(t, theta);
    const S state = half_dt * x.dot(q * x);
    const S input = half_dt * u.dot(r * u);
    S trace(0.0);
    if (spec.mode() == CostMode::Proposed) {
      const Mat<S> f = post.cov_sqrt[i].leftCols(d);
      trace = half_dt * post.kappa * (q * (f.transpose() * f)).trace();
    }
    out.total += state + input + trace;
    out.per_node.push_back({value_of(state), value_of(input), value_of(trace)});
  }
  return out;
}

}  // namespace

template <class S>
S expected_cost_value(const OCPSpec& spec, const ControlledIVP& ivp, const Vec<S>& theta) {
  const PolicyBasis basis = spec.basis();
  if (theta.size() != basis.parameter_count()) throw std::invalid_argument("theta has the wrong length");
  const PosteriorTrajectory<S> post =
      ode_filter_smoother<S>(ivp, basis, theta, spec.grids(), spec.model(), spec.smoother());
  return accumulate<S>(spec, basis, theta, post).total;
}

template double expected_cost_value<double>(const OCPSpec&, const ControlledIVP&, const Vec<double>&);
template Dual expected_cost_value<Dual>(const OCPSpec&, const ControlledIVP&, const Vec<Dual>&);

CostReport cost_from_posterior(const OCPSpec& spec, const VecD& theta, const PosteriorTrajectory<double>& post) {
  const CostTerms<double> terms = accumulate<double>(spec, spec.basis(), theta, post);
  return {terms.total, terms.per_node, post.kappa};
}

CostReport expected_cost(const OCPSpec& spec, const ControlledIVP& ivp, const VecD& theta) {
  const PolicyBasis basis = spec.basis();
  if (theta.size() != basis.parameter_count()) throw std::invalid_argument("theta has the wrong length");
  try {
    const PosteriorTrajectory<double> post =
        ode_filter_smoother<double>(ivp, basis, theta, spec.grids(), spec.model(), spec.smoother());
    return cost_from_posterior(spec, theta, post);
  } catch (const DivergenceError& e) {
    throw CostEvaluationError(e.what(), theta);
  } catch (const SingularInnovationError& e) {
    throw CostEvaluationError(e.what(), theta);
  }
}

double riemann_cost(const OCPSpec& spec, const VecD& theta, const std::vector<VecD>& node_states) {
  const Grids& g = spec.grids();
  if (static_cast<int>(node_states.size()) < g.intervals())
    throw std::invalid_argument("need one state per control interval");
  const PolicyBasis basis = spec.basis();
  double total = 0.0;
  for (int k = 0; k < g.intervals(); ++k) {
    const double t = g.control[k];
    const VecD u = basis.evaluate<double>(t, theta);
    const VecD& x = node_states[k];
    total += (g.control[k + 1] - t) / 2.0 * (x.dot(spec.q_cost() * x) + u.dot(spec.r_cost() * u));
  }
  return total;
}

namespace {

double directional_derivative(const OCPSpec& spec, const ControlledIVP& ivp, const VecD& theta, Eigen::Index j) {
  Vec<Dual> seeded = theta.cast<Dual>();
  seeded(j).d = 1.0;
  return expected_cost_value<Dual>(spec, ivp, seeded).d;
}

}  // namespace

VecD gradient(const OCPSpec& spec, const ControlledIVP& ivp, const VecD& theta) {
  const Eigen::Index m = theta.size();
  VecD g(m);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (Eigen::Index j = 0; j < m; ++j) {
    try {
      g(j) = directional_derivative(spec, ivp, theta, j);
    } catch (...) {
#pragma omp critical(pnmpc_gradient_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) {
    try {
      std::rethrow_exception(failure);
    } catch (const DivergenceError& e) {
      throw CostEvaluationError(e.what(), theta);
    } catch (const SingularInnovationError& e) {
      throw CostEvaluationError(e.what(), theta);
    }
  }
  return g;
}

VecD gradient_serial(const OCPSpec& spec, const ControlledIVP& ivp, const VecD& theta) {
  VecD g(theta.size());
  for (Eigen::Index j = 0; j < theta.size(); ++j) g(j) = directional_derivative(spec, ivp, theta, j);
  return g;
}

VecD finite_difference_gradient(const OCPSpec& spec, const ControlledIVP& ivp, const VecD& theta) {
  VecD g(theta.size());
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    const double h = 1e-6 * (1.0 + std::abs(theta(j)));
    VecD plus = theta, minus = theta;
    plus(j) += h;
    minus(j) -= h;
    g(j) = (expected_cost_value<double>(spec, ivp, plus) - expected_cost_value<double>(spec, ivp, minus)) / (2 * h);
  }
  return g;
}

OCPSolution solve_ocp(const OCPSpec& spec, const ControlledIVP& ivp, const VecD& theta0,
                      const OptimizerOptions& options) {
  const int m = spec.parameter_count();
  if (theta0.size() != m) throw std::invalid_argument("theta0 has the wrong length");
  if (!theta0.allFinite()) throw std::invalid_argument("theta0 is not finite");
  const double inf = std::numeric_limits<double>::infinity();
  const VecD lower = spec.bounds() ? spec.bounds()->lower : VecD::Constant(m, -inf);
  const VecD upper = spec.bounds() ? spec.bounds()->upper : VecD::Constant(m, inf);

  const VecD start = theta0.cwiseMax(lower).cwiseMin(upper);
  const double f0 = expected_cost(spec, ivp, start).total;  // throws CostEvaluationError on divergence
  if (!std::isfinite(f0)) throw CostEvaluationError("expected cost is not finite at theta0", start);

  BoxObjective objective;
  objective.value = [&](const VecD& th) { return expected_cost_value<double>(spec, ivp, th); };
  objective.gradient = [&](const VecD& th) { return gradient(spec, ivp, th); };
  OptimizerResult res = minimize_box(objective, start, lower, upper, options);

  OCPSolution sol;
  sol.theta = res.x;
  sol.report = expected_cost(spec, ivp, res.x);
  sol.trace = std::move(res.trace);
  sol.converged = res.converged;
  sol.status = std::move(res.status);
  return sol;
}

}  // namespace pnmpc
